#include "gmp/json_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gmp/error.hpp"

namespace gmp {
namespace {

using json = nlohmann::json;

json parse(const std::string& text, const char* what) {
  try {
    json j = json::parse(text);
    if (!j.is_object() && !j.is_array()) throw Error(std::string(what) + ": expected a JSON document");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw Error("field '" + field + "' must be a number");
  return j.get<double>();
}

Eigen::VectorXd vec(const json& j, const std::string& field, int expected = -1) {
  if (!j.is_array()) throw Error("field '" + field + "' must be an array");
  if (expected >= 0 && static_cast<int>(j.size()) != expected) {
    throw DimensionError("field '" + field + "' has " + std::to_string(j.size()) +
                         " entries, expected " + std::to_string(expected));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = number(j[i], field + "[" + std::to_string(i) + "]");
  }
  return v;
}

KeypointSet keypoints(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != kKeypointCount) {
    throw DimensionError("field '" + field + "' must hold " + std::to_string(kKeypointCount) +
                         " points");
  }
  KeypointSet p{};
  for (int k = 0; k < kKeypointCount; ++k) p[k] = vec(j[k], field + "[" + std::to_string(k) + "]", 3);
  return p;
}

bool boolean(const json& j, const std::string& field) {
  if (!j.is_boolean()) throw Error("field '" + field + "' must be true or false");
  return j.get<bool>();
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw Error(std::string(what) + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw Error(std::string(what) + ": unknown field '" + it.key() + "'");
  }
}

}  // namespace

ControlStateSample parse_control_state(const std::string& text) {
  const json j = parse(text, "control state");
  check_keys(j,
             {"v_xy", "v_z", "w", "g_xy", "q", "dq", "ddq", "tau", "a_dot", "a_ddot", "q_default",
              "p_key", "t_air", "foot_contact", "collision", "termination"},
             "control state");
  ControlStateSample s;
  if (j.contains("v_xy")) s.v_xy = vec(j["v_xy"], "v_xy", 2);
  if (j.contains("v_z")) s.v_z = number(j["v_z"], "v_z");
  if (j.contains("w")) s.w = vec(j["w"], "w", 3);
  if (j.contains("g_xy")) s.g_xy = vec(j["g_xy"], "g_xy", 2);
  for (auto [name, field] : {std::pair{"q", &s.q}, std::pair{"dq", &s.dq}, std::pair{"ddq", &s.ddq},
                             std::pair{"tau", &s.tau}, std::pair{"q_default", &s.q_default}}) {
    if (j.contains(name)) *field = vec(j[name], name, kDofCount);
  }
  if (j.contains("a_dot")) s.a_dot = vec(j["a_dot"], "a_dot");
  if (j.contains("a_ddot")) s.a_ddot = vec(j["a_ddot"], "a_ddot", static_cast<int>(s.a_dot.size()));
  if (s.a_ddot.size() != s.a_dot.size()) {
    throw DimensionError("fields 'a_dot' and 'a_ddot' must have the same length");
  }
  if (j.contains("p_key")) s.p_key = keypoints(j["p_key"], "p_key");
  if (j.contains("t_air")) {
    const Eigen::VectorXd t = vec(j["t_air"], "t_air", 2);
    s.t_air = {t[0], t[1]};
  }
  if (j.contains("foot_contact")) {
    const json& f = j["foot_contact"];
    if (!f.is_array() || f.size() != 2) throw DimensionError("field 'foot_contact' must hold 2 flags");
    s.foot_contact = {boolean(f[0], "foot_contact[0]"), boolean(f[1], "foot_contact[1]")};
  }
  if (j.contains("collision")) s.collision = boolean(j["collision"], "collision");
  if (j.contains("termination")) s.termination = boolean(j["termination"], "termination");
  s.validate();
  return s;
}

ReferenceFrame parse_reference_frame(const std::string& text) {
  const json j = parse(text, "reference frame");
  check_keys(j, {"q_ref", "p_ref"}, "reference frame");
  if (!j.contains("q_ref") || !j.contains("p_ref")) {
    throw Error("reference frame needs both 'q_ref' and 'p_ref'");
  }
  ReferenceFrame r;
  r.q_ref = vec(j["q_ref"], "q_ref", kDofCount);
  r.p_ref = keypoints(j["p_ref"], "p_ref");
  if (!r.q_ref.allFinite()) throw Error("field 'q_ref' is not finite");
  return r;
}

std::vector<Episode> parse_episodes(const std::string& text) {
  const json j = parse(text, "episodes");
  if (!j.is_array()) throw Error("episodes must be a JSON array");
  std::vector<Episode> out;
  for (size_t e = 0; e < j.size(); ++e) {
    if (!j[e].is_array()) throw Error("episode " + std::to_string(e) + " must be an array");
    Episode ep;
    for (size_t t = 0; t < j[e].size(); ++t) {
      const Eigen::VectorXd v =
          vec(j[e][t], "episodes[" + std::to_string(e) + "][" + std::to_string(t) + "]", 4);
      ep.push_back({v.head<2>(), v.tail<2>()});
    }
    out.push_back(std::move(ep));
  }
  return out;
}

std::string breakdown_to_json(const RewardBreakdown& b) {
  json terms = json::array();
  for (const auto& t : b.terms) {
    terms.push_back({{"name", t.name}, {"raw", t.raw}, {"weight", t.weight}, {"weighted", t.weighted}});
  }
  return json{{"terms", terms},
              {"guidance", b.guidance},
              {"task", b.task},
              {"regularization", b.regularization},
              {"total", b.total}}
      .dump(2);
}

std::string report_to_json(const MetricReport& r) {
  json j{{"jfid", r.jfid}, {"kfid", r.kfid}, {"jdtw", r.jdtw}, {"kdtw", r.kdtw}};
  j["melv"] = r.has_melv ? json(r.melv) : json(nullptr);
  return j.dump(2);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace gmp
