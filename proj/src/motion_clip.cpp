#include "gmp/motion_clip.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gmp {
namespace {

constexpr const char* kClipMagic = "gmp-clip";
constexpr int kClipVersion = 1;

void append_double(std::string& out, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view token, int line) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("clip parse error at line " + std::to_string(line) +
                     ": bad number '" + std::string(token) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

void MotionClip::validate() const {
  if (!(fps > 0.0) || !std::isfinite(fps)) throw Error("clip fps must be > 0");
  if (frames.size() < 2) throw Error("clip too short: need at least 2 frames");
  for (size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].q.size() != kDofCount) {
      throw DimensionError("clip frame " + std::to_string(t) +
                           ": joint dimension mismatch");
    }
  }
  if (contacts && contacts->size() != frames.size()) {
    throw DimensionError("contact label count does not match frame count");
  }
}

std::vector<std::string> joint_names_of(const RobotModel& model) {
  std::vector<std::string> names;
  for (const auto& j : model.joints()) names.push_back(j.name);
  return names;
}

std::string clip_to_string(const MotionClip& clip) {
  clip.validate();
  std::string out;
  out.reserve(clip.frames.size() * 600);
  out += kClipMagic;
  out += ' ';
  out += std::to_string(kClipVersion);
  out += "\nfps ";
  append_double(out, clip.fps);
  out += "\njoints ";
  out += std::to_string(clip.joint_names.size());
  for (const auto& n : clip.joint_names) {
    out += ' ';
    out += n;
  }
  out += "\ncontacts ";
  out += clip.contacts ? '1' : '0';
  out += "\nframes ";
  out += std::to_string(clip.frames.size());
  out += '\n';
  for (size_t t = 0; t < clip.frames.size(); ++t) {
    const auto& f = clip.frames[t];
    const auto& p = f.base.position;
    const auto& o = f.base.orientation;
    const double head[7] = {p.x(), p.y(), p.z(), o.w(), o.x(), o.y(), o.z()};
    for (int i = 0; i < 7; ++i) {
      if (i) out += ' ';
      append_double(out, head[i]);
    }
    for (int i = 0; i < f.q.size(); ++i) {
      out += ' ';
      append_double(out, f.q[i]);
    }
    if (clip.contacts) {
      out += (*clip.contacts)[t].left ? " 1" : " 0";
      out += (*clip.contacts)[t].right ? " 1" : " 0";
    }
    out += '\n';
  }
  return out;
}

MotionClip clip_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      return split(line);
    }
    throw ParseError("clip parse error: unexpected end of file at line " +
                     std::to_string(lineno));
  };

  MotionClip clip;
  auto tok = next_line();
  if (tok.size() != 2 || tok[0] != kClipMagic) {
    throw ParseError("clip parse error: missing 'gmp-clip' header");
  }
  if (tok[1] != std::to_string(kClipVersion)) {
    throw ParseError("clip parse error: unsupported version " +
                     std::string(tok[1]));
  }
  tok = next_line();
  if (tok.size() != 2 || tok[0] != "fps") {
    throw ParseError("clip parse error: expected 'fps'");
  }
  clip.fps = parse_double(tok[1], lineno);
  tok = next_line();
  if (tok.size() < 2 || tok[0] != "joints") {
    throw ParseError("clip parse error: expected 'joints'");
  }
  const int n_joints = static_cast<int>(parse_double(tok[1], lineno));
  if (static_cast<int>(tok.size()) != n_joints + 2) {
    throw ParseError("clip parse error: joint name count mismatch");
  }
  if (n_joints != kDofCount) {
    throw DimensionError("clip joint dimension mismatch: expected " +
                         std::to_string(kDofCount) + ", got " +
                         std::to_string(n_joints));
  }
  for (int i = 0; i < n_joints; ++i) clip.joint_names.emplace_back(tok[2 + i]);
  tok = next_line();
  if (tok.size() != 2 || tok[0] != "contacts" ||
      (tok[1] != "0" && tok[1] != "1")) {
    throw ParseError("clip parse error: expected 'contacts 0|1'");
  }
  const bool has_contacts = tok[1] == "1";
  tok = next_line();
  if (tok.size() != 2 || tok[0] != "frames") {
    throw ParseError("clip parse error: expected 'frames'");
  }
  const long n_frames = static_cast<long>(parse_double(tok[1], lineno));
  if (n_frames < 0) throw ParseError("clip parse error: negative frame count");
  if (n_frames < 2) throw Error("clip too short: need at least 2 frames");
  const size_t expected = 7 + n_joints + (has_contacts ? 2 : 0);
  if (has_contacts) clip.contacts.emplace();
  clip.frames.reserve(n_frames);
  for (long t = 0; t < n_frames; ++t) {
    tok = next_line();
    if (tok.size() != expected) {
      throw DimensionError("clip parse error at line " + std::to_string(lineno) +
                           ": expected " + std::to_string(expected) +
                           " columns, got " + std::to_string(tok.size()));
    }
    ClipFrame f;
    f.base.position = {parse_double(tok[0], lineno), parse_double(tok[1], lineno),
                       parse_double(tok[2], lineno)};
    f.base.orientation =
        Eigen::Quaterniond(parse_double(tok[3], lineno), parse_double(tok[4], lineno),
                           parse_double(tok[5], lineno), parse_double(tok[6], lineno));
    f.q.resize(n_joints);
    for (int i = 0; i < n_joints; ++i) f.q[i] = parse_double(tok[7 + i], lineno);
    if (has_contacts) {
      auto flag = [&](std::string_view s) {
        if (s == "1") return true;
        if (s == "0") return false;
        throw ParseError("clip parse error: contact flag must be 0 or 1");
      };
      clip.contacts->push_back({flag(tok[7 + n_joints]), flag(tok[8 + n_joints])});
    }
    clip.frames.push_back(std::move(f));
  }
  clip.validate();
  return clip;
}

void save_clip(const std::string& path, const MotionClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write clip '" + path + "'");
  out << clip_to_string(clip);
  if (!out) throw Error("failed writing clip '" + path + "'");
}

MotionClip load_clip(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open clip '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return clip_from_string(ss.str());
}

MotionClip mirror_x(const MotionClip& clip, const RobotModel& model) {
  clip.validate();
  MotionClip out = clip;
  for (size_t t = 0; t < clip.frames.size(); ++t) {
    const auto& src = clip.frames[t];
    auto& dst = out.frames[t];
    dst.base.position.y() = -src.base.position.y();
    // M R M with M = diag(1,-1,1) keeps pitch and flips roll and yaw.
    const auto& o = src.base.orientation;
    dst.base.orientation = Eigen::Quaterniond(o.w(), -o.x(), o.y(), -o.z());
    for (int i = 0; i < model.dof_count(); ++i) {
      const int k = model.mirror_joint(i);
      if (k < 0) {
        throw Error("joint '" + model.joint(i).name + "' has no mirror partner");
      }
      dst.q[k] = model.mirror_sign(i) * src.q[i];
    }
    if (clip.contacts) {
      (*out.contacts)[t] = {(*clip.contacts)[t].right, (*clip.contacts)[t].left};
    }
  }
  return out;
}

bool clips_identical(const MotionClip& a, const MotionClip& b) {
  if (a.fps != b.fps || a.frames.size() != b.frames.size() ||
      a.joint_names != b.joint_names || a.contacts != b.contacts) {
    return false;
  }
  for (size_t t = 0; t < a.frames.size(); ++t) {
    const auto& fa = a.frames[t];
    const auto& fb = b.frames[t];
    if (fa.base.position != fb.base.position ||
        fa.base.orientation.coeffs() != fb.base.orientation.coeffs() ||
        fa.q != fb.q) {
      return false;
    }
  }
  return true;
}

}  // namespace gmp
