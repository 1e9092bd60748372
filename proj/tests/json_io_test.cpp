#include <gtest/gtest.h>
#include <json.hpp>

#include "gmp/error.hpp"
#include "gmp/json_io.hpp"

namespace gmp {
namespace {

using json = nlohmann::json;

json ref_doc() {
  json p = json::array();
  for (int k = 0; k < kKeypointCount; ++k) p.push_back({0.1 * k, 0.0, 1.0});
  return {{"q_ref", std::vector<double>(kDofCount, 0.05)}, {"p_ref", p}};
}

TEST(JsonIo, EmptyStateKeepsDefaults) {
  const ControlStateSample s = parse_control_state("{}");
  EXPECT_EQ(s.v_xy, Eigen::Vector2d::Zero());
  EXPECT_TRUE(s.foot_contact[0] && s.foot_contact[1]);
  EXPECT_FALSE(s.collision);
  EXPECT_EQ(s.q.size(), kDofCount);
}

TEST(JsonIo, StateFieldsAreRead) {
  json j{{"v_xy", {0.5, -0.25}}, {"v_z", 0.1}, {"w", {0, 0, 0.3}}, {"t_air", {0.4, 0.0}},
         {"foot_contact", {false, true}}, {"collision", true},
         {"q", std::vector<double>(kDofCount, 0.2)}, {"a_dot", {1, 2}}, {"a_ddot", {3, 4}}};
  const ControlStateSample s = parse_control_state(j.dump());
  EXPECT_EQ(s.v_xy[1], -0.25);
  EXPECT_EQ(s.v_z, 0.1);
  EXPECT_EQ(s.w[2], 0.3);
  EXPECT_EQ(s.t_air[0], 0.4);
  EXPECT_FALSE(s.foot_contact[0]);
  EXPECT_TRUE(s.collision);
  EXPECT_EQ(s.q[kDofCount - 1], 0.2);
  EXPECT_EQ(s.a_dot.size(), 2);
  EXPECT_EQ(s.a_ddot[1], 4.0);
}

TEST(JsonIo, StateErrorsNameTheField) {
  try {
    parse_control_state(R"({"v_xy": [1, 2], "speed": 3})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("speed"), std::string::npos);
  }
  EXPECT_THROW(parse_control_state(R"({"v_xy": [1, 2, 3]})"), DimensionError);
  EXPECT_THROW(parse_control_state(R"({"q": [0.1]})"), DimensionError);
  EXPECT_THROW(parse_control_state(R"({"v_z": "up"})"), Error);
  EXPECT_THROW(parse_control_state(R"({"a_dot": [1, 2]})"), DimensionError);
  EXPECT_THROW(parse_control_state("[1, 2"), ParseError);
  EXPECT_THROW(parse_control_state("[]"), Error);
}

TEST(JsonIo, ReferenceFrame) {
  const ReferenceFrame r = parse_reference_frame(ref_doc().dump());
  EXPECT_EQ(r.q_ref[3], 0.05);
  EXPECT_EQ(r.p_ref[2][0], 0.2);
  json missing = ref_doc();
  missing.erase("p_ref");
  EXPECT_THROW(parse_reference_frame(missing.dump()), Error);
  json short_p = ref_doc();
  short_p["p_ref"].erase(0);
  EXPECT_THROW(parse_reference_frame(short_p.dump()), DimensionError);
}

TEST(JsonIo, Episodes) {
  const auto eps = parse_episodes("[[[1, 0, 1, 0], [0.5, 0.5, 1, 0]], []]");
  ASSERT_EQ(eps.size(), 2u);
  ASSERT_EQ(eps[0].size(), 2u);
  EXPECT_TRUE(eps[1].empty());
  EXPECT_THROW(parse_episodes("[[[1, 0, 1]]]"), DimensionError);
  EXPECT_THROW(parse_episodes("{}"), Error);
}

TEST(JsonIo, ReportAndBreakdownSerialize) {
  MetricReport r;
  r.jfid = 1.5;
  json j = json::parse(report_to_json(r));
  EXPECT_EQ(j["jfid"], 1.5);
  EXPECT_TRUE(j["melv"].is_null());
  r.has_melv = true;
  r.melv = 0.25;
  EXPECT_EQ(json::parse(report_to_json(r))["melv"], 0.25);

  RewardBreakdown b;
  b.terms.push_back({"lin_vel_xy", 0.5, 2.0, 1.0});
  b.total = 1.0;
  j = json::parse(breakdown_to_json(b));
  EXPECT_EQ(j["terms"][0]["name"], "lin_vel_xy");
  EXPECT_EQ(j["terms"][0]["weighted"], 1.0);
  EXPECT_EQ(j["total"], 1.0);
}

}  // namespace
}  // namespace gmp
