#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cranloc/scenario.hpp"
#include "test_support.hpp"

using namespace cranloc;
using cranloc::testing::equiangular_toy;
using cranloc::testing::paper_scenario;
using cranloc::testing::rel_err;

namespace {

nlohmann::json paper_json() { return nlohmann::json::parse(read_text_file(cranloc::testing::scenario_path("paper_fig3"))); }

}  // namespace

TEST(ScenarioLoad, BundledScenario) {
  const Scenario s = paper_scenario();
  EXPECT_EQ(s.n_ru(), 16u);
  EXPECT_EQ(s.n_circles(), 4u);
  EXPECT_EQ(s.grid_points, 100);
  EXPECT_DOUBLE_EQ(s.path_loss_exponent, 3.0);
  for (double c : s.fronthaul_capacity) EXPECT_DOUBLE_EQ(c, 5.0);
  const auto layout = default_ru_layout(500.0, 16);
  ASSERT_EQ(layout.size(), s.ru_positions.size());
  for (std::size_t j = 0; j < layout.size(); ++j) EXPECT_EQ(layout[j], s.ru_positions[j]);
}

TEST(ScenarioLoad, ScalarFieldsBroadcast) {
  const Scenario s = paper_scenario();
  for (const NoiseModel& nm : s.noise_model) {
    EXPECT_DOUBLE_EQ(nm.n0_dbm_per_hz, -174.0);
    EXPECT_DOUBLE_EQ(nm.rho, 0.9);
  }
  EXPECT_EQ(s.fading_power.size(), 16u);
}

TEST(ScenarioLoad, MissingKeyIsParseError) {
  nlohmann::json doc = paper_json();
  doc.erase("bandwidth");
  EXPECT_THROW(load_scenario(doc.dump()), ParseError);
}

TEST(ScenarioLoad, SyntaxErrorIsParseError) { EXPECT_THROW(load_scenario("{\"area_side\": "), ParseError); }

TEST(ScenarioLoad, NonIntegerGridIsParseError) {
  nlohmann::json doc = paper_json();
  doc["grid_points"] = 100.5;
  EXPECT_THROW(load_scenario(doc.dump()), ParseError);
}

TEST(ScenarioLoad, JsonRoundTrip) {
  const Scenario a = paper_scenario();
  const Scenario b = load_scenario(scenario_to_json(a).dump());
  EXPECT_EQ(scenario_to_json(a), scenario_to_json(b));
}

TEST(ScenarioValidate, TwoRusRejected) {
  nlohmann::json doc = paper_json();
  doc["ru_positions"] = nlohmann::json::array({{-250, -250}, {250, -250}});
  try {
    load_scenario(doc.dump());
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("at least 3"), std::string::npos) << e.what();
  }
}

TEST(ScenarioValidate, CircleContainingRuRejected) {
  Scenario s = paper_scenario();
  s.ru_positions[0] = {-40.0, -40.0};
  EXPECT_THROW(validate_scenario(s), ValidationError);
}

TEST(ScenarioValidate, OddGridRejected) {
  Scenario s = paper_scenario();
  s.grid_points = 99;
  EXPECT_THROW(validate_scenario(s), ValidationError);
}

TEST(ScenarioValidate, RhoOutOfRangeRejected) {
  Scenario s = paper_scenario();
  s.noise_model[3].rho = 1.0;
  EXPECT_THROW(validate_scenario(s), ValidationError);
}

TEST(Bearing, AxisCases) {
  EXPECT_DOUBLE_EQ(bearing({1.0, 0.0}, {0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(bearing({0.0, 1.0}, {0.0, 0.0}), std::numbers::pi / 2);
  EXPECT_DOUBLE_EQ(bearing({-1.0, 0.0}, {0.0, 0.0}), std::numbers::pi);
  EXPECT_DOUBLE_EQ(bearing({0.0, -1.0}, {0.0, 0.0}), -std::numbers::pi / 2);
}

TEST(CircleGeometry, DistanceTwiceRadiusGivesThirtyDegrees) {
  Scenario s = equiangular_toy();
  s.circles = {{{0.0, 0.0}, 150.0}};
  s.uncertainty_region = {{0.0, 0.0}, 20.0};
  const CircleGeometry g = derive_circle_geometry(s, 0);
  EXPECT_NEAR(g.angular_uncertainty[0], std::numbers::pi / 6, 1e-15);
  // RU 0 sits due east of the center: bearing from it to the center is pi
  EXPECT_NEAR(std::abs(g.nominal_angle[0]), std::numbers::pi, 1e-15);
}

TEST(CircleGeometry, LowerGainStdExample) {
  Scenario s = equiangular_toy();
  s.circles = {{{0.0, 0.0}, 50.0 * std::sqrt(2.0)}};
  const CircleGeometry g = derive_circle_geometry(s, 0);
  EXPECT_LT(rel_err(g.gain_std_lower[0], 1.962884350477499e-8), 1e-12);
  EXPECT_LT(rel_err(g.gain_std_upper[0], std::pow(300.0 - 50.0 * std::sqrt(2.0), -3.0)), 1e-13);
}

TEST(CircleGeometry, IntervalsOrderedAndAnglesInRange) {
  const Scenario s = paper_scenario();
  for (const CircleGeometry& g : derive_all_geometry(s)) {
    for (std::size_t j = 0; j < g.n_ru(); ++j) {
      EXPECT_GT(g.angular_uncertainty[j], 0.0);
      EXPECT_LT(g.angular_uncertainty[j], std::numbers::pi / 2);
      EXPECT_LT(g.gain_std_lower[j], g.gain_std_upper[j]);
      const double d = g.nominal_distance[j];
      EXPECT_EQ(g.gain_std_lower[j], 1.0 / std::pow(d + g.radius, 3.0));
      EXPECT_EQ(g.gain_std_upper[j], 1.0 / std::pow(d - g.radius, 3.0));
    }
  }
}

TEST(CircleGeometry, Deterministic) {
  const Scenario s = paper_scenario();
  const CircleGeometry a = derive_circle_geometry(s, 2);
  const CircleGeometry b = derive_circle_geometry(s, 2);
  EXPECT_EQ(a.nominal_angle, b.nominal_angle);
  EXPECT_EQ(a.gain_std_lower, b.gain_std_lower);
  EXPECT_THROW(derive_circle_geometry(s, 4), ValidationError);
}

TEST(CircleGeometry, PointsInsideCircleStayInsideIntervals) {
  const Scenario s = paper_scenario();
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l < s.n_circles(); ++l) {
    const CircleGeometry g = derive_circle_geometry(s, l);
    const Circle& c = s.circles[l];
    for (int k = 0; k < 500; ++k) {
      const double r = c.radius * std::sqrt(u(rng));
      const double th = 2.0 * std::numbers::pi * u(rng);
      const Vec2 p = c.center + Vec2{r * std::cos(th), r * std::sin(th)};
      for (std::size_t j = 0; j < s.n_ru(); ++j) {
        const double gain = 1.0 / std::pow(distance(p, s.ru_positions[j]), 3.0);
        EXPECT_GE(gain, g.gain_std_lower[j] * (1 - 1e-12));
        EXPECT_LE(gain, g.gain_std_upper[j] * (1 + 1e-12));
        double dphi = std::remainder(bearing(p, s.ru_positions[j]) - g.nominal_angle[j], 2.0 * std::numbers::pi);
        EXPECT_LE(std::abs(dphi), g.angular_uncertainty[j] + 1e-12);
      }
    }
  }
}

TEST(RuLayout, SixteenOnPerimeterEvenlySpaced) {
  const auto pts = default_ru_layout(500.0, 16);
  ASSERT_EQ(pts.size(), 16u);
  EXPECT_EQ(pts[0], (Vec2{-250.0, -250.0}));
  EXPECT_EQ(pts[1], (Vec2{-125.0, -250.0}));
  int corners = 0;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const Vec2 p = pts[k];
    EXPECT_TRUE(std::abs(std::abs(p.x) - 250.0) < 1e-12 || std::abs(std::abs(p.y) - 250.0) < 1e-12);
    if (std::abs(p.x) == 250.0 && std::abs(p.y) == 250.0) ++corners;
    EXPECT_NEAR(distance(p, pts[(k + 1) % pts.size()]), 125.0, 1e-12);
  }
  EXPECT_EQ(corners, 4);
}

TEST(RuLayout, FourAreCorners) {
  const auto pts = default_ru_layout(500.0, 4);
  ASSERT_EQ(pts.size(), 4u);
  for (const Vec2& p : pts) {
    EXPECT_EQ(std::abs(p.x), 250.0);
    EXPECT_EQ(std::abs(p.y), 250.0);
  }
  EXPECT_THROW(default_ru_layout(500.0, 6), ValidationError);
}

TEST(Covering, BundledScenarioCovered) {
  const CoveringReport r = check_covering(paper_scenario());
  EXPECT_EQ(r.samples, 100000u);
  EXPECT_TRUE(r.covered());
}

TEST(Covering, ShrunkCirclesLeaveGap) {
  Scenario s = paper_scenario();
  for (Circle& c : s.circles) c.radius = 60.0;
  EXPECT_FALSE(check_covering(s).covered());
}
