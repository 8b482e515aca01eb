#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cranloc/errors.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

/// Bearing of `target` seen from `from`, atan2 convention, range (-pi, pi].
inline double bearing(Vec2 target, Vec2 from) {
  return std::atan2(target.y - from.y, target.x - from.x);
}

struct Circle {
  Vec2 center;
  double radius = 0.0;

  bool contains(Vec2 p, double slack = 1e-9) const {
    return distance(p, center) <= radius * (1.0 + slack);
  }
};

/// Axis-aligned square uncertainty region A_p.
struct SquareRegion {
  Vec2 center;
  double side = 0.0;

  double half() const { return 0.5 * side; }
  bool contains(Vec2 p) const {
    return std::abs(p.x - center.x) <= half() && std::abs(p.y - center.y) <= half();
  }
};

struct NoiseModel {
  double n0_dbm_per_hz = -174.0;
  double rho = 0.0;
};

/// A complete problem instance. Coordinates are in meters with the deployment
/// area [-area_side/2, area_side/2]^2 centered at the origin.
struct Scenario {
  std::string name;
  double area_side = 0.0;
  std::vector<Vec2> ru_positions;
  SquareRegion uncertainty_region;
  std::vector<Circle> circles;
  double path_loss_exponent = 0.0;
  std::vector<double> fading_power;  // sigma_alpha^2 per RU, linear
  double bandwidth = 0.0;            // two-sided, Hz
  double signal_esd_dbm_per_hz = 0.0;
  std::vector<NoiseModel> noise_model;
  std::vector<double> fronthaul_capacity;  // bits/s/Hz per RU
  double propagation_speed = 299792458.0;
  int grid_points = 0;

  std::size_t n_ru() const { return ru_positions.size(); }
  std::size_t n_circles() const { return circles.size(); }

  FrequencyGrid grid() const { return make_grid(bandwidth, grid_points); }
  SampledSpectrum signal_esd(const FrequencyGrid& g) const {
    return flat_signal_esd(signal_esd_dbm_per_hz, g);
  }
  SampledSpectrum noise_psd(std::size_t ru, const FrequencyGrid& g) const {
    return ar1_noise_psd(noise_model.at(ru).n0_dbm_per_hz, noise_model.at(ru).rho, g);
  }

  /// Copy with every RU's fronthaul capacity set to `capacity`.
  Scenario with_capacity(double capacity) const {
    Scenario s = *this;
    s.fronthaul_capacity.assign(n_ru(), capacity);
    return s;
  }
};

/// Throws ValidationError naming the first violated invariant.
inline void validate_scenario(const Scenario& s) {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };
  auto positive = [&](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) fail(std::string(what) + " must be positive and finite");
  };

  positive(s.area_side, "area_side");
  positive(s.path_loss_exponent, "path_loss_exponent");
  positive(s.bandwidth, "bandwidth");
  positive(s.propagation_speed, "propagation_speed");
  if (!std::isfinite(s.signal_esd_dbm_per_hz)) fail("signal_esd_dbm_per_hz must be finite");
  if (s.grid_points < 4 || s.grid_points % 2 != 0) fail("grid_points must be even and >= 4");

  const std::size_t nr = s.n_ru();
  if (nr < 3) fail("at least 3 RUs are required, got " + std::to_string(nr));
  if (s.fading_power.size() != nr) fail("fading_power must have one entry per RU");
  if (s.noise_model.size() != nr) fail("noise_model must have one entry per RU");
  if (s.fronthaul_capacity.size() != nr) fail("fronthaul_capacity must have one entry per RU");
  for (std::size_t j = 0; j < nr; ++j) {
    positive(s.fading_power[j], "fading_power");
    positive(s.fronthaul_capacity[j], "fronthaul_capacity");
    if (!std::isfinite(s.noise_model[j].n0_dbm_per_hz)) fail("noise_model.n0_dbm_per_hz must be finite");
    const double rho = s.noise_model[j].rho;
    if (!(rho >= 0.0 && rho < 1.0)) fail("noise_model.rho must lie in [0, 1)");
  }

  const double half = 0.5 * s.area_side;
  const double tol = 1e-9 * s.area_side;
  for (const Vec2& p : s.ru_positions) {
    if (!(std::abs(p.x) <= half + tol && std::abs(p.y) <= half + tol)) {
      fail("RU position lies outside the area");
    }
  }

  const SquareRegion& r = s.uncertainty_region;
  positive(r.side, "uncertainty_region.side");
  if (std::abs(r.center.x) + r.half() > half + tol || std::abs(r.center.y) + r.half() > half + tol) {
    fail("uncertainty_region must lie inside the area");
  }

  if (s.circles.empty()) fail("at least one covering circle is required");
  for (std::size_t l = 0; l < s.circles.size(); ++l) {
    const Circle& c = s.circles[l];
    positive(c.radius, "circle radius");
    const std::string tag = "circle " + std::to_string(l);
    if (std::abs(c.center.x) + c.radius > half + tol || std::abs(c.center.y) + c.radius > half + tol) {
      fail(tag + " must lie inside the area");
    }
    for (std::size_t j = 0; j < nr; ++j) {
      if (!(distance(c.center, s.ru_positions[j]) > c.radius)) {
        fail(tag + " contains RU " + std::to_string(j) + " (distance <= radius)");
      }
    }
  }
}

/// Per-circle nominal geometry and the resulting uncertainty intervals for each RU.
struct CircleGeometry {
  std::size_t circle_index = 0;
  double radius = 0.0;
  std::vector<double> nominal_distance;
  std::vector<double> nominal_angle;
  std::vector<double> angular_uncertainty;
  std::vector<double> gain_std_lower;
  std::vector<double> gain_std_upper;

  std::size_t n_ru() const { return nominal_distance.size(); }
};

inline CircleGeometry derive_circle_geometry(const Scenario& s, std::size_t l) {
  if (l >= s.n_circles()) {
    throw ValidationError("circle index " + std::to_string(l) + " out of range");
  }
  const Circle& c = s.circles[l];
  CircleGeometry g;
  g.circle_index = l;
  g.radius = c.radius;
  const std::size_t nr = s.n_ru();
  g.nominal_distance.resize(nr);
  g.nominal_angle.resize(nr);
  g.angular_uncertainty.resize(nr);
  g.gain_std_lower.resize(nr);
  g.gain_std_upper.resize(nr);
  for (std::size_t j = 0; j < nr; ++j) {
    const double d = distance(c.center, s.ru_positions[j]);
    const double sigma_alpha = std::sqrt(s.fading_power[j]);
    g.nominal_distance[j] = d;
    g.nominal_angle[j] = bearing(c.center, s.ru_positions[j]);
    g.angular_uncertainty[j] = std::asin(c.radius / d);
    g.gain_std_lower[j] = sigma_alpha / std::pow(d + c.radius, s.path_loss_exponent);
    g.gain_std_upper[j] = sigma_alpha / std::pow(d - c.radius, s.path_loss_exponent);
  }
  return g;
}

inline std::vector<CircleGeometry> derive_all_geometry(const Scenario& s) {
  std::vector<CircleGeometry> out;
  out.reserve(s.n_circles());
  for (std::size_t l = 0; l < s.n_circles(); ++l) out.push_back(derive_circle_geometry(s, l));
  return out;
}

/**
 * RUs spaced uniformly along the perimeter of the centered square, corners
 * included. The walk starts at the lower-left corner and runs counterclockwise.
 */
inline std::vector<Vec2> default_ru_layout(double area_side, int n_ru = 16) {
  if (n_ru <= 0 || n_ru % 4 != 0) {
    throw ValidationError("n_ru must be a positive multiple of 4, got " + std::to_string(n_ru));
  }
  const double h = 0.5 * area_side;
  const int per_edge = n_ru / 4;
  const Vec2 corners[4] = {{-h, -h}, {h, -h}, {h, h}, {-h, h}};
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n_ru));
  for (int e = 0; e < 4; ++e) {
    const Vec2 a = corners[e];
    const Vec2 b = corners[(e + 1) % 4];
    for (int k = 0; k < per_edge; ++k) {
      const double t = static_cast<double>(k) / per_edge;
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

struct CoveringReport {
  std::size_t samples = 0;
  std::size_t uncovered = 0;
  bool covered() const { return uncovered == 0; }
};

/// Monte Carlo check that every point of the uncertainty square lies in some circle.
inline CoveringReport check_covering(const Scenario& s, std::size_t n_samples = 100000,
                                     std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  const SquareRegion& r = s.uncertainty_region;
  std::uniform_real_distribution<double> ux(r.center.x - r.half(), r.center.x + r.half());
  std::uniform_real_distribution<double> uy(r.center.y - r.half(), r.center.y + r.half());
  CoveringReport rep;
  rep.samples = n_samples;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Vec2 p{ux(rng), uy(rng)};
    bool inside = false;
    for (const Circle& c : s.circles) {
      if (c.contains(p)) {
        inside = true;
        break;
      }
    }
    if (!inside) ++rep.uncovered;
  }
  return rep;
}

namespace detail {

using nlohmann::json;

inline const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) {
    throw ParseError(std::string("missing required key '") + key + "'");
  }
  return doc.at(key);
}

inline double as_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ParseError("key '" + key + "' must be a number");
  return v.get<double>();
}

inline Vec2 as_point(const json& v, const std::string& key) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw ParseError("key '" + key + "' must be a 2-element numeric array");
  }
  return {v[0].get<double>(), v[1].get<double>()};
}

// A scalar is broadcast to every RU.
inline std::vector<double> per_ru_numbers(const json& v, const std::string& key, std::size_t nr) {
  if (v.is_number()) return std::vector<double>(nr, v.get<double>());
  if (!v.is_array()) throw ParseError("key '" + key + "' must be a number or an array");
  std::vector<double> out;
  for (const json& e : v) out.push_back(as_number(e, key));
  return out;
}

inline NoiseModel as_noise(const json& v) {
  if (!v.is_object()) throw ParseError("noise_model entries must be objects");
  return {as_number(require(v, "n0_dbm_per_hz"), "n0_dbm_per_hz"), as_number(require(v, "rho"), "rho")};
}

}  // namespace detail

/// Parses and validates a scenario document (JSON).
inline Scenario load_scenario(const std::string& document) {
  using detail::json;
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario parse error: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("scenario document must be an object");

  Scenario s;
  s.name = doc.value("name", std::string{});
  s.area_side = detail::as_number(detail::require(doc, "area_side"), "area_side");

  const json& rus = detail::require(doc, "ru_positions");
  if (!rus.is_array()) throw ParseError("key 'ru_positions' must be an array");
  for (const json& p : rus) s.ru_positions.push_back(detail::as_point(p, "ru_positions"));
  const std::size_t nr = s.ru_positions.size();

  const json& region = detail::require(doc, "uncertainty_region");
  s.uncertainty_region.center = detail::as_point(detail::require(region, "center"), "uncertainty_region.center");
  s.uncertainty_region.side = detail::as_number(detail::require(region, "side"), "uncertainty_region.side");

  const json& circles = detail::require(doc, "circles");
  if (!circles.is_array()) throw ParseError("key 'circles' must be an array");
  for (const json& c : circles) {
    s.circles.push_back({detail::as_point(detail::require(c, "center"), "circles.center"),
                         detail::as_number(detail::require(c, "radius"), "circles.radius")});
  }

  s.path_loss_exponent = detail::as_number(detail::require(doc, "path_loss_exponent"), "path_loss_exponent");
  s.fading_power = detail::per_ru_numbers(detail::require(doc, "fading_power"), "fading_power", nr);
  s.bandwidth = detail::as_number(detail::require(doc, "bandwidth"), "bandwidth");
  s.signal_esd_dbm_per_hz =
      detail::as_number(detail::require(doc, "signal_esd_dbm_per_hz"), "signal_esd_dbm_per_hz");

  const json& noise = detail::require(doc, "noise_model");
  if (noise.is_object()) {
    s.noise_model.assign(nr, detail::as_noise(noise));
  } else if (noise.is_array()) {
    for (const json& e : noise) s.noise_model.push_back(detail::as_noise(e));
  } else {
    throw ParseError("key 'noise_model' must be an object or an array");
  }

  s.fronthaul_capacity =
      detail::per_ru_numbers(detail::require(doc, "fronthaul_capacity"), "fronthaul_capacity", nr);
  s.propagation_speed = detail::as_number(detail::require(doc, "propagation_speed"), "propagation_speed");
  const json& gp = detail::require(doc, "grid_points");
  if (!gp.is_number_integer()) throw ParseError("key 'grid_points' must be an integer");
  s.grid_points = gp.get<int>();

  validate_scenario(s);
  return s;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Scenario load_scenario_file(const std::string& path) { return load_scenario(read_text_file(path)); }

inline nlohmann::json scenario_to_json(const Scenario& s) {
  using detail::json;
  json doc;
  doc["name"] = s.name;
  doc["area_side"] = s.area_side;
  json rus = json::array();
  for (const Vec2& p : s.ru_positions) rus.push_back({p.x, p.y});
  doc["ru_positions"] = rus;
  doc["uncertainty_region"] = {{"center", {s.uncertainty_region.center.x, s.uncertainty_region.center.y}},
                               {"side", s.uncertainty_region.side}};
  json circles = json::array();
  for (const Circle& c : s.circles) circles.push_back({{"center", {c.center.x, c.center.y}}, {"radius", c.radius}});
  doc["circles"] = circles;
  doc["path_loss_exponent"] = s.path_loss_exponent;
  doc["fading_power"] = s.fading_power;
  doc["bandwidth"] = s.bandwidth;
  doc["signal_esd_dbm_per_hz"] = s.signal_esd_dbm_per_hz;
  json noise = json::array();
  for (const NoiseModel& m : s.noise_model) noise.push_back({{"n0_dbm_per_hz", m.n0_dbm_per_hz}, {"rho", m.rho}});
  doc["noise_model"] = noise;
  doc["fronthaul_capacity"] = s.fronthaul_capacity;
  doc["propagation_speed"] = s.propagation_speed;
  doc["grid_points"] = s.grid_points;
  return doc;
}

}  // namespace cranloc
