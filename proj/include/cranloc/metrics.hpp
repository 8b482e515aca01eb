#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "cranloc/errors.hpp"
#include "cranloc/scenario.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {

/// Symmetric 2x2 matrix [[a, b], [b, c]].
struct SymMat2 {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;

  static SymMat2 identity(double k = 1.0) { return {k, 0.0, k}; }

  double trace() const { return a + c; }
  double det() const { return a * c - b * b; }

  double min_eigenvalue() const {
    const double m = 0.5 * (a + c);
    const double r = std::hypot(0.5 * (a - c), b);
    return m - r;
  }
  double max_eigenvalue() const {
    const double m = 0.5 * (a + c);
    const double r = std::hypot(0.5 * (a - c), b);
    return m + r;
  }

  /// PSD up to a tolerance relative to the trace: lambda_min >= -rel_tol * |tr|.
  bool is_psd(double rel_tol = 1e-9) const {
    return min_eigenvalue() >= -rel_tol * std::abs(trace());
  }

  SymMat2 inverse() const {
    const double d = det();
    return {c / d, -b / d, a / d};
  }

  SymMat2& operator+=(const SymMat2& o) {
    a += o.a;
    b += o.b;
    c += o.c;
    return *this;
  }
  friend SymMat2 operator+(SymMat2 x, const SymMat2& y) { return x += y; }
  friend SymMat2 operator-(const SymMat2& x, const SymMat2& y) { return {x.a - y.a, x.b - y.b, x.c - y.c}; }
  friend SymMat2 operator*(double k, const SymMat2& m) { return {k * m.a, k * m.b, k * m.c}; }
  friend bool operator==(const SymMat2&, const SymMat2&) = default;
};

/// Per-RU quantization-noise PSDs; `white_level` is set only for white designs.
struct QuantizerDesign {
  std::vector<SampledSpectrum> sq;
  std::optional<std::vector<double>> white_level;

  std::size_t n_ru() const { return sq.size(); }

  void validate() const {
    for (const SampledSpectrum& s : sq) {
      if (!s.strictly_positive()) throw ValidationError("quantization noise PSD must be strictly positive");
    }
  }
};

inline QuantizerDesign white_design(const FrequencyGrid& grid, std::span<const double> levels) {
  QuantizerDesign d;
  for (double v : levels) d.sq.emplace_back(grid, std::vector<double>(grid.size(), v));
  d.white_level = std::vector<double>(levels.begin(), levels.end());
  d.validate();
  return d;
}

/// Rank-one projector onto the bearing (cos phi, sin phi).
inline SymMat2 direction_matrix(double phi) {
  const double cs = std::cos(phi);
  const double sn = std::sin(phi);
  return {cs * cs, cs * sn, sn * sn};
}

inline SymMat2 relaxed_direction_matrix(double phi, double eps) {
  return direction_matrix(phi) - SymMat2::identity(std::sin(eps));
}

namespace detail {

inline void require_same_grid(const SampledSpectrum& x, const SampledSpectrum& y) {
  if (!(x.grid() == y.grid())) throw ValidationError("spectra are sampled on different grids");
}

}  // namespace detail

/**
 * Per-RU ranging information for unit channel gain:
 *   (8 pi^2 / c^2) * sum_n (2B/N_f) f_n^2 S_x(f_n) / (S_z(f_n) + S_q(f_n)).
 * Multiplying by g_j^2 gives the scalar weight of RU j's direction matrix.
 */
inline double ranging_information(const SampledSpectrum& sx, const SampledSpectrum& sz,
                                  const SampledSpectrum& sq, double propagation_speed) {
  detail::require_same_grid(sx, sz);
  detail::require_same_grid(sx, sq);
  const FrequencyGrid& g = sx.grid();
  double acc = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double f = g.node(n);
    acc += f * f * sx[n] / (sz[n] + sq[n]);
  }
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return 8.0 * pi2 / (propagation_speed * propagation_speed) * g.integral_weight() * acc;
}

/// ranging_information for every RU of a scenario under a given design.
inline std::vector<double> ranging_information(const Scenario& s, const QuantizerDesign& q,
                                               const FrequencyGrid& grid) {
  if (q.n_ru() != s.n_ru()) throw ValidationError("design has wrong number of RUs");
  const SampledSpectrum sx = s.signal_esd(grid);
  std::vector<double> out(s.n_ru());
  for (std::size_t j = 0; j < s.n_ru(); ++j) {
    if (!(q.sq[j].grid() == grid)) throw ValidationError("design is sampled on a different grid");
    out[j] = ranging_information(sx, s.noise_psd(j, grid), q.sq[j], s.propagation_speed);
  }
  return out;
}

/// EFIM sum_j J_phi(phi_j) g_j^2 kappa_j from precomputed per-RU information kappa.
inline SymMat2 efim_from_information(std::span<const double> angles, std::span<const double> gains,
                                     std::span<const double> kappa) {
  SymMat2 j{};
  for (std::size_t r = 0; r < angles.size(); ++r) {
    j += (gains[r] * gains[r] * kappa[r]) * direction_matrix(angles[r]);
  }
  return j;
}

inline SymMat2 efim(std::span<const double> angles, std::span<const double> gains, const QuantizerDesign& q,
                    const Scenario& s, const FrequencyGrid& grid) {
  if (angles.size() != s.n_ru() || gains.size() != s.n_ru()) {
    throw ValidationError("efim needs one angle and one gain per RU");
  }
  const std::vector<double> kappa = ranging_information(s, q, grid);
  return efim_from_information(angles, gains, kappa);
}

/// tr(J^{-1}) for a positive definite information matrix, in m^2.
inline double crb_trace(const SymMat2& j) {
  const double lmin = j.min_eigenvalue();
  const double lmax = j.max_eigenvalue();
  if (!std::isfinite(lmin) || !(lmax > 0.0) || !(lmin > 1e-15 * lmax)) {
    throw UnlocalizableError();
  }
  return j.trace() / j.det();
}

/// Relaxed worst-case matrix Q of one circle, evaluated with the lower gain bounds.
inline SymMat2 worst_case_q_matrix_from_information(const CircleGeometry& cg, std::span<const double> kappa) {
  SymMat2 q{};
  for (std::size_t j = 0; j < cg.n_ru(); ++j) {
    const double s = cg.gain_std_lower[j];
    q += (s * s * kappa[j]) * relaxed_direction_matrix(cg.nominal_angle[j], cg.angular_uncertainty[j]);
  }
  return q;
}

inline SymMat2 worst_case_q_matrix(const CircleGeometry& cg, const QuantizerDesign& q, const Scenario& s,
                                   const FrequencyGrid& grid) {
  const std::vector<double> kappa = ranging_information(s, q, grid);
  return worst_case_q_matrix_from_information(cg, kappa);
}

/// Band-averaged fronthaul rate sum_n (2/N_f) log2(1 + (gain^2 S_x + S_z)/S_q) in bits/s/Hz.
inline double per_realization_rate(double gain, const SampledSpectrum& sx, const SampledSpectrum& sz,
                                   const SampledSpectrum& sq) {
  detail::require_same_grid(sx, sz);
  detail::require_same_grid(sx, sq);
  double acc = 0.0;
  for (std::size_t n = 0; n < sq.size(); ++n) {
    if (!(sq[n] > 0.0)) throw ValidationError("quantization noise PSD must be strictly positive");
    acc += std::log2(1.0 + (gain * gain * sx[n] + sz[n]) / sq[n]);
  }
  return acc * sx.grid().average_weight();
}

/// Jensen-bounded rate: the per-realization formula at the gain standard deviation.
inline double rate(double sigma_g, const SampledSpectrum& sx, const SampledSpectrum& sz, const SampledSpectrum& sq) {
  return per_realization_rate(sigma_g, sx, sz, sq);
}

inline double rate(double sigma_g, const SampledSpectrum& sq, const Scenario& s, std::size_t ru,
                   const FrequencyGrid& grid) {
  return rate(sigma_g, s.signal_esd(grid), s.noise_psd(ru, grid), sq);
}

}  // namespace cranloc
