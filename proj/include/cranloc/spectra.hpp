#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "cranloc/errors.hpp"
#include "cranloc/format.hpp"

namespace cranloc {

inline double dbm_to_mw(double level_dbm) { return std::pow(10.0, level_dbm / 10.0); }

/**
 * One-sided discretization of the band [-B/2, B/2].
 *
 * Nodes are the right endpoints f_n = n B / N_f for n = 1..N_f/2. A band
 * integral of an even function v is approximated by sum_n (2B/N_f) v(f_n),
 * and the normalized band average by sum_n (2/N_f) v(f_n).
 */
class FrequencyGrid {
 public:
  FrequencyGrid(double bandwidth_hz, int n_points) : bandwidth_(bandwidth_hz), n_points_(n_points) {
    if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz)) {
      throw ValidationError("bandwidth must be positive and finite");
    }
    if (n_points < 4 || n_points % 2 != 0) {
      throw ValidationError("grid_points must be even and >= 4, got " + std::to_string(n_points));
    }
    nodes_.reserve(static_cast<std::size_t>(n_points / 2));
    for (int n = 1; n <= n_points / 2; ++n) {
      nodes_.push_back(n * bandwidth_hz / n_points);
    }
  }

  double bandwidth() const { return bandwidth_; }
  int n_points() const { return n_points_; }
  std::size_t size() const { return nodes_.size(); }
  std::span<const double> nodes() const { return nodes_; }
  double node(std::size_t n) const { return nodes_[n]; }

  /// Quadrature weight for integrals over the full two-sided band (Hz).
  double integral_weight() const { return 2.0 * bandwidth_ / n_points_; }
  /// Quadrature weight for band averages (dimensionless); sums to one.
  double average_weight() const { return 2.0 / n_points_; }

  bool operator==(const FrequencyGrid& other) const {
    return bandwidth_ == other.bandwidth_ && n_points_ == other.n_points_;
  }

 private:
  double bandwidth_;
  int n_points_;
  std::vector<double> nodes_;
};

/// Nonnegative, finite samples of a spectral density on a FrequencyGrid (mW/Hz).
class SampledSpectrum {
 public:
  SampledSpectrum(FrequencyGrid grid, std::vector<double> values)
      : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.size()) {
      throw ValidationError("spectrum has " + std::to_string(values_.size()) +
                            " samples, grid has " + std::to_string(grid_.size()));
    }
    for (double v : values_) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError("spectrum samples must be finite and nonnegative");
      }
    }
  }

  const FrequencyGrid& grid() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t n) const { return values_[n]; }
  std::size_t size() const { return values_.size(); }

  double band_average() const {
    double acc = 0.0;
    for (double v : values_) acc += v;
    return acc * grid_.average_weight();
  }

  double band_integral() const { return band_average() * grid_.bandwidth(); }

  bool strictly_positive() const {
    for (double v : values_) {
      if (!(v > 0.0)) return false;
    }
    return true;
  }

 private:
  FrequencyGrid grid_;
  std::vector<double> values_;
};

inline FrequencyGrid make_grid(double bandwidth_hz, int n_points) {
  return FrequencyGrid(bandwidth_hz, n_points);
}

inline SampledSpectrum flat_signal_esd(double level_dbm_per_hz, const FrequencyGrid& grid) {
  return SampledSpectrum(grid, std::vector<double>(grid.size(), dbm_to_mw(level_dbm_per_hz)));
}

/// AR(1) noise PSD N0 (1 - rho^2) / |1 - rho e^{-j 2 pi f / B}|^2 with N0 given in dBm/Hz.
inline SampledSpectrum ar1_noise_psd(double n0_dbm_per_hz, double rho, const FrequencyGrid& grid) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw ValidationError("AR(1) coefficient must lie in [0, 1), got " + std::to_string(rho));
  }
  const double n0 = dbm_to_mw(n0_dbm_per_hz);
  std::vector<double> values;
  values.reserve(grid.size());
  for (double f : grid.nodes()) {
    const double theta = 2.0 * std::numbers::pi * f / grid.bandwidth();
    // |1 - rho e^{-j theta}|^2 expanded
    const double denom = 1.0 - 2.0 * rho * std::cos(theta) + rho * rho;
    values.push_back(n0 * (1.0 - rho * rho) / denom);
  }
  return SampledSpectrum(grid, std::move(values));
}

inline void write_spectrum_csv(std::ostream& out, const SampledSpectrum& s,
                               const std::string& value_column = "value_mw_per_hz") {
  out << "f_hz," << value_column << '\n';
  for (std::size_t n = 0; n < s.size(); ++n) {
    out << format_number(s.grid().node(n)) << ',' << format_number(s[n]) << '\n';
  }
}

}  // namespace cranloc
