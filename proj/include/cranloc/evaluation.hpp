#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cranloc/errors.hpp"
#include "cranloc/format.hpp"
#include "cranloc/metrics.hpp"
#include "cranloc/scenario.hpp"
#include "cranloc/solver.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {

struct EvalConfig {
  std::size_t n_positions = 400;
  std::size_t n_fading_draws = 2000;
  std::uint64_t seed = 1;
  std::vector<double> capacities;

  void validate() const {
    if (n_positions == 0) throw ValidationError("n_positions must be positive");
    if (n_fading_draws < 2) throw ValidationError("n_fading_draws must be at least 2");
    if (capacities.empty()) throw ValidationError("capacity list is empty");
  }
};

/// Stream seed for (base seed, stream index), so that every position sees the
/// same fading draws regardless of design or capacity.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint64_t out[1];
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  out[0] = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out[0];
}

/// n i.i.d. uniform points in the square region.
inline std::vector<Vec2> sample_positions(const SquareRegion& region, std::size_t n, std::uint64_t seed) {
  if (!(region.side > 0.0)) throw ValidationError("region must be nonempty");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(region.center.x - region.half(), region.center.x + region.half());
  std::uniform_real_distribution<double> uy(region.center.y - region.half(), region.center.y + region.half());
  std::vector<Vec2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ux(rng);
    out.push_back({x, uy(rng)});
  }
  return out;
}

/// Monte Carlo mean with its standard error.
struct McEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
  std::size_t rejected = 0;
};

/**
 * Average of tr(J^{-1}) over Rayleigh fading at one position, given the
 * per-RU ranging information kappa of a design. Channel gains are
 * g_j = |alpha_j| / d_j^mu with |alpha_j|^2 exponential of mean sigma_alpha_j^2.
 * Draws whose EFIM condition number exceeds 1e12 are redrawn and counted.
 */
inline McEstimate avg_crb_from_information(Vec2 position, std::span<const Vec2> ru_positions,
                                           std::span<const double> fading_power, double path_loss_exponent,
                                           std::span<const double> kappa, std::size_t n_draws, std::uint64_t seed) {
  const std::size_t nr = ru_positions.size();
  std::vector<SymMat2> dir(nr);
  std::vector<double> path_gain(nr);  // kappa_j / d_j^(2 mu)
  for (std::size_t j = 0; j < nr; ++j) {
    const double d = distance(position, ru_positions[j]);
    if (!(d > 0.0)) throw ValidationError("position coincides with RU " + std::to_string(j));
    dir[j] = direction_matrix(bearing(position, ru_positions[j]));
    path_gain[j] = kappa[j] / std::pow(d, 2.0 * path_loss_exponent);
  }

  std::mt19937_64 rng(seed);
  std::vector<std::exponential_distribution<double>> power;
  power.reserve(nr);
  for (std::size_t j = 0; j < nr; ++j) power.emplace_back(1.0 / fading_power[j]);

  McEstimate est;
  est.draws = n_draws;
  double sum = 0.0;
  double sum_sq = 0.0;
  const std::size_t max_rejections = 100 * n_draws;
  for (std::size_t i = 0; i < n_draws;) {
    SymMat2 j{};
    for (std::size_t r = 0; r < nr; ++r) j += (power[r](rng) * path_gain[r]) * dir[r];
    const double lmin = j.min_eigenvalue();
    const double lmax = j.max_eigenvalue();
    if (!(lmin > 1e-12 * lmax)) {
      if (++est.rejected > max_rejections) throw UnlocalizableError("EFIM is near-singular for almost all draws");
      continue;
    }
    const double crb = crb_trace(j);
    sum += crb;
    sum_sq += crb * crb;
    ++i;
  }
  const double n = static_cast<double>(n_draws);
  est.mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
  est.standard_error = std::sqrt(var / n);
  return est;
}

inline McEstimate avg_crb_at(Vec2 position, const QuantizerDesign& design, const Scenario& s,
                             const FrequencyGrid& grid, std::size_t n_draws, std::uint64_t seed) {
  const std::vector<double> kappa = ranging_information(s, design, grid);
  return avg_crb_from_information(position, s.ru_positions, s.fading_power, s.path_loss_exponent, kappa, n_draws,
                                  seed);
}

/// Worst (over positions) fading-averaged CRB of one design.
struct WorstCaseSpe {
  double sqrt_worst_avg_spe_m = 0.0;
  double se_m = 0.0;  // delta-method standard error of the square root
  double worst_avg_crb_m2 = 0.0;
  double se_crb_m2 = 0.0;
  std::size_t worst_position = 0;
  std::size_t rejected = 0;
};

inline WorstCaseSpe worst_average_spe(const QuantizerDesign& design, const Scenario& s, const FrequencyGrid& grid,
                                      std::span<const Vec2> positions, std::size_t n_draws, std::uint64_t seed) {
  const std::vector<double> kappa = ranging_information(s, design, grid);
  WorstCaseSpe out;
  double worst = -1.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const McEstimate e = avg_crb_from_information(positions[i], s.ru_positions, s.fading_power,
                                                  s.path_loss_exponent, kappa, n_draws, substream_seed(seed, i + 1));
    out.rejected += e.rejected;
    if (e.mean > worst) {
      worst = e.mean;
      out.worst_position = i;
      out.worst_avg_crb_m2 = e.mean;
      out.se_crb_m2 = e.standard_error;
    }
  }
  out.sqrt_worst_avg_spe_m = std::sqrt(out.worst_avg_crb_m2);
  out.se_m = out.se_crb_m2 / (2.0 * out.sqrt_worst_avg_spe_m);
  return out;
}

struct SweepPoint {
  double capacity = 0.0;
  std::optional<WorstCaseSpe> proposed;
  std::optional<WorstCaseSpe> baseline;
  std::optional<QuantizerDesign> proposed_design;
  std::optional<QuantizerDesign> baseline_design;
  std::optional<DcState> solver_state;
  std::string proposed_error;
  std::string baseline_error;

  bool ok() const { return proposed.has_value() && baseline.has_value(); }
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string scenario_hash;
  std::size_t n_positions = 0;
  std::size_t n_fading_draws = 0;
  std::vector<SweepPoint> points;
};

/**
 * For every capacity: optimize the robust design, build the white baseline,
 * and evaluate both on the same sampled positions and fading draws. A failure
 * at one capacity is recorded in its row and does not stop the sweep.
 */
inline EvalReport sweep_capacity(const Scenario& s, const EvalConfig& cfg, const SolverOptions& opts = {},
                                 std::string scenario_hash = {}) {
  cfg.validate();
  validate_scenario(s);
  const FrequencyGrid grid = s.grid();
  const std::vector<Vec2> positions = sample_positions(s.uncertainty_region, cfg.n_positions, cfg.seed);

  auto run_point = [&](double capacity) {
    SweepPoint pt;
    pt.capacity = capacity;
    Scenario sc = s;
    sc.fronthaul_capacity.assign(s.n_ru(), capacity);
    try {
      pt.baseline_design = baseline_white_design(sc);
      pt.baseline = worst_average_spe(*pt.baseline_design, sc, grid, positions, cfg.n_fading_draws, cfg.seed);
    } catch (const std::exception& e) {
      pt.baseline_error = e.what();
    }
    try {
      RobustSolution sol = solve_robust(sc, opts);
      pt.proposed = worst_average_spe(sol.design, sc, grid, positions, cfg.n_fading_draws, cfg.seed);
      pt.proposed_design = std::move(sol.design);
      pt.solver_state = std::move(sol.state);
    } catch (const std::exception& e) {
      pt.proposed_error = e.what();
    }
    return pt;
  };

  std::vector<std::future<SweepPoint>> jobs;
  jobs.reserve(cfg.capacities.size());
  for (double c : cfg.capacities) jobs.push_back(std::async(std::launch::async, run_point, c));

  EvalReport rep;
  rep.seed = cfg.seed;
  rep.scenario_hash = std::move(scenario_hash);
  rep.n_positions = cfg.n_positions;
  rep.n_fading_draws = cfg.n_fading_draws;
  for (auto& j : jobs) rep.points.push_back(j.get());
  return rep;
}

inline void write_report_csv(std::ostream& out, const EvalReport& rep) {
  out << "c_bits_s_hz,sqrt_worst_avg_spe_m_proposed,sqrt_worst_avg_spe_m_baseline,se_proposed_m,se_baseline_m,seed\n";
  auto field = [](const std::optional<WorstCaseSpe>& v, double WorstCaseSpe::*member) {
    return v ? format_number((*v).*member) : std::string("failed");
  };
  for (const SweepPoint& p : rep.points) {
    out << format_number(p.capacity) << ',' << field(p.proposed, &WorstCaseSpe::sqrt_worst_avg_spe_m) << ','
        << field(p.baseline, &WorstCaseSpe::sqrt_worst_avg_spe_m) << ',' << field(p.proposed, &WorstCaseSpe::se_m)
        << ',' << field(p.baseline, &WorstCaseSpe::se_m) << ',' << rep.seed << '\n';
  }
}

// ---------------------------------------------------------------------------
// PSD shaping

namespace detail {

/// 1-based ranks with ties given their average rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t k = i;
    while (k + 1 < idx.size() && v[idx[k + 1]] == v[idx[i]]) ++k;
    const double r = 0.5 * static_cast<double>(i + k) + 1.0;
    for (std::size_t q = i; q <= k; ++q) rank[idx[q]] = r;
    i = k + 1;
  }
  return rank;
}

}  // namespace detail

/// Spearman rank correlation; empty when either input is constant.
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ValidationError("spearman needs two equal-length samples");
  const std::vector<double> rx = detail::average_ranks(x);
  const std::vector<double> ry = detail::average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

/// Per-RU Spearman correlation between S_q and S_z over the grid nodes.
inline std::vector<std::optional<double>> psd_shape_diagnostic(const QuantizerDesign& design, const Scenario& s,
                                                               const FrequencyGrid& grid) {
  std::vector<std::optional<double>> out;
  out.reserve(design.n_ru());
  for (std::size_t j = 0; j < design.n_ru(); ++j) {
    const SampledSpectrum sz = s.noise_psd(j, grid);
    out.push_back(spearman(design.sq[j].values(), sz.values()));
  }
  return out;
}

}  // namespace cranloc
