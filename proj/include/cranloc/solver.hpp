#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cranloc/errors.hpp"
#include "cranloc/format.hpp"
#include "cranloc/metrics.hpp"
#include "cranloc/robust_problem.hpp"
#include "cranloc/scenario.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {

struct SolverOptions {
  double delta_th = 1e-5;          // relative aggregate |m| change that ends the DC loop
  int max_outer_iterations = 100;
  double inner_tolerance = 1e-9;   // relative duality-gap bound of the barrier method
  double barrier_initial_weight = 1.0;
  double barrier_reduction = 0.2;
  double initial_noise_inflation = 1.01;  // start from the white baseline scaled by this factor
  int max_newton_steps = 200;      // per centering stage

  void validate() const {
    if (!(delta_th > 0.0)) throw ValidationError("delta_th must be positive");
    if (max_outer_iterations < 1) throw ValidationError("max_outer_iterations must be >= 1");
    if (!(inner_tolerance > 0.0)) throw ValidationError("inner_tolerance must be positive");
    if (!(barrier_initial_weight > 0.0)) throw ValidationError("barrier_initial_weight must be positive");
    if (!(barrier_reduction > 0.0 && barrier_reduction < 1.0)) {
      throw ValidationError("barrier_reduction must lie in (0, 1)");
    }
    if (!(initial_noise_inflation > 1.0)) throw ValidationError("initial_noise_inflation must exceed 1");
    if (max_newton_steps < 1) throw ValidationError("max_newton_steps must be >= 1");
  }
};

/// Charnes-Cooper iterate of the DC loop plus its history. m and n are [ru, node].
struct DcState {
  explicit DcState(FrequencyGrid g) : grid(std::move(g)) {}

  FrequencyGrid grid;
  int iteration = 0;
  Eigen::ArrayXXd m;
  Eigen::ArrayXXd n;
  double t = 0.0;                    // worst-case objective max_l tr(Q_l^-1) at m
  std::vector<double> history;       // t per accepted iterate, starting with the initial point
  std::vector<double> m_change;      // relative aggregate |m| change per accepted step
  bool converged = false;
  bool stalled = false;              // last inner solve did not improve the objective
  long newton_steps = 0;
};

/// Builds S_q = n / m per RU and node.
inline QuantizerDesign recover_sq(const DcState& state) {
  QuantizerDesign d;
  for (Eigen::Index j = 0; j < state.m.rows(); ++j) {
    std::vector<double> v(static_cast<std::size_t>(state.m.cols()));
    for (Eigen::Index k = 0; k < state.m.cols(); ++k) {
      v[static_cast<std::size_t>(k)] = recover_sq_node(state.m(j, k), state.n(j, k));
    }
    d.sq.emplace_back(state.grid, std::move(v));
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// White-noise baseline

/// Level sigma_q^2 with band-averaged log2(1 + (sigma_U^2 S_x + S_z)/sigma_q^2) = capacity, by bisection.
inline double white_level_for_rate(double sigma_upper, const SampledSpectrum& sx, const SampledSpectrum& sz,
                                   double capacity) {
  if (!(capacity > 0.0) || !std::isfinite(capacity)) {
    throw ValidationError("fronthaul capacity must be positive for a finite white level");
  }
  detail::require_same_grid(sx, sz);
  const double avg_w = sx.grid().average_weight();
  double vmin = std::numeric_limits<double>::infinity();
  double vmax = 0.0;
  for (std::size_t n = 0; n < sx.size(); ++n) {
    const double v = sigma_upper * sigma_upper * sx[n] + sz[n];
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  if (!(vmin > 0.0)) throw ValidationError("signal plus noise must be strictly positive");
  auto rate_at = [&](double level) {
    double acc = 0.0;
    for (std::size_t n = 0; n < sx.size(); ++n) {
      acc += std::log2(1.0 + (sigma_upper * sigma_upper * sx[n] + sz[n]) / level);
    }
    return acc * avg_w;
  };
  // rate(lo) >= capacity >= rate(hi); the rate is decreasing in the level.
  const double denom = std::expm1(capacity * std::numbers::ln2);
  double lo = vmin / denom;
  double hi = vmax / denom;
  for (int it = 0; it < 400 && hi / lo - 1.0 > 1e-15; ++it) {
    const double mid = std::sqrt(lo * hi);
    if (rate_at(mid) >= capacity) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::sqrt(lo * hi);
}

/// Index of the circle with the largest sigma_U for RU j; ties go to the lowest index.
inline std::size_t binding_circle(const std::vector<CircleGeometry>& geometry, std::size_t j) {
  std::size_t best = 0;
  for (std::size_t l = 1; l < geometry.size(); ++l) {
    if (geometry[l].gain_std_upper[j] > geometry[best].gain_std_upper[j]) best = l;
  }
  return best;
}

inline QuantizerDesign baseline_white_design(const Scenario& s) {
  const FrequencyGrid grid = s.grid();
  const std::vector<CircleGeometry> geometry = derive_all_geometry(s);
  const SampledSpectrum sx = s.signal_esd(grid);
  std::vector<double> levels(s.n_ru());
  for (std::size_t j = 0; j < s.n_ru(); ++j) {
    const std::size_t l = binding_circle(geometry, j);
    levels[j] = white_level_for_rate(geometry[l].gain_std_upper[j], sx, s.noise_psd(j, grid),
                                     s.fronthaul_capacity[j]);
  }
  return white_design(grid, levels);
}

/// Charnes-Cooper image of the baseline with every level inflated by `inflation`.
inline Eigen::ArrayXXd initialize_m(const Scenario& s, const FrequencyGrid& grid, double inflation = 1.01) {
  const QuantizerDesign base = baseline_white_design(s);
  Eigen::ArrayXXd m(static_cast<Eigen::Index>(s.n_ru()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < s.n_ru(); ++j) {
    const double level = inflation * (*base.white_level)[j];
    const SampledSpectrum sq(grid, std::vector<double>(grid.size(), level));
    const auto [mj, nj] = charnes_cooper_forward(sq, s.noise_psd(j, grid));
    for (std::size_t k = 0; k < grid.size(); ++k) {
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = mj[k];
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Inner convex subproblem

struct InnerResult {
  Eigen::ArrayXXd m;
  Eigen::ArrayXXd n;
  double t = 0.0;          // epigraph variable at exit
  double objective = 0.0;  // max_l tr(Q_l(m)^-1) at exit
  int newton_steps = 0;
  int stages = 0;
};

namespace detail {

/**
 * Primal log-barrier method for the linearized subproblem, in the scaled
 * variables x = S_z m in (0, 1). For barrier weight mu it minimizes
 *
 *   t / t_ref + mu * [ sum_l -log(t - tr Q_l^-1) - log det Q_l
 *                      + sum_{l,j} -log(C_j - g_lj(x_j))
 *                      + sum_{j,n} -log x_jn - log(1 - x_jn) ],
 *
 * where g_lj is the linearized rate of RU j for circle l. Q_l depends on x
 * only through the J scalars s_j = sum_n beta_jn x_jn, so the Newton system
 * is block diagonal per RU plus a dense (J+1)x(J+1) coupling in (s, t). It is
 * solved by eliminating each RU block against its single coupling direction.
 */
class InnerBarrier {
 public:
  InnerBarrier(const RobustProblem& p, const Eigen::ArrayXXd& anchor_m, const SolverOptions& opts)
      : p_(p), opts_(opts), nr_(static_cast<Eigen::Index>(p.n_ru())), nn_(static_cast<Eigen::Index>(p.n_nodes())),
        nl_(p.n_circles()) {
    beta_ = (p.info_weight.transpose().replicate(nr_, 1) / p.sz).eval();
    x0_ = (anchor_m * p.sz).eval();
    slope_.resize(nl_);
    offset_.resize(nl_);
    for (std::size_t l = 0; l < nl_; ++l) {
      slope_[l].resize(nr_, nn_);
      offset_[l].resize(nr_);
      for (Eigen::Index j = 0; j < nr_; ++j) {
        const double su = std::sqrt(p.sigma_upper_sq(static_cast<Eigen::Index>(l), j));
        double off = 0.0;
        for (Eigen::Index n = 0; n < nn_; ++n) {
          const double m0 = anchor_m(j, n);
          // slope in x = slope in m / S_z
          const double c = linearized_rate_slope(m0, su, p.sx(n)) / p.sz(j, n);
          slope_[l](j, n) = c;
          off += linearized_rate_term(0.0, m0, su, p.sx(n));
        }
        offset_[l](j) = off;
      }
    }
    n_terms_ = static_cast<double>(2 * nl_ + nl_ * static_cast<std::size_t>(nr_) +
                                   2 * static_cast<std::size_t>(nr_ * nn_));
  }

  InnerResult solve() {
    Eigen::ArrayXXd x = x0_;
    if (!((x > 0.0).all() && (x < 1.0).all())) {
      throw SolverError("anchor lies outside the box 0 < m < 1/S_z");
    }
    check_anchor_q(x);
    const double t_obj = objective(x);
    t_ref_ = t_obj;
    double t = 1.1 * t_obj;
    if (!std::isfinite(value(x, t, opts_.barrier_initial_weight))) {
      throw SolverError("anchor is not strictly feasible for its linearized subproblem");
    }

    InnerResult res;
    double mu = opts_.barrier_initial_weight;
    for (;;) {
      res.newton_steps += center(x, t, mu);
      ++res.stages;
      if (mu * n_terms_ <= opts_.inner_tolerance) break;
      mu *= opts_.barrier_reduction;
    }
    res.m = x / p_.sz;
    res.n = 1.0 - x;
    res.t = t;
    res.objective = objective(x);
    return res;
  }

 private:
  struct Workspace {
    Eigen::ArrayXXd grad_x;
    double grad_t = 0.0;
    std::vector<Eigen::MatrixXd> block;  // per-RU Hessian of the separable terms
    Eigen::MatrixXd coupling;            // (J+1)x(J+1) Hessian in (s, t)
  };

  void check_anchor_q(const Eigen::ArrayXXd& x) const {
    const Eigen::VectorXd s = scalars(x);
    for (std::size_t l = 0; l < nl_; ++l) {
      const SymMat2 q = q_matrix(p_, l, s);
      const double lmax = q.max_eigenvalue();
      const double lmin = q.min_eigenvalue();
      if (!(lmax > 0.0) || std::abs(lmin) <= 1e-12 * std::abs(lmax)) {
        throw UnlocalizableError("Q matrix of circle " + std::to_string(l) + " is singular");
      }
      if (lmin < 0.0) {
        throw RelaxationInapplicableError("Q matrix of circle " + std::to_string(l) + " is indefinite");
      }
    }
  }

  Eigen::VectorXd scalars(const Eigen::ArrayXXd& x) const { return (x * beta_).rowwise().sum().matrix(); }

  double objective(const Eigen::ArrayXXd& x) const {
    const Eigen::VectorXd s = scalars(x);
    double worst = 0.0;
    for (std::size_t l = 0; l < nl_; ++l) worst = std::max(worst, q_matrix(p_, l, s).inverse().trace());
    return worst;
  }

  double linearized_rate(std::size_t l, Eigen::Index j, const Eigen::ArrayXXd& x) const {
    double acc = offset_[l](j);
    for (Eigen::Index n = 0; n < nn_; ++n) {
      acc += slope_[l](j, n) * x(j, n) - std::log2(1.0 - x(j, n));
    }
    return acc * p_.average_weight();
  }

  /// Barrier objective; +inf outside the domain.
  double value(const Eigen::ArrayXXd& x, double t, double mu) const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (!((x > 0.0).all() && (x < 1.0).all())) return inf;
    double barrier = -(x.log().sum() + (1.0 - x).log().sum());
    for (std::size_t l = 0; l < nl_; ++l) {
      for (Eigen::Index j = 0; j < nr_; ++j) {
        const double slack = p_.capacity(j) - linearized_rate(l, j, x);
        if (!(slack > 0.0)) return inf;
        barrier -= std::log(slack);
      }
    }
    const Eigen::VectorXd s = scalars(x);
    for (std::size_t l = 0; l < nl_; ++l) {
      const SymMat2 q = q_matrix(p_, l, s);
      if (!(q.min_eigenvalue() > 0.0)) return inf;
      const double gap = t - q.inverse().trace();
      if (!(gap > 0.0)) return inf;
      barrier -= std::log(gap) + std::log(q.det());
    }
    return t / t_ref_ + mu * barrier;
  }

  void derivatives(const Eigen::ArrayXXd& x, double t, double mu, Workspace& w) const {
    const double ln2 = std::numbers::ln2;
    w.grad_x = mu * (-1.0 / x + 1.0 / (1.0 - x));
    Eigen::ArrayXXd hdiag = mu * (1.0 / x.square() + 1.0 / (1.0 - x).square());
    w.block.assign(static_cast<std::size_t>(nr_), Eigen::MatrixXd());
    for (Eigen::Index j = 0; j < nr_; ++j) {
      Eigen::MatrixXd& b = w.block[static_cast<std::size_t>(j)];
      b = Eigen::MatrixXd::Zero(nn_, nn_);
      for (std::size_t l = 0; l < nl_; ++l) {
        const double slack = p_.capacity(j) - linearized_rate(l, j, x);
        Eigen::ArrayXd dg(nn_);
        for (Eigen::Index n = 0; n < nn_; ++n) {
          const double m = x(j, n) / p_.sz(j, n);
          dg(n) = p_.average_weight() *
                  (slope_[l](j, n) + neg_log2_one_minus_derivative(p_.sz(j, n), m) / p_.sz(j, n));
        }
        const Eigen::ArrayXd d2g = p_.average_weight() / (ln2 * (1.0 - x.row(j).transpose()).square());
        w.grad_x.row(j) += mu * dg.transpose() / slack;
        hdiag.row(j) += mu * d2g.transpose() / slack;
        b.noalias() += (mu / (slack * slack)) * (dg.matrix() * dg.matrix().transpose());
      }
      b.diagonal() += hdiag.row(j).transpose().matrix();
    }

    const Eigen::VectorXd s = scalars(x);
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(nr_);
    w.coupling = Eigen::MatrixXd::Zero(nr_ + 1, nr_ + 1);
    w.grad_t = 1.0 / t_ref_;
    for (std::size_t l = 0; l < nl_; ++l) {
      const auto [tr, ld] = q_barrier_terms(p_, l, s, true);
      const double gap = t - tr.value;
      gs += tr.gradient / gap + ld.gradient;
      w.grad_t -= mu / gap;
      auto hss = w.coupling.topLeftCorner(nr_, nr_);
      hss.noalias() += mu * ((tr.gradient * tr.gradient.transpose()) / (gap * gap) + tr.hessian / gap + ld.hessian);
      w.coupling.topRightCorner(nr_, 1) -= mu * tr.gradient / (gap * gap);
      w.coupling(nr_, nr_) += mu / (gap * gap);
    }
    w.coupling.bottomLeftCorner(1, nr_) = w.coupling.topRightCorner(nr_, 1).transpose();
    w.grad_x += mu * (beta_.colwise() * gs.array());
  }

  /// Newton direction; returns the squared Newton decrement.
  double newton_direction(const Workspace& w, Eigen::ArrayXXd& dx, double& dt) const {
    Eigen::MatrixXd reduced = w.coupling;
    Eigen::VectorXd rhs(nr_ + 1);
    std::vector<Eigen::VectorXd> v(static_cast<std::size_t>(nr_));
    std::vector<Eigen::VectorXd> z(static_cast<std::size_t>(nr_));
    Eigen::VectorXd u(nr_), wt(nr_);
    for (Eigen::Index j = 0; j < nr_; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      Eigen::LLT<Eigen::MatrixXd> llt(w.block[jj]);
      if (llt.info() != Eigen::Success) throw SolverError("block Hessian is not positive definite");
      const Eigen::VectorXd bj = beta_.row(j).transpose().matrix();
      v[jj] = llt.solve(w.grad_x.row(j).transpose().matrix());
      z[jj] = llt.solve(bj);
      u(j) = -bj.dot(v[jj]);
      wt(j) = bj.dot(z[jj]);
      reduced(j, j) += 1.0 / wt(j);
      rhs(j) = u(j) / wt(j);
    }
    rhs(nr_) = -w.grad_t;
    const Eigen::VectorXd sol = reduced.ldlt().solve(rhs);
    dx.resize(nr_, nn_);
    for (Eigen::Index j = 0; j < nr_; ++j) {
      const auto jj = static_cast<std::size_t>(j);
      const double nu = (u(j) - sol(j)) / wt(j);
      dx.row(j) = -(v[jj] + nu * z[jj]).transpose().array();
    }
    dt = sol(nr_);
    return -((w.grad_x * dx).sum() + w.grad_t * dt);
  }

  int center(Eigen::ArrayXXd& x, double& t, double mu) const {
    Workspace w;
    Eigen::ArrayXXd dx;
    double dt = 0.0;
    double f = value(x, t, mu);
    int steps = 0;
    for (; steps < opts_.max_newton_steps; ++steps) {
      derivatives(x, t, mu, w);
      const double lambda2 = newton_direction(w, dx, dt);
      if (!(lambda2 > 2e-12)) break;

      // stay strictly inside the box before backtracking
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < nr_; ++j) {
        for (Eigen::Index n = 0; n < nn_; ++n) {
          const double d = dx(j, n);
          if (d < 0.0) alpha = std::min(alpha, 0.99 * x(j, n) / -d);
          if (d > 0.0) alpha = std::min(alpha, 0.99 * (1.0 - x(j, n)) / d);
        }
      }
      const double slope = -lambda2;
      bool accepted = false;
      for (int ls = 0; ls < 80; ++ls) {
        const Eigen::ArrayXXd xn = x + alpha * dx;
        const double tn = t + alpha * dt;
        const double fn = value(xn, tn, mu);
        if (std::isfinite(fn) && fn <= f + 0.01 * alpha * slope) {
          x = xn;
          t = tn;
          f = fn;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // no further progress at this precision
    }
    return steps;
  }

  const RobustProblem& p_;
  const SolverOptions& opts_;
  Eigen::Index nr_;
  Eigen::Index nn_;
  std::size_t nl_;
  Eigen::ArrayXXd beta_;
  Eigen::ArrayXXd x0_;
  std::vector<Eigen::ArrayXXd> slope_;   // [circle](ru, node), per unit x
  std::vector<Eigen::ArrayXd> offset_;   // [circle](ru), sum_n h(0, anchor)
  double n_terms_ = 0.0;
  double t_ref_ = 1.0;
};

}  // namespace detail

/// One DC step: solves the convex subproblem linearized at `anchor_m`.
inline InnerResult solve_inner(const Eigen::ArrayXXd& anchor_m, const RobustProblem& p, const SolverOptions& opts) {
  opts.validate();
  if (anchor_m.rows() != p.sz.rows() || anchor_m.cols() != p.sz.cols()) {
    throw ValidationError("anchor has the wrong shape");
  }
  return detail::InnerBarrier(p, anchor_m, opts).solve();
}

struct RobustSolution {
  QuantizerDesign design;
  DcState state;
};

/// Relative aggregate change sum |m_new - m_old| / sum |m_old|.
inline double aggregate_change(const Eigen::ArrayXXd& m_new, const Eigen::ArrayXXd& m_old) {
  return (m_new - m_old).abs().sum() / m_old.abs().sum();
}

/// DC iteration from the white-baseline start until the relative m change drops below delta_th.
inline RobustSolution solve_robust(const Scenario& s, const SolverOptions& opts = {}) {
  opts.validate();
  validate_scenario(s);
  const RobustProblem p = make_problem(s);

  DcState st(p.grid);
  st.m = initialize_m(s, p.grid, opts.initial_noise_inflation);
  st.n = 1.0 - st.m * p.sz;
  st.t = worst_case_objective(p, st.m);
  st.history.push_back(st.t);

  for (int it = 0; it < opts.max_outer_iterations; ++it) {
    const InnerResult r = solve_inner(st.m, p, opts);
    st.newton_steps += r.newton_steps;
    // Under exact arithmetic the subproblem optimum never exceeds the anchor's
    // objective; an increase means the solve is at the inner tolerance floor.
    if (!(r.objective < st.t)) {
      st.converged = true;
      st.stalled = true;
      break;
    }
    const double change = aggregate_change(r.m, st.m);
    st.m = r.m;
    st.n = r.n;
    st.t = r.objective;
    st.iteration = it + 1;
    st.history.push_back(st.t);
    st.m_change.push_back(change);
    if (change < opts.delta_th) {
      st.converged = true;
      break;
    }
  }
  RobustSolution out{recover_sq(st), std::move(st)};
  return out;
}

inline void write_trace_csv(std::ostream& out, const DcState& st) {
  out << "iteration,t,aggregate_m_change\n";
  for (std::size_t i = 0; i < st.history.size(); ++i) {
    out << i << ',' << format_number(st.history[i]) << ',';
    out << (i == 0 ? std::string("nan") : format_number(st.m_change[i - 1]));
    out << '\n';
  }
}

}  // namespace cranloc
