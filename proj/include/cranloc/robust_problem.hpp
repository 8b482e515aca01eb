#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cranloc/errors.hpp"
#include "cranloc/metrics.hpp"
#include "cranloc/scenario.hpp"
#include "cranloc/spectra.hpp"

namespace cranloc {

/**
 * Discretized data of the robust design problem in Charnes-Cooper variables.
 *
 * With m_j(f_n) the transformed variable of RU j at node n, the relaxed
 * worst-case matrix of circle l is
 *   Q_l(m) = sum_j A_lj * s_j(m),   s_j(m) = sum_n info_weight_n m_j(f_n),
 * where A_lj = sigma_L^2 (J_phi - sin(eps) I) and
 * info_weight_n = (8 pi^2 / c^2) (2B/N_f) f_n^2 S_x(f_n).
 * Arrays indexed [ru, node] or [circle, ru].
 */
struct RobustProblem {
  FrequencyGrid grid;
  Eigen::ArrayXd sx;            // [node]
  Eigen::ArrayXXd sz;           // [ru, node]
  Eigen::ArrayXd info_weight;   // [node]
  std::vector<std::vector<SymMat2>> q_coeff;  // [circle][ru] A_lj
  Eigen::ArrayXXd sigma_upper_sq;             // [circle, ru]
  Eigen::ArrayXd capacity;                    // [ru]

  std::size_t n_ru() const { return static_cast<std::size_t>(sz.rows()); }
  std::size_t n_nodes() const { return static_cast<std::size_t>(sz.cols()); }
  std::size_t n_circles() const { return q_coeff.size(); }
  double average_weight() const { return grid.average_weight(); }
};

inline RobustProblem make_problem(const Scenario& s, const std::vector<CircleGeometry>& geometry) {
  const FrequencyGrid grid = s.grid();
  const std::size_t nr = s.n_ru();
  const std::size_t nn = grid.size();
  RobustProblem p{grid, {}, {}, {}, {}, {}, {}};

  const SampledSpectrum sx = s.signal_esd(grid);
  p.sx.resize(static_cast<Eigen::Index>(nn));
  p.info_weight.resize(static_cast<Eigen::Index>(nn));
  const double pi2 = std::numbers::pi * std::numbers::pi;
  const double scale = 8.0 * pi2 / (s.propagation_speed * s.propagation_speed) * grid.integral_weight();
  for (std::size_t n = 0; n < nn; ++n) {
    const double f = grid.node(n);
    p.sx(n) = sx[n];
    p.info_weight(n) = scale * f * f * sx[n];
  }

  p.sz.resize(static_cast<Eigen::Index>(nr), static_cast<Eigen::Index>(nn));
  for (std::size_t j = 0; j < nr; ++j) {
    const SampledSpectrum z = s.noise_psd(j, grid);
    for (std::size_t n = 0; n < nn; ++n) p.sz(j, n) = z[n];
  }

  p.q_coeff.resize(geometry.size());
  p.sigma_upper_sq.resize(static_cast<Eigen::Index>(geometry.size()), static_cast<Eigen::Index>(nr));
  for (std::size_t l = 0; l < geometry.size(); ++l) {
    const CircleGeometry& cg = geometry[l];
    p.q_coeff[l].resize(nr);
    for (std::size_t j = 0; j < nr; ++j) {
      const double lo = cg.gain_std_lower[j];
      const double up = cg.gain_std_upper[j];
      p.q_coeff[l][j] = (lo * lo) * relaxed_direction_matrix(cg.nominal_angle[j], cg.angular_uncertainty[j]);
      p.sigma_upper_sq(l, j) = up * up;
    }
  }

  p.capacity.resize(static_cast<Eigen::Index>(nr));
  for (std::size_t j = 0; j < nr; ++j) p.capacity(j) = s.fronthaul_capacity[j];
  return p;
}

inline RobustProblem make_problem(const Scenario& s) { return make_problem(s, derive_all_geometry(s)); }

// ---------------------------------------------------------------------------
// Charnes-Cooper change of variables, A_q = 1/S_q:
//   m = A_q / (1 + S_z A_q) = 1 / (S_q + S_z),  n = 1 / (1 + S_z A_q) = S_q / (S_q + S_z)

inline std::pair<std::vector<double>, std::vector<double>> charnes_cooper_forward(const SampledSpectrum& sq,
                                                                                  const SampledSpectrum& sz) {
  detail::require_same_grid(sq, sz);
  std::vector<double> m(sq.size());
  std::vector<double> n(sq.size());
  for (std::size_t k = 0; k < sq.size(); ++k) {
    if (!(sq[k] > 0.0)) throw ValidationError("quantization noise PSD must be strictly positive");
    const double denom = sq[k] + sz[k];
    m[k] = 1.0 / denom;
    n[k] = sq[k] / denom;
  }
  return {std::move(m), std::move(n)};
}

/// Inverse map S_q = n / m for one node.
inline double recover_sq_node(double m, double n) {
  if (!(m > 0.0)) throw SolverError("channel discarded entirely (m = 0 at a grid node)");
  return n / m;
}

// ---------------------------------------------------------------------------
// Constraint building blocks and their derivatives.

/// First-order expansion of log2(1 + sigma_U^2 S_x m) around m_anchor, evaluated at m_new.
inline double linearized_rate_term(double m_new, double m_anchor, double sigma_upper, double sx) {
  const double k = sigma_upper * sigma_upper * sx;
  const double base = 1.0 + k * m_anchor;
  return std::log2(base) + k / (std::numbers::ln2 * base) * (m_new - m_anchor);
}

/// d/dm_new of linearized_rate_term; constant in m_new.
inline double linearized_rate_slope(double m_anchor, double sigma_upper, double sx) {
  const double k = sigma_upper * sigma_upper * sx;
  return k / (std::numbers::ln2 * (1.0 + k * m_anchor));
}

/// -log2(1 - S_z m), the convex part of the transformed rate.
inline double neg_log2_one_minus(double sz, double m) { return -std::log2(1.0 - sz * m); }
inline double neg_log2_one_minus_derivative(double sz, double m) {
  return sz / (std::numbers::ln2 * (1.0 - sz * m));
}

/// s_j = sum_n info_weight_n m_jn.
inline Eigen::VectorXd ranging_scalars(const RobustProblem& p, const Eigen::ArrayXXd& m) {
  return (m.matrix() * p.info_weight.matrix());
}

inline SymMat2 q_matrix(const RobustProblem& p, std::size_t l, const Eigen::VectorXd& s) {
  SymMat2 q{};
  for (std::size_t j = 0; j < p.n_ru(); ++j) q += s(static_cast<Eigen::Index>(j)) * p.q_coeff[l][j];
  return q;
}

namespace detail {

inline Eigen::Matrix2d dense(const SymMat2& m) {
  Eigen::Matrix2d d;
  d << m.a, m.b, m.b, m.c;
  return d;
}

}  // namespace detail

/// Value, gradient and Hessian of a function of the per-RU ranging scalars s.
struct ScalarDerivatives {
  double value = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

/**
 * tr(Q_l(s)^{-1}) and -log det Q_l(s) with derivatives in s. Q_l must be
 * positive definite. With dQ/ds_j = A_j:
 *   d tr(Q^-1)/ds_j          = -tr(Q^-2 A_j)
 *   d2 tr(Q^-1)/ds_j ds_k    = 2 tr(Q^-1 A_k Q^-2 A_j)
 *   d(-log det Q)/ds_j       = -tr(Q^-1 A_j)
 *   d2(-log det Q)/ds_j ds_k = tr(Q^-1 A_j Q^-1 A_k)
 */
inline std::pair<ScalarDerivatives, ScalarDerivatives> q_barrier_terms(const RobustProblem& p, std::size_t l,
                                                                        const Eigen::VectorXd& s,
                                                                        bool with_hessian = true) {
  const auto nr = static_cast<Eigen::Index>(p.n_ru());
  const Eigen::Matrix2d q = detail::dense(q_matrix(p, l, s));
  const Eigen::Matrix2d qi = q.inverse();
  const Eigen::Matrix2d qi2 = qi * qi;

  ScalarDerivatives tr, ld;
  tr.value = qi.trace();
  ld.value = -std::log(q.determinant());
  tr.gradient.resize(nr);
  ld.gradient.resize(nr);

  std::vector<Eigen::Matrix2d> qia(static_cast<std::size_t>(nr));   // Q^-1 A_j
  std::vector<Eigen::Matrix2d> qi2a(static_cast<std::size_t>(nr));  // Q^-2 A_j
  for (Eigen::Index j = 0; j < nr; ++j) {
    const Eigen::Matrix2d a = detail::dense(p.q_coeff[l][static_cast<std::size_t>(j)]);
    qia[static_cast<std::size_t>(j)] = qi * a;
    qi2a[static_cast<std::size_t>(j)] = qi2 * a;
    tr.gradient(j) = -qi2a[static_cast<std::size_t>(j)].trace();
    ld.gradient(j) = -qia[static_cast<std::size_t>(j)].trace();
  }
  if (with_hessian) {
    tr.hessian.resize(nr, nr);
    ld.hessian.resize(nr, nr);
    for (Eigen::Index j = 0; j < nr; ++j) {
      for (Eigen::Index k = j; k < nr; ++k) {
        const auto& aj = qia[static_cast<std::size_t>(j)];
        const auto& ak = qia[static_cast<std::size_t>(k)];
        // tr(Q^-1 A_k Q^-2 A_j) = tr((Q^-1 A_k)(Q^-1 Q^-1 A_j))
        const double h_tr = 2.0 * (ak * qi2a[static_cast<std::size_t>(j)]).trace();
        const double h_ld = (aj * ak).trace();
        tr.hessian(j, k) = tr.hessian(k, j) = h_tr;
        ld.hessian(j, k) = ld.hessian(k, j) = h_ld;
      }
    }
  }
  return {std::move(tr), std::move(ld)};
}

/// Gradient of tr(Q_l(m)^{-1}) with respect to every m_jn.
inline Eigen::ArrayXXd trace_inverse_gradient(const RobustProblem& p, std::size_t l, const Eigen::ArrayXXd& m) {
  const auto [tr, ld] = q_barrier_terms(p, l, ranging_scalars(p, m), false);
  Eigen::ArrayXXd g(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.rows(); ++j) g.row(j) = tr.gradient(j) * p.info_weight.transpose();
  return g;
}

inline double trace_inverse(const RobustProblem& p, std::size_t l, const Eigen::ArrayXXd& m) {
  return q_barrier_terms(p, l, ranging_scalars(p, m), false).first.value;
}

/// True (non-linearized) transformed rate of RU j for circle l: band average of
/// log2(1 + sigma_U^2 S_x m) - log2(1 - S_z m).
inline double transformed_rate(const RobustProblem& p, std::size_t l, std::size_t j, const Eigen::ArrayXXd& m) {
  double acc = 0.0;
  const auto jj = static_cast<Eigen::Index>(j);
  for (Eigen::Index n = 0; n < m.cols(); ++n) {
    const double k = p.sigma_upper_sq(static_cast<Eigen::Index>(l), jj) * p.sx(n);
    acc += std::log2(1.0 + k * m(jj, n)) + neg_log2_one_minus(p.sz(jj, n), m(jj, n));
  }
  return acc * p.average_weight();
}

/// max_l tr(Q_l(m)^{-1}); throws if some Q_l is not positive definite.
inline double worst_case_objective(const RobustProblem& p, const Eigen::ArrayXXd& m) {
  const Eigen::VectorXd s = ranging_scalars(p, m);
  double worst = 0.0;
  for (std::size_t l = 0; l < p.n_circles(); ++l) {
    const SymMat2 q = q_matrix(p, l, s);
    if (!(q.min_eigenvalue() > 0.0)) {
      throw RelaxationInapplicableError("Q matrix of circle " + std::to_string(l) + " is not positive definite");
    }
    worst = std::max(worst, q.inverse().trace());
  }
  return worst;
}

}  // namespace cranloc
