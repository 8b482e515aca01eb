#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "cranloc/robust_problem.hpp"
#include "cranloc/solver.hpp"
#include "test_support.hpp"

using namespace cranloc;
using cranloc::testing::equiangular_toy;
using cranloc::testing::paper_scenario;
using cranloc::testing::random_toy;
using cranloc::testing::rel_err;

namespace {

/// Random interior point x = S_z m in (0.05, 0.95) with every Q positive definite.
Eigen::ArrayXXd random_interior_m(const RobustProblem& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (;;) {
    Eigen::ArrayXXd m(p.sz.rows(), p.sz.cols());
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      for (Eigen::Index n = 0; n < m.cols(); ++n) m(j, n) = u(rng) / p.sz(j, n);
    }
    const Eigen::VectorXd s = ranging_scalars(p, m);
    bool pd = true;
    for (std::size_t l = 0; l < p.n_circles(); ++l) pd = pd && q_matrix(p, l, s).min_eigenvalue() > 0.0;
    if (pd) return m;
  }
}

double max_rate_excess(const Scenario& s, const QuantizerDesign& d) {
  const FrequencyGrid g = s.grid();
  double worst = -1e300;
  for (const CircleGeometry& cg : derive_all_geometry(s)) {
    for (std::size_t j = 0; j < s.n_ru(); ++j) {
      worst = std::max(worst, rate(cg.gain_std_upper[j], d.sq[j], s, j, g) - s.fronthaul_capacity[j]);
    }
  }
  return worst;
}

}  // namespace

TEST(CharnesCooper, Examples) {
  const FrequencyGrid g = make_grid(1.0, 4);
  {
    const auto [m, n] = charnes_cooper_forward(SampledSpectrum(g, {1.0, 3.0}), SampledSpectrum(g, {1.0, 1.0}));
    EXPECT_DOUBLE_EQ(m[0], 0.5);
    EXPECT_DOUBLE_EQ(n[0], 0.5);
    EXPECT_DOUBLE_EQ(m[1], 0.25);
    EXPECT_DOUBLE_EQ(n[1], 0.75);
    EXPECT_DOUBLE_EQ(recover_sq_node(m[1], n[1]), 3.0);
  }
  {
    const auto [m, n] = charnes_cooper_forward(SampledSpectrum(g, {2.0, 4.0}), SampledSpectrum(g, {0.0, 0.0}));
    EXPECT_DOUBLE_EQ(m[0], 0.5);
    EXPECT_DOUBLE_EQ(n[0], 1.0);
  }
  EXPECT_DOUBLE_EQ(recover_sq_node(0.5, 0.5), 1.0);
  EXPECT_THROW(recover_sq_node(0.0, 1.0), SolverError);
}

TEST(CharnesCooper, RoundTripAndCoupling) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> expo(-20.0, 5.0);
  const FrequencyGrid g = make_grid(1e6, 20);
  for (int k = 0; k < 1000; ++k) {
    std::vector<double> q(g.size()), z(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      q[i] = std::pow(10.0, expo(rng));
      z[i] = std::pow(10.0, expo(rng));
    }
    const auto [m, n] = charnes_cooper_forward(SampledSpectrum(g, q), SampledSpectrum(g, z));
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_LT(rel_err(recover_sq_node(m[i], n[i]), q[i]), 1e-12);
      EXPECT_NEAR(z[i] * m[i] + n[i], 1.0, 1e-12);
    }
  }
}

TEST(Linearization, TangentAtAnchor) {
  const double sx = 2.0, sigma = 0.5;
  EXPECT_NEAR(linearized_rate_term(3.0, 3.0, sigma, sx), std::log2(1.0 + 0.5 * 3.0), 1e-15);
  // sigma_U^2 S_x = 1, anchor 1, m_new 3: 1 + 2 / (2 ln 2) against log2(4) = 2
  EXPECT_NEAR(linearized_rate_term(3.0, 1.0, 1.0, 1.0), 2.442695040888963, 1e-15);
  EXPECT_GT(linearized_rate_term(3.0, 1.0, 1.0, 1.0), std::log2(4.0));
}

TEST(Linearization, OverestimatesConcaveTerm) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = u(rng), b = u(rng), sigma = 0.1 + u(rng), sx = 0.1 + u(rng);
    EXPECT_GE(linearized_rate_term(a, b, sigma, sx), std::log2(1.0 + sigma * sigma * sx * a) - 1e-12);
  }
}

TEST(Gradients, ScalarTermsMatchFiniteDifferences) {
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int k = 0; k < 100; ++k) {
    const double sz = std::pow(10.0, -18.0 + 2.0 * u(rng));
    const double m = u(rng) / sz;
    const double h = 1e-6 * m;
    const double fd = (neg_log2_one_minus(sz, m + h) - neg_log2_one_minus(sz, m - h)) / (2.0 * h);
    EXPECT_LT(rel_err(neg_log2_one_minus_derivative(sz, m), fd), 1e-5);

    const double sigma = 1e-7 * (1.0 + u(rng)), sx = 1e-9;
    const double anchor = u(rng) / sz;
    const double fd_h =
        (linearized_rate_term(m + h, anchor, sigma, sx) - linearized_rate_term(m - h, anchor, sigma, sx)) / (2.0 * h);
    EXPECT_LT(rel_err(linearized_rate_slope(anchor, sigma, sx), fd_h), 1e-5);
  }
}

TEST(Gradients, TraceInverseMatchesFiniteDifferences) {
  const RobustProblem p = make_problem(paper_scenario());
  std::mt19937_64 rng(53);
  std::normal_distribution<double> nd;
  for (int k = 0; k < 100; ++k) {
    const Eigen::ArrayXXd m = random_interior_m(p, rng);
    const std::size_t l = static_cast<std::size_t>(k) % p.n_circles();
    Eigen::ArrayXXd dir(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      for (Eigen::Index n = 0; n < m.cols(); ++n) dir(j, n) = nd(rng) * m(j, n);
    }
    const double h = 1e-5;
    const double fd = (trace_inverse(p, l, m + h * dir) - trace_inverse(p, l, m - h * dir)) / (2.0 * h);
    const double analytic = (trace_inverse_gradient(p, l, m) * dir).sum();
    EXPECT_LT(rel_err(analytic, fd), 1e-5);
  }
}

TEST(Gradients, BarrierHessiansMatchFiniteDifferences) {
  const RobustProblem p = make_problem(paper_scenario());
  std::mt19937_64 rng(59);
  for (int k = 0; k < 20; ++k) {
    const Eigen::VectorXd s = ranging_scalars(p, random_interior_m(p, rng));
    const auto [tr, ld] = q_barrier_terms(p, 0, s, true);
    for (Eigen::Index j = 0; j < s.size(); j += 5) {
      const double h = 1e-5 * s(j);
      Eigen::VectorXd sp = s, sm = s;
      sp(j) += h;
      sm(j) -= h;
      const auto [trp, ldp] = q_barrier_terms(p, 0, sp, false);
      const auto [trm, ldm] = q_barrier_terms(p, 0, sm, false);
      EXPECT_LT(rel_err(tr.gradient(j), (trp.value - trm.value) / (2.0 * h)), 1e-5);
      EXPECT_LT(rel_err(ld.gradient(j), (ldp.value - ldm.value) / (2.0 * h)), 1e-5);
      const Eigen::VectorXd fd_tr = (trp.gradient - trm.gradient) / (2.0 * h);
      const Eigen::VectorXd fd_ld = (ldp.gradient - ldm.gradient) / (2.0 * h);
      EXPECT_LT((tr.hessian.col(j) - fd_tr).norm(), 1e-5 * fd_tr.norm());
      EXPECT_LT((ld.hessian.col(j) - fd_ld).norm(), 1e-5 * fd_ld.norm());
    }
  }
}

TEST(Baseline, MeetsCapacityOnBindingCircle) {
  for (double c : {0.1, 1.0, 5.0}) {
    const Scenario s = paper_scenario(c);
    const QuantizerDesign d = baseline_white_design(s);
    ASSERT_TRUE(d.white_level.has_value());
    const FrequencyGrid g = s.grid();
    const auto geometry = derive_all_geometry(s);
    for (std::size_t j = 0; j < s.n_ru(); ++j) {
      double worst = 0.0;
      for (const CircleGeometry& cg : geometry) worst = std::max(worst, rate(cg.gain_std_upper[j], d.sq[j], s, j, g));
      EXPECT_LT(std::abs(worst - c) / c, 1e-8);
    }
  }
}

TEST(Baseline, MoreCapacityMeansLessNoise) {
  const QuantizerDesign lo = baseline_white_design(paper_scenario(1.0));
  const QuantizerDesign hi = baseline_white_design(paper_scenario(2.0));
  for (std::size_t j = 0; j < lo.n_ru(); ++j) EXPECT_LT((*hi.white_level)[j], (*lo.white_level)[j]);
}

TEST(Baseline, ToyClosedForm) {
  // S_x = S_z = sigma_U = 1: log2(1 + 2 / v) = C gives v = 2 / (2^C - 1)
  const FrequencyGrid g = make_grid(1.0, 8);
  const SampledSpectrum ones(g, std::vector<double>(g.size(), 1.0));
  for (double c : {0.1, 0.5, 1.0, 3.0, 8.0}) {
    EXPECT_LT(rel_err(white_level_for_rate(1.0, ones, ones, c), 2.0 / (std::exp2(c) - 1.0)), 1e-12);
  }
  EXPECT_THROW(white_level_for_rate(1.0, ones, ones, 0.0), ValidationError);
}

TEST(Initialization, FeasibleInterior) {
  for (double c : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const Scenario s = paper_scenario(c);
    const RobustProblem p = make_problem(s);
    const Eigen::ArrayXXd m = initialize_m(s, p.grid);
    EXPECT_TRUE(((m * p.sz) > 0.0).all());
    EXPECT_TRUE(((m * p.sz) < 1.0).all());
    for (std::size_t l = 0; l < p.n_circles(); ++l) {
      for (std::size_t j = 0; j < p.n_ru(); ++j) EXPECT_LT(transformed_rate(p, l, j, m), c);
    }
    EXPECT_NO_THROW(solve_inner(m, p, SolverOptions{}));
  }
}

TEST(InnerSolver, SingleRuWithoutUncertaintyIsUnlocalizable) {
  RobustProblem p{make_grid(1e6, 8), {}, {}, {}, {}, {}, {}};
  const auto nn = static_cast<Eigen::Index>(p.grid.size());
  p.sx = Eigen::ArrayXd::Constant(nn, 1e-9);
  p.sz = Eigen::ArrayXXd::Constant(1, nn, 1e-17);
  p.info_weight = Eigen::ArrayXd::Constant(nn, 1e-6);
  p.q_coeff = {{1e-8 * direction_matrix(0.4)}};
  p.sigma_upper_sq = Eigen::ArrayXXd::Constant(1, 1, 1e-14);
  p.capacity = Eigen::ArrayXd::Constant(1, 1.0);
  const Eigen::ArrayXXd m = Eigen::ArrayXXd::Constant(1, nn, 0.5e17);
  EXPECT_THROW(solve_inner(m, p, SolverOptions{}), UnlocalizableError);
}

TEST(InnerSolver, FixedPointIsStable) {
  const Scenario s = paper_scenario(1.0);
  const RobustSolution sol = solve_robust(s);
  ASSERT_TRUE(sol.state.converged);
  const RobustProblem p = make_problem(s);
  const InnerResult again = solve_inner(sol.state.m, p, SolverOptions{});
  EXPECT_LT(std::abs(again.objective - sol.state.t) / sol.state.t, 1e-6);
  EXPECT_LT(aggregate_change(again.m, sol.state.m), 1e-3);
}

TEST(RobustSolver, EquiangularGenerousCapacityApproachesUnquantizedBound) {
  const Scenario s = equiangular_toy(12.0);
  const RobustProblem p = make_problem(s);
  const Eigen::ArrayXXd unquantized = 1.0 / p.sz;  // S_q -> 0
  const double bound = worst_case_objective(p, unquantized);
  const RobustSolution sol = solve_robust(s);
  EXPECT_TRUE(sol.state.converged);
  EXPECT_GE(sol.state.t, bound * (1.0 - 1e-12));
  EXPECT_LT(sol.state.t, bound * 1.01);
}

TEST(RobustSolver, DescentAndFeasibilityOnRandomToys) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 8; ++trial) {
    const Scenario s = random_toy(rng);
    const RobustSolution sol = solve_robust(s);
    EXPECT_TRUE(sol.state.converged) << "trial " << trial;
    for (std::size_t i = 1; i < sol.state.history.size(); ++i) {
      EXPECT_LE(sol.state.history[i], sol.state.history[i - 1] + 1e-8) << "trial " << trial;
    }
    EXPECT_LE(max_rate_excess(s, sol.design), 1e-6) << "trial " << trial;
    EXPECT_LT(rel_err(sol.state.t, worst_case_objective(make_problem(s), sol.state.m)), 1e-12);
    EXPECT_LT(sol.state.history.back(), sol.state.history.front()) << "trial " << trial;
  }
}

TEST(RobustSolver, StateCouplingAndBounds) {
  const Scenario s = paper_scenario(2.0);
  const RobustProblem p = make_problem(s);
  const RobustSolution sol = solve_robust(s);
  const Eigen::ArrayXXd x = sol.state.m * p.sz;
  EXPECT_TRUE((x > 0.0).all());
  EXPECT_TRUE((x < 1.0).all());
  EXPECT_LT(((x + sol.state.n) - 1.0).abs().maxCoeff(), 1e-12);
  EXPECT_LT(sol.state.history.back(), sol.state.history.front());
  EXPECT_EQ(sol.state.history.size(), sol.state.m_change.size() + 1);
}

TEST(RobustSolver, MoreCapacityNeverHurts) {
  double prev = 1e300;
  for (double c : {0.5, 1.0, 2.0, 4.0}) {
    const RobustSolution sol = solve_robust(equiangular_toy(c));
    EXPECT_LT(sol.state.t, prev);
    prev = sol.state.t;
  }
}

TEST(SolverOptions, Validation) {
  SolverOptions o;
  o.delta_th = 0.0;
  EXPECT_THROW(o.validate(), ValidationError);
  o = SolverOptions{};
  o.max_outer_iterations = 0;
  EXPECT_THROW(o.validate(), ValidationError);
}

TEST(TraceCsv, Format) {
  DcState st(make_grid(1.0, 4));
  st.history = {3.0, 2.5};
  st.m_change = {0.25};
  std::ostringstream out;
  write_trace_csv(out, st);
  EXPECT_EQ(out.str(), "iteration,t,aggregate_m_change\n0,3,nan\n1,2.5,0.25\n");
}
