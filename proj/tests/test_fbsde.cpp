#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fbnash;
using namespace fbnash::testing;

namespace {

Field zeros(const LatticeBackend& be, Index rows) {
  Field f;
  for (int j = 0; j < be.grid().steps; ++j) f.push_back(Layer::Zero(rows, be.scenarios(j)));
  return f;
}

// Decoupled scalar problem with forward drift mu + alpha x, diffusion beta x
// and generator f = gamma y.
GameProblem scalar_problem(double mu, double alpha, double beta, double gamma, double xi) {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 0, 0});
  s.initial_state = Vec::Ones(1);
  s.xi = Vec::Constant(1, xi);
  s.drift.e[0] = mu;
  s.drift.A(0, 0) = alpha;
  s.diffusion[0].A(0, 0) = beta;
  s.generator.B(0, 0) = gamma;
  return lq_to_problem(s);
}

}  // namespace

TEST(ForwardPass, ZeroCoefficientsKeepInitialState) {
  const GameProblem p = lq_to_problem(zero_spec());
  const LatticeBackend be(1.0, 10);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.3), Vec::Constant(1, -2.0));
  const Field x = forward_pass(p, u, zeros(be, 1), zeros(be, 1), be);
  ASSERT_EQ(x.size(), 11u);
  EXPECT_LE(max_abs_dev(x, 1.0), 1e-15);
}

TEST(ForwardPass, ConstantDriftIsExact) {
  const GameProblem p = scalar_problem(0.5, 0.0, 0.0, 0.0, 0.0);
  const LatticeBackend be(1.0, 8);
  const auto u = ControlProcess::initial(p, be);
  const Field x = forward_pass(p, u, zeros(be, 1), zeros(be, 1), be);
  EXPECT_LE(max_abs_dev(Field{x.back()}, 1.5), 1e-15);
}

TEST(ForwardPass, GeometricMeanMonteCarlo) {
  const double alpha = 0.5, beta = 0.4;
  const GameProblem p = scalar_problem(0.0, alpha, beta, 0.0, 0.0);
  const int N = 64;
  const Index P = 100000;
  const MonteCarloBackend be(sample_ensemble(TimeGrid::uniform(1.0, N), P, 1, 2024));
  const auto u = ControlProcess::initial(p, be);
  Field y_hat, z;
  for (int j = 0; j < N; ++j) {
    y_hat.push_back(Layer::Zero(1, P));
    z.push_back(Layer::Zero(1, P));
  }
  const Field x = forward_pass(p, u, y_hat, z, be);
  const double mean = x.back().mean();
  EXPECT_LE(std::abs(mean / std::exp(alpha) - 1.0), 0.02);
}

TEST(ForwardPass, NonFiniteStateAborts) {
  const GameProblem p = scalar_problem(0.0, 1e308, 0.0, 0.0, 0.0);
  const LatticeBackend be(1.0, 4);
  try {
    forward_pass(p, ControlProcess::initial(p, be), zeros(be, 1), zeros(be, 1), be);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.step(), 2);  // x_1 = 1 + 0.25e308 is finite, x_2 overflows
    EXPECT_EQ(e.scenario(), 0);
  }
}

TEST(BackwardPass, ConstantTerminalValue) {
  const GameProblem p = scalar_problem(0.1, 0.2, 0.3, 0.0, 2.0);
  const LatticeBackend be(1.0, 12);
  const auto u = ControlProcess::initial(p, be);
  const Field x = forward_pass(p, u, zeros(be, 1), zeros(be, 1), be);
  const BackwardResult r = backward_pass(p, u, x, be);
  EXPECT_LE(max_abs_dev(r.y, 2.0), 1e-15);
  EXPECT_LE(max_abs_dev(r.z, 0.0), 1e-14);

  const MonteCarloBackend mc(sample_ensemble(TimeGrid::uniform(1.0, 6), 500, 1, 3));
  const auto umc = ControlProcess::initial(p, mc);
  Field yh, zz;
  for (int j = 0; j < 6; ++j) {
    yh.push_back(Layer::Zero(1, 500));
    zz.push_back(Layer::Zero(1, 500));
  }
  const BackwardResult rm = backward_pass(p, umc, forward_pass(p, umc, yh, zz, mc), mc);
  EXPECT_LT(max_abs_dev(rm.y, 2.0), 1e-12);
  // z is the fitted value of 2 dB / dt: sampling noise, with an exact mean.
  for (int j = 0; j < 6; ++j) {
    const double target = 2.0 * mc.ensemble().increments[static_cast<std::size_t>(j)].mean() / mc.grid().dt();
    EXPECT_NEAR(rm.z[static_cast<std::size_t>(j)].mean(), target, 1e-10);
  }
}

TEST(BackwardPass, LinearGeneratorConverges) {
  const double alpha = 0.5, c = 1.0;
  const GameProblem p = scalar_problem(0.0, 0.0, 0.0, alpha, c);
  const int N = 256;
  const LatticeBackend be(1.0, N);
  const auto u = ControlProcess::initial(p, be);
  const BackwardResult r = backward_pass(p, u, forward_pass(p, u, zeros(be, 1), zeros(be, 1), be), be);
  const double y0 = r.y[0](0, 0);
  // Explicit Euler on y' = -alpha y backward: c (1 + alpha dt)^N.
  EXPECT_NEAR(y0, c * std::pow(1.0 + alpha / N, N), 1e-12);
  EXPECT_LE(std::abs(y0 / (c * std::exp(alpha)) - 1.0), 1e-3);
  EXPECT_EQ(max_abs_dev(r.z, 0.0), 0.0);
}

TEST(BackwardPass, MartingaleRepresentationOfBrownianMotion) {
  GameProblem p = lq_to_problem(LQGameSpec::zeros({1, 1, 1, 0, 0}));
  p.terminal.xi = [](const Vec& b) { return b; };
  const LatticeBackend be(1.0, 16);
  const auto u = ControlProcess::initial(p, be);
  const BackwardResult r = backward_pass(p, u, forward_pass(p, u, zeros(be, 1), zeros(be, 1), be), be);
  EXPECT_LT(max_abs_dev(r.z, 1.0), 1e-12);
  for (int j = 0; j <= 16; ++j) {
    EXPECT_LT((r.y[static_cast<std::size_t>(j)] - be.brownian(j)).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(SolveFbsde, ZeroProblemOneIteration) {
  const GameProblem p = lq_to_problem(zero_spec());
  const LatticeBackend be(1.0, 16);
  const FbsdeSolution sol = solve_fbsde(p, ControlProcess::initial(p, be), be);
  EXPECT_EQ(sol.diagnostics.iterations, 1);
  EXPECT_TRUE(sol.diagnostics.converged);
  EXPECT_LE(max_abs_dev(sol.state.x, 1.0), 1e-15);
  EXPECT_EQ(max_abs_dev(sol.state.y, 0.0), 0.0);
  EXPECT_EQ(max_abs_dev(sol.state.z, 0.0), 0.0);
}

TEST(SolveFbsde, DecoupledConvergesInTwoIterations) {
  LQGameSpec s = random_spec(7, {1, 1, 1, 1, 1});
  s.drift.B.setZero();
  s.drift.C.setZero();
  s.diffusion[0].B.setZero();
  s.diffusion[0].C.setZero();
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(1.0, 20);
  const FbsdeSolution sol = solve_fbsde(p, ControlProcess::constant(be, Vec::Ones(1), -Vec::Ones(1)), be);
  EXPECT_TRUE(sol.diagnostics.converged);
  EXPECT_LE(sol.diagnostics.iterations, 2);
}

TEST(SolveFbsde, WeaklyCoupledGeometricDecrease) {
  LQGameSpec s = random_spec(8, {1, 1, 1, 1, 1}, 0.1);
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(1.0, 32);
  FbsdeConfig cfg;
  cfg.tol = 1e-20;
  cfg.max_picard = 200;
  const FbsdeSolution sol = solve_fbsde(p, ControlProcess::initial(p, be), be, cfg);
  ASSERT_TRUE(sol.diagnostics.converged);
  const auto& h = sol.diagnostics.history;
  ASSERT_GE(h.size(), 4u);
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LT(h[i], 0.6 * h[i - 1]) << i;
  EXPECT_TRUE(sol.diagnostics.warnings.empty());
  EXPECT_LE(sol.diagnostics.residual, cfg.tol);
}

TEST(SolveFbsde, PinningAndDiscreteDynamics) {
  const LQGameSpec s = coupled_spec();
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(1.0, 24);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.4), Vec::Constant(1, -0.3));
  FbsdeConfig cfg;
  cfg.tol = 1e-24;
  cfg.max_picard = 500;
  const FbsdeSolution sol = solve_fbsde(p, u, be, cfg);
  ASSERT_TRUE(sol.diagnostics.converged);
  const auto& st = sol.state;
  EXPECT_EQ(st.x[0], s.initial_state.replicate(1, 1));
  EXPECT_EQ(max_abs_dev(Field{st.y.back()}, 0.0), 0.0);

  // Forward dynamics hold exactly; backward dynamics within the tolerance.
  const double dt = be.grid().dt();
  double backward = 0.0;
  for (int j = 0; j < 24; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index S = be.scenarios(j);
    Layer drift(1, S), diff(1, S), gen(1, S);
    for (Index k = 0; k < S; ++k) {
      const double x = st.x[sj](0, k), y = st.y_hat[sj](0, k), z = st.z[sj](0, k);
      drift(0, k) = 0.2 * x + 0.1 * y + u.u1[sj](0, k) + 0.5 * u.u2[sj](0, k);
      diff(0, k) = 0.3 * x + 0.2 * u.u1[sj](0, k);
      gen(0, k) = 0.5 * x + 0.2 * y + 0.1 * z + 0.3 * u.u2[sj](0, k);
    }
    EXPECT_LT((be.propagate(j, st.x[sj], drift, diff) - st.x[sj + 1]).cwiseAbs().maxCoeff(), 1e-13);
    const Projection pr = be.project(j, st.y[sj + 1], st.x[sj]);
    const Layer res = st.y[sj] - pr.mean - dt * gen;
    backward = std::max(backward, res.colwise().squaredNorm().dot(be.weights(j).transpose()));
    EXPECT_LT((pr.martingale - st.z[sj]).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LE(backward, cfg.tol);
}

TEST(SolveFbsde, WarmStartFromFixedPoint) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 16);
  const auto u = ControlProcess::initial(p, be);
  FbsdeConfig cfg;
  cfg.tol = 1e-20;
  cfg.max_picard = 500;
  const FbsdeSolution cold = solve_fbsde(p, u, be, cfg);
  const FbsdeSolution warm = solve_fbsde(p, u, be, cfg, &cold.state);
  EXPECT_LT(warm.diagnostics.iterations, cold.diagnostics.iterations);
  EXPECT_LT(max_abs_diff(warm.state.y, cold.state.y), 1e-9);
}

TEST(SolveFbsde, NonConvergenceReturnsBestIterate) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 16);
  FbsdeConfig cfg;
  cfg.max_picard = 2;
  const FbsdeSolution sol = solve_fbsde(p, ControlProcess::initial(p, be), be, cfg);
  EXPECT_FALSE(sol.diagnostics.converged);
  EXPECT_EQ(sol.diagnostics.iterations, 2);
  EXPECT_EQ(sol.diagnostics.residual, std::min(sol.diagnostics.history[0], sol.diagnostics.history[1]));
}

TEST(SolveFbsde, StrongCouplingDiverges) {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 0, 0});
  s.initial_state = Vec::Ones(1);
  s.xi = Vec::Ones(1);
  s.drift.B(0, 0) = 3.0;
  s.generator.A(0, 0) = 3.0;
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(1.0, 16);
  FbsdeConfig cfg;
  cfg.damping = 1.0;
  cfg.max_picard = 100;
  try {
    solve_fbsde(p, ControlProcess::initial(p, be), be, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const auto& h = e.diagnostics().history;
    ASSERT_GE(h.size(), 2u);
    EXPECT_GT(h.back(), 10.0 * h.front());
  }
}

TEST(SolveFbsde, InputValidation) {
  const GameProblem p = lq_to_problem(zero_spec());
  const LatticeBackend be(1.0, 4);
  FbsdeConfig bad;
  bad.damping = 0.0;
  EXPECT_THROW(solve_fbsde(p, ControlProcess::initial(p, be), be, bad), ConfigError);
  auto u = ControlProcess::initial(p, be);
  u.u1[2] = Layer::Zero(1, 2);
  EXPECT_THROW(solve_fbsde(p, u, be), ShapeError);
  const MonteCarloBackend mc(sample_ensemble(TimeGrid::uniform(1.0, 4), 10, 2, 1));
  EXPECT_THROW(solve_fbsde(p, ControlProcess::initial(p, mc), mc), ConfigError);
}

TEST(SolveFbsde, ThreadCountDoesNotChangeResults) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const MonteCarloBackend mc(sample_ensemble(TimeGrid::uniform(1.0, 8), 1000, 1, 6));
  const auto u = ControlProcess::constant(mc, Vec::Constant(1, 0.2), Vec::Constant(1, 0.1));
  FbsdeConfig one, four;
  four.threads = 4;
  const FbsdeSolution a = solve_fbsde(p, u, mc, one), b = solve_fbsde(p, u, mc, four);
  EXPECT_EQ(max_abs_diff(a.state.x, b.state.x), 0.0);
  EXPECT_EQ(max_abs_diff(a.state.y, b.state.y), 0.0);
  EXPECT_EQ(a.diagnostics.history, b.diagnostics.history);
}
