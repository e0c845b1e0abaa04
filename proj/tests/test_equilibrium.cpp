#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fbnash;
using namespace fbnash::testing;

namespace {

// Zero dynamics with l_1 = u1^2/2 - c u1 and l_2 = u2^2/2 on [-1, 1]^2.
GameProblem tilted_problem(double c) {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 1, 1});
  s.initial_state = Vec::Ones(1);
  s.costs[1].N(0, 0) = 1.0;
  s.u1_box = s.u2_box = ControlBox::uniform(1, -1.0, 1.0);
  GameProblem p = lq_to_problem(s);
  p.costs.running[0] = [c](const Point& pt, ScalarJet& j) {
    j.value = 0.5 * pt.u1.squaredNorm() - c * pt.u1[0];
    j.dx = Vec::Zero(1);
    j.dy = Vec::Zero(1);
    j.dz = Vec::Zero(1);
    j.du1 = pt.u1.array() - c;
    j.du2 = Vec::Zero(1);
  };
  return p;
}

Field random_direction(const LatticeBackend& be, Index rows, std::mt19937_64& rng) {
  Field f;
  for (int j = 0; j < be.grid().steps; ++j) f.push_back(random_matrix(rng, rows, be.scenarios(j), 1.0));
  return f;
}

double cost(const GameProblem& p, const ControlProcess& u, const LatticeBackend& be, int player) {
  const FbsdeSolution s = solve_fbsde(p, u, be, tight());
  return eval_cost(p, s.state, u, player, be).value;
}

}  // namespace

TEST(EvalCost, ZeroProblemIsHalf) {
  const GameProblem p = lq_to_problem(zero_spec());
  const LatticeBackend be(1.0, 8);
  const auto u = ControlProcess::initial(p, be);
  const FbsdeSolution s = solve_fbsde(p, u, be);
  for (int i : {1, 2}) {
    const CostEstimate c = eval_cost(p, s.state, u, i, be);
    EXPECT_NEAR(c.value, 0.5, 1e-15);
    EXPECT_EQ(c.std_error, 0.0);
  }
  EXPECT_THROW(eval_cost(p, s.state, u, 0, be), ConfigError);
}

TEST(EvalCost, RunningControlCostIntegrates) {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 1, 1});
  s.horizon = 2.0;
  s.costs[0].N(0, 0) = 1.0;
  s.costs[1].M(0, 0) = 4.0;
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(2.0, 10);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.3), Vec::Zero(1));
  const FbsdeSolution sol = solve_fbsde(p, u, be);
  EXPECT_NEAR(eval_cost(p, sol.state, u, 1, be).value, 0.5 * 0.09 * 2.0, 1e-15);
  EXPECT_NEAR(eval_cost(p, sol.state, u, 2, be).value, 0.5 * 4.0 * 0.09 * 2.0, 1e-14);
}

TEST(EvalCost, MonteCarloStandardError) {
  // phi = x^2/2 with dx = 0.5 dB: J = (1 + 0.25 T)/2 on both backends.
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 0, 0});
  s.initial_state = Vec::Ones(1);
  s.diffusion[0].e[0] = 0.5;
  s.costs[0].G(0, 0) = 1.0;
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend lat(1.0, 4);
  const auto ul = ControlProcess::initial(p, lat);
  EXPECT_NEAR(eval_cost(p, solve_fbsde(p, ul, lat).state, ul, 1, lat).value, 0.625, 1e-15);

  const MonteCarloBackend mc(sample_ensemble(TimeGrid::uniform(1.0, 4), 20000, 1, 9));
  const auto um = ControlProcess::initial(p, mc);
  const CostEstimate c = eval_cost(p, solve_fbsde(p, um, mc).state, um, 1, mc);
  EXPECT_GT(c.std_error, 0.0);
  EXPECT_LT(std::abs(c.value - 0.625), 4.0 * c.std_error);
}

TEST(Gateaux, AdjointFormMatchesFiniteDifferences) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 16);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.2), Vec::Constant(1, -0.3));
  std::mt19937_64 rng(3);
  for (int i : {1, 2}) {
    for (int r = 0; r < 2; ++r) {
      const Field v = random_direction(be, 1, rng);
      const GateauxResult g = gateaux_derivative(p, u, v, i, be);
      EXPECT_FALSE(g.box_inflated);
      EXPECT_LE(std::abs(g.adjoint_form - g.finite_diff_form), 1e-3 * std::abs(g.finite_diff_form))
          << "player " << i;
    }
  }
}

TEST(Gateaux, BoxInflationAndShapes) {
  const GameProblem p = tilted_problem(0.5);
  const LatticeBackend be(1.0, 4);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 1.0), Vec::Zero(1));
  std::mt19937_64 rng(1);
  const Field v = random_direction(be, 1, rng);
  const GateauxResult g = gateaux_derivative(p, u, v, 1, be);
  EXPECT_TRUE(g.box_inflated);
  // J_1 = sum_j dt E[u^2/2 - 0.5 u] is exact under central differences.
  EXPECT_NEAR(g.adjoint_form, g.finite_diff_form, 1e-10);
  EXPECT_THROW(gateaux_derivative(p, u, Field(3), 1, be), ShapeError);
  EXPECT_THROW(gateaux_derivative(p, u, v, 3, be), ConfigError);
}

TEST(EvaluateControls, ConsistentWithComponents) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 8);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.2), Vec::Constant(1, -0.3));
  const ControlEvaluation ev = evaluate_controls(p, u, be, FbsdeConfig{});
  const FbsdeSolution sol = solve_fbsde(p, u, be);
  EXPECT_LT(max_abs_diff(ev.state.y, sol.state.y), 1e-14);
  EXPECT_NEAR(ev.J1.value, eval_cost(p, sol.state, u, 1, be).value, 1e-13);
  const auto a2 = solve_adjoint(p, sol.state, u, 2, be).adjoint;
  const TrajectoryJets jets = evaluate_jets(p, sol.state, u, be);
  EXPECT_LT(max_abs_diff(ev.grad2, control_gradient(jets, a2, be)), 1e-12);
  EXPECT_NEAR(ev.vi.rho(2), vi_residual(p, sol.state, ev.adj1, a2, u, be).rho(2), 1e-12);
}

TEST(SolveNash, CoupledGameConvergesToStationaryPoint) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 8);
  GradientConfig g;
  g.step = 0.5;
  g.tol = 1e-7;
  VerificationOptions v;
  v.radius = 3.0;
  const EquilibriumReport rep = solve_nash(p, be, tight(), g, v);
  ASSERT_TRUE(rep.converged) << rep.reason;
  EXPECT_EQ(rep.reason, "converged");
  EXPECT_LE(std::max(rep.rho1, rep.rho2), 1e-7);
  EXPECT_EQ(rep.certificate.verdict, Verdict::Certified);
  EXPECT_EQ(rep.iterations, static_cast<int>(rep.history.size()));
  EXPECT_GE(rep.evaluations, rep.iterations);
  for (std::size_t h = 1; h < rep.history.size(); ++h) {
    const double prev = std::max(rep.history[h - 1].rho1, rep.history[h - 1].rho2);
    EXPECT_LT(std::max(rep.history[h].rho1, rep.history[h].rho2), prev);
    EXPECT_GT(rep.history[h].alpha, 0.0);
  }

  // No unilateral perturbation lowers the deviating player's cost.
  std::mt19937_64 rng(12);
  for (int i : {1, 2}) {
    const double base = i == 1 ? rep.J1.value : rep.J2.value;
    for (int r = 0; r < 5; ++r) {
      ControlProcess w = rep.controls;
      const Field v = random_direction(be, 1, rng);
      for (std::size_t j = 0; j < v.size(); ++j) w.of(i)[j] += 0.1 * v[j];
      EXPECT_GT(cost(p, w, be, i), base - 1e-9);
    }
  }

  // Best-response sweeps reach the same point.
  g.mode = UpdateMode::BestResponseSweep;
  const EquilibriumReport br = solve_nash(p, be, tight(), g, v);
  ASSERT_TRUE(br.converged) << br.reason;
  EXPECT_LT(relative_l2(br.controls.u1, rep.controls.u1, be), 1e-5);
  EXPECT_LT(relative_l2(br.controls.u2, rep.controls.u2, be), 1e-5);
}

TEST(SolveNash, ActiveConstraint) {
  const GameProblem p = tilted_problem(2.0);
  const LatticeBackend be(1.0, 4);
  const EquilibriumReport rep = solve_nash(p, be);
  ASSERT_TRUE(rep.converged);
  EXPECT_LE(max_abs_dev(rep.controls.u1, 1.0), 1e-12);
  EXPECT_LE(max_abs_dev(rep.controls.u2, 0.0), 1e-12);
  EXPECT_EQ(rep.certificate.verdict, Verdict::Certified);
}

TEST(SolveNash, StationaryInitialGuessStopsImmediately) {
  const GameProblem p = tilted_problem(0.5);
  const LatticeBackend be(1.0, 4);
  const auto u0 = ControlProcess::constant(be, Vec::Constant(1, 0.5), Vec::Zero(1));
  const EquilibriumReport rep = solve_nash(p, be, FbsdeConfig{}, GradientConfig{}, VerificationOptions{}, &u0);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_EQ(rep.evaluations, 1);
  EXPECT_EQ(rep.rho1, 0.0);
}

TEST(SolveNash, IterationLimitAndBadConfig) {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 4);
  GradientConfig g;
  g.max_iter = 2;
  g.tol = 1e-12;
  const EquilibriumReport rep = solve_nash(p, be, FbsdeConfig{}, g);
  EXPECT_FALSE(rep.converged);
  EXPECT_EQ(rep.reason, "iteration limit reached");
  EXPECT_EQ(rep.iterations, 2);
  g.step = -1.0;
  EXPECT_THROW(solve_nash(p, be, FbsdeConfig{}, g), ConfigError);
}
