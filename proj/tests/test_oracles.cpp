#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace fbnash;
using namespace fbnash::testing;

namespace {

// dx = u1 dt, l_1 = u1^2/2, phi_1 = x^2/2, x(0) = 1, U_1 = [-1, 1], player 2 inert.
LQGameSpec one_player_spec() {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 1, 0});
  s.initial_state = Vec::Ones(1);
  s.drift.D1(0, 0) = 1.0;
  s.costs[0].N(0, 0) = 1.0;
  s.costs[0].G(0, 0) = 1.0;
  s.u1_box = ControlBox::uniform(1, -1.0, 1.0);
  return s;
}

// Weakly coupled two-player game on [-1, 1]^2.
LQGameSpec small_game() {
  LQGameSpec s = coupled_spec();
  s.drift.B(0, 0) = 0.05;
  s.u1_box = s.u2_box = ControlBox::uniform(1, -1.0, 1.0);
  return s;
}

// All node-function controls with values in `grid` on a lattice of N steps.
std::vector<Field> all_strategies(const std::vector<double>& grid, int steps) {
  std::vector<Field> out{Field{}};
  for (int j = 0; j < steps; ++j) {
    for (int l = 0; l <= j; ++l) {
      std::vector<Field> next;
      for (const Field& f : out) {
        for (double g : grid) {
          Field h = f;
          if (l == 0) h.push_back(Layer(1, j + 1));
          h.back()(0, l) = g;
          next.push_back(h);
        }
      }
      out = std::move(next);
    }
  }
  return out;
}

double cost(const GameProblem& p, const ControlProcess& u, const LatticeBackend& be, int i) {
  const FbsdeSolution s = solve_fbsde(p, u, be, tight());
  return eval_cost(p, s.state, u, i, be).value;
}

}  // namespace

TEST(Strategy, DecodeAndNodeField) {
  EXPECT_EQ(detail::decode_strategy(7, 3, 3), (std::vector<int>{0, 2, 1}));
  EXPECT_EQ(detail::decode_strategy(0, 5, 2), (std::vector<int>{0, 0}));
  const std::vector<Vec> grid{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  const Field f = detail::node_field(grid, {1, 0, 1}, 2, 1);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0](0, 0), 1.0);
  EXPECT_EQ(f[1](0, 0), -1.0);
  EXPECT_EQ(f[1](0, 1), 1.0);
}

TEST(BruteForce, OneStepClosedForm) {
  const GameProblem p = lq_to_problem(one_player_spec());
  const LatticeBackend be(1.0, 1);
  const OracleReport rep = brute_force_nash(p, be);
  // J(u) = u^2/2 + (1 + u)^2/2 over u in {-1, -0.5, 0, 0.5, 1}.
  auto J = [](double u) { return 0.5 * u * u + 0.5 * (1.0 + u) * (1.0 + u); };
  double best = 0.0, best_u = 0.0;
  for (int g = 0; g < 5; ++g) {
    const double u = -1.0 + 0.5 * g;
    if (g == 0 || J(u) < best) {
      best = J(u);
      best_u = u;
    }
  }
  EXPECT_EQ(rep.method, "joint enumeration");
  EXPECT_TRUE(rep.equilibrium);
  EXPECT_EQ(rep.controls.u1[0](0, 0), best_u);
  EXPECT_NEAR(rep.J1, best, 1e-14);
  EXPECT_EQ(rep.spacing[0], 0.5);
  EXPECT_EQ(rep.spacing[1], 0.0);
  EXPECT_NEAR(rep.resolution_bound[0], std::max(std::abs(J(best_u - 0.5) - best), std::abs(J(best_u + 0.5) - best)),
              1e-14);
  EXPECT_EQ(rep.resolution_bound[1], 0.0);
}

TEST(BruteForce, TwoStepGameHasNoProfitableDeviation) {
  const GameProblem p = lq_to_problem(small_game());
  const LatticeBackend be(1.0, 2);
  OracleOptions opts;
  opts.grid_points = 3;
  const OracleReport rep = brute_force_nash(p, be, opts);
  EXPECT_EQ(rep.method, "joint enumeration");
  ASSERT_TRUE(rep.equilibrium);
  EXPECT_NEAR(rep.J1, cost(p, rep.controls, be, 1), 1e-13);

  // Independent enumeration of every unilateral deviation.
  const auto strategies = all_strategies({-1.0, 0.0, 1.0}, 2);
  ASSERT_EQ(strategies.size(), 27u);
  for (int i : {1, 2}) {
    const double own = i == 1 ? rep.J1 : rep.J2;
    double best = std::numeric_limits<double>::infinity();
    for (const Field& s : strategies) {
      ControlProcess w = rep.controls;
      w.of(i) = s;
      best = std::min(best, cost(p, w, be, i));
    }
    EXPECT_LE(own, best + 1e-12 * (1.0 + std::abs(best))) << "player " << i;
  }
}

TEST(BruteForce, BestResponseWhenJointEnumerationExceedsBudget) {
  const GameProblem p = lq_to_problem(small_game());
  const LatticeBackend be(1.0, 2);
  OracleOptions opts;
  opts.grid_points = 3;
  // Joint enumeration needs 27^2 * 6 node evaluations, one round 54 * 6.
  opts.budget = 4000;
  const OracleReport rep = brute_force_nash(p, be, opts);
  EXPECT_EQ(rep.method, "iterated best response");
  ASSERT_TRUE(rep.equilibrium) << "cycle: " << rep.cycle;
  EXPECT_GE(rep.rounds, 1);
  const auto strategies = all_strategies({-1.0, 0.0, 1.0}, 2);
  for (int i : {1, 2}) {
    const double own = i == 1 ? rep.J1 : rep.J2;
    for (const Field& s : strategies) {
      ControlProcess w = rep.controls;
      w.of(i) = s;
      EXPECT_LE(own, cost(p, w, be, i) + 1e-12 * (1.0 + std::abs(own)));
    }
  }
}

TEST(BruteForce, BudgetAndGridErrors) {
  const GameProblem p = lq_to_problem(small_game());
  const LatticeBackend be(1.0, 2);
  OracleOptions opts;
  opts.budget = 1;
  EXPECT_THROW(brute_force_nash(p, be, opts), BudgetError);
  LQGameSpec s = small_game();
  s.u2_box = ControlBox::unbounded(1);
  const GameProblem q = lq_to_problem(s);
  EXPECT_THROW(brute_force_nash(q, be), ConfigError);
  opts = OracleOptions{};
  opts.radius = 1.0;
  opts.grid_points = 2;
  EXPECT_NO_THROW(brute_force_nash(q, be, opts));
}

TEST(Riccati, ScalarSolutionMatchesFineEuler) {
  const LQGameSpec s = regulator_spec();
  const LatticeBackend be(1.0, 10);
  const RiccatiReport r = riccati_oracle(s, be);
  // -P' = 2aP + c^2 P + Q - (dP + ceP)^2 / (N + e^2 P), P(1) = 1.
  const double a = 0.2, c = 0.3, d = 1.0, e = 0.2;
  double P = 1.0;
  const int M = 400000;
  for (int k = 0; k < M; ++k) {
    const double rhs = 2 * a * P + c * c * P + 1.0 - std::pow(d * P + c * e * P, 2) / (1.0 + e * e * P);
    P += rhs / M;
  }
  EXPECT_NEAR(r.P[0](0, 0), P, 1e-5);
  EXPECT_EQ(r.P.back()(0, 0), 1.0);
  const double K0 = -(d * r.P[0](0, 0) + c * e * r.P[0](0, 0)) / (1.0 + e * e * r.P[0](0, 0));
  EXPECT_NEAR(r.gain[0](0, 0), K0, 1e-14);
  EXPECT_EQ(r.u[0](0, 0), r.gain[0](0, 0));
  ASSERT_EQ(r.x.size(), 11u);
  EXPECT_EQ(r.x[10].cols(), 11);
}

TEST(Riccati, ApplicabilityChecks) {
  const LatticeBackend be(1.0, 4);
  EXPECT_THROW(riccati_oracle(coupled_spec(), be), ConfigError);
  LQGameSpec s = regulator_spec();
  s.drift.B(0, 0) = 0.1;
  EXPECT_THROW(riccati_oracle(s, be), ConfigError);
  s = regulator_spec();
  s.u1_box = ControlBox::uniform(1, -1.0, 1.0);
  EXPECT_THROW(riccati_oracle(s, be), ConfigError);
  s = regulator_spec();
  s.costs[0].R(0, 0) = 1.0;
  EXPECT_THROW(riccati_oracle(s, be), ConfigError);
}

TEST(Riccati, GradientSolverAgrees) {
  const LQGameSpec s = regulator_spec();
  const LatticeBackend be(1.0, 32);
  const RiccatiReport r = riccati_oracle(s, be);
  GradientConfig g;
  g.step = 0.5;
  g.tol = 1e-8;
  const EquilibriumReport rep = solve_nash(lq_to_problem(s), be, tight(), g);
  ASSERT_TRUE(rep.converged) << rep.reason;
  EXPECT_LT(relative_l2(rep.controls.u1, r.u, be), 0.02);
}

TEST(RelativeL2, Basics) {
  const LatticeBackend be(1.0, 3);
  const Field v = node_field(be, 1, [](double t, double b) { return 1.0 + t + b; });
  Field u = v;
  EXPECT_EQ(relative_l2(u, v, be), 0.0);
  for (auto& l : u) l *= 3.0;
  EXPECT_NEAR(relative_l2(u, v, be), 2.0, 1e-15);
}
