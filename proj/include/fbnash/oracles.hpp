#pragma once

#include "fbnash/equilibrium.hpp"
#include "fbnash/lq.hpp"

#include <map>
#include <set>

namespace fbnash {

// ---------------------------------------------------------------------------
// Brute-force Nash search on the lattice

struct OracleOptions {
  int grid_points = 5;              // per control coordinate
  std::optional<double> radius;     // truncation of unbounded boxes
  double budget = 1e6;              // planned FBSDE solves x lattice nodes
  int max_rounds = 100;             // best-response rounds
  double tie_tolerance = 1e-12;     // relative
  FbsdeConfig fbsde{2000, 0.5, 1e-26, 1};
};

struct OracleReport {
  ControlProcess controls;
  double J1 = 0.0, J2 = 0.0;
  std::array<std::vector<Vec>, 2> grids;          // admissible control values
  std::array<std::vector<int>, 2> strategy;       // grid index per node
  std::array<double, 2> resolution_bound{};       // cost bound from the grid spacing
  std::array<double, 2> spacing{};                // grid step per player
  bool equilibrium = false;   // no unilateral grid deviation improves own cost
  bool cycle = false;         // best responses revisited a profile
  std::string method;         // "joint enumeration" | "iterated best response"
  int rounds = 0;
  Index solves = 0;
};

namespace detail {

// Strategy s of a player with K grid values on `nodes` nodes; node 0 is the
// most significant digit so strategy order is lexicographic in node order.
inline std::vector<int> decode_strategy(Index s, Index K, Index nodes) {
  std::vector<int> digits(static_cast<std::size_t>(nodes));
  for (Index i = nodes - 1; i >= 0; --i) {
    digits[static_cast<std::size_t>(i)] = static_cast<int>(s % K);
    s /= K;
  }
  return digits;
}

inline Field node_field(const std::vector<Vec>& grid, const std::vector<int>& digits, int steps,
                        Index rows) {
  Field f(static_cast<std::size_t>(steps));
  std::size_t node = 0;
  for (int j = 0; j < steps; ++j) {
    f[static_cast<std::size_t>(j)].resize(rows, j + 1);
    for (Index l = 0; l <= j; ++l, ++node) {
      f[static_cast<std::size_t>(j)].col(l) = grid[static_cast<std::size_t>(digits[node])];
    }
  }
  return f;
}

inline double ipow(Index base, Index exp) {
  double r = 1.0;
  for (Index i = 0; i < exp; ++i) r *= static_cast<double>(base);
  return r;
}

}  // namespace detail

/// Grid Nash search over node-function controls on a binomial lattice.
///
/// Each player's controls are lattice node functions on steps 0..N-1 with
/// values on a product grid of `grid_points` per coordinate over the box
/// (truncated to [-R, R]). If the joint enumeration fits the budget, every
/// profile is solved and the lexicographically smallest profile without a
/// profitable unilateral deviation is returned. Otherwise exact best
/// responses (full enumeration of the moving player's strategies) alternate
/// from the grid point nearest the box midpoint until a fixed point or a
/// revisited profile. The budget counts planned FBSDE solves times lattice
/// nodes; exceeding it throws BudgetError.
inline OracleReport brute_force_nash(const GameProblem& prob, const LatticeBackend& backend,
                                     const OracleOptions& opts = {}) {
  prob.check_structure();
  const int steps = backend.grid().steps;
  const Index nodes = static_cast<Index>(steps) * (steps + 1) / 2;
  const double node_count = static_cast<double>(backend.lattice().total_nodes());
  OracleReport rep;

  std::array<Index, 2> K{};
  for (int i = 1; i <= 2; ++i) {
    PointwiseMinOptions popts;
    popts.grid_density = opts.grid_points;
    popts.radius = opts.radius;
    const auto si = static_cast<std::size_t>(i - 1);
    rep.grids[si] = prob.dims.control(i) == 0 ? std::vector<Vec>{Vec()}
                                              : detail::control_grid(prob.box(i), popts);
    K[si] = static_cast<Index>(rep.grids[si].size());
    double h = 0.0;
    const ControlBox& box = prob.box(i);
    for (Index c = 0; c < box.size(); ++c) {
      const double lo = opts.radius ? std::max(box.lower[c], -*opts.radius) : box.lower[c];
      const double hi = opts.radius ? std::min(box.upper[c], *opts.radius) : box.upper[c];
      if (opts.grid_points > 1) h = std::max(h, (hi - lo) / (opts.grid_points - 1));
    }
    rep.spacing[si] = h;
  }
  const double S1 = detail::ipow(K[0], nodes), S2 = detail::ipow(K[1], nodes);

  std::map<std::pair<Index, Index>, std::pair<double, double>> cache;
  auto costs = [&](Index a, Index b) {
    const auto key = std::pair{a, b};
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    ControlProcess u;
    u.u1 = detail::node_field(rep.grids[0], detail::decode_strategy(a, K[0], nodes), steps, prob.dims.k1);
    u.u2 = detail::node_field(rep.grids[1], detail::decode_strategy(b, K[1], nodes), steps, prob.dims.k2);
    const FbsdeSolution sol = solve_fbsde(prob, u, backend, opts.fbsde);
    if (!sol.diagnostics.converged) throw SolverError("brute_force_nash: FBSDE solve did not converge");
    ++rep.solves;
    const std::pair<double, double> c{eval_cost(prob, sol.state, u, 1, backend).value,
                                      eval_cost(prob, sol.state, u, 2, backend).value};
    cache.emplace(key, c);
    return c;
  };
  auto tie = [&](double a, double b) {
    return a <= b + opts.tie_tolerance * (1.0 + std::abs(b));
  };

  Index best_a = -1, best_b = -1;
  if (S1 * S2 * node_count <= opts.budget) {
    rep.method = "joint enumeration";
    const auto n1 = static_cast<Index>(S1), n2 = static_cast<Index>(S2);
    std::vector<double> J1(static_cast<std::size_t>(n1 * n2)), J2(J1.size());
    for (Index a = 0; a < n1; ++a) {
      for (Index b = 0; b < n2; ++b) {
        const auto c = costs(a, b);
        J1[static_cast<std::size_t>(a * n2 + b)] = c.first;
        J2[static_cast<std::size_t>(a * n2 + b)] = c.second;
      }
    }
    cache.clear();
    std::vector<double> min1(static_cast<std::size_t>(n2), std::numeric_limits<double>::infinity());
    std::vector<double> min2(static_cast<std::size_t>(n1), std::numeric_limits<double>::infinity());
    for (Index a = 0; a < n1; ++a) {
      for (Index b = 0; b < n2; ++b) {
        const auto idx = static_cast<std::size_t>(a * n2 + b);
        min1[static_cast<std::size_t>(b)] = std::min(min1[static_cast<std::size_t>(b)], J1[idx]);
        min2[static_cast<std::size_t>(a)] = std::min(min2[static_cast<std::size_t>(a)], J2[idx]);
      }
    }
    for (Index a = 0; a < n1 && best_a < 0; ++a) {
      for (Index b = 0; b < n2; ++b) {
        const auto idx = static_cast<std::size_t>(a * n2 + b);
        if (tie(J1[idx], min1[static_cast<std::size_t>(b)]) &&
            tie(J2[idx], min2[static_cast<std::size_t>(a)])) {
          best_a = a;
          best_b = b;
          break;
        }
      }
    }
    rep.equilibrium = best_a >= 0;
    rep.rounds = 1;
    if (!rep.equilibrium) {
      best_a = 0;
      best_b = 0;
    }
  } else {
    rep.method = "iterated best response";
    if ((S1 + S2) * node_count > opts.budget) {
      throw BudgetError("brute_force_nash: one best-response round needs " +
                        std::to_string((S1 + S2) * node_count) + " node evaluations, budget is " +
                        std::to_string(opts.budget) + "; use fewer steps or grid points");
    }
    auto nearest = [&](int i) {
      const auto si = static_cast<std::size_t>(i - 1);
      const Vec target = prob.box(i).initial_guess();
      Index best = 0;
      for (Index g = 1; g < K[si]; ++g) {
        if ((rep.grids[si][static_cast<std::size_t>(g)] - target).norm() <
            (rep.grids[si][static_cast<std::size_t>(best)] - target).norm()) {
          best = g;
        }
      }
      Index s = 0;
      for (Index n = 0; n < nodes; ++n) s = s * K[si] + best;
      return s;
    };
    Index a = nearest(1), b = nearest(2);
    // Best response of `player` to the other's strategy; the current
    // strategy is kept when it is already optimal within the tie tolerance,
    // otherwise the lexicographically smallest minimizer is taken.
    auto respond = [&](int player, Index current, Index other) {
      const auto count = static_cast<Index>(player == 1 ? S1 : S2);
      std::vector<double> v(static_cast<std::size_t>(count));
      double lowest = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < count; ++c) {
        v[static_cast<std::size_t>(c)] = player == 1 ? costs(c, other).first : costs(other, c).second;
        lowest = std::min(lowest, v[static_cast<std::size_t>(c)]);
      }
      if (tie(v[static_cast<std::size_t>(current)], lowest)) return current;
      for (Index c = 0; c < count; ++c) {
        if (tie(v[static_cast<std::size_t>(c)], lowest)) return c;
      }
      return current;
    };
    std::set<std::pair<Index, Index>> seen{{a, b}};
    double spent = 0.0;
    for (int round = 1; round <= opts.max_rounds; ++round) {
      spent += (S1 + S2) * node_count;
      if (spent > opts.budget) {
        throw BudgetError("brute_force_nash: budget exhausted after " + std::to_string(round - 1) +
                          " rounds; use fewer steps or grid points");
      }
      rep.rounds = round;
      const Index na = respond(1, a, b);
      const Index nb = respond(2, b, na);
      if (na == a && nb == b) {
        rep.equilibrium = true;
        break;
      }
      a = na;
      b = nb;
      if (!seen.insert({a, b}).second) {
        rep.cycle = true;
        break;
      }
    }
    best_a = a;
    best_b = b;
  }

  rep.strategy[0] = detail::decode_strategy(best_a, K[0], nodes);
  rep.strategy[1] = detail::decode_strategy(best_b, K[1], nodes);
  rep.controls.u1 = detail::node_field(rep.grids[0], rep.strategy[0], steps, prob.dims.k1);
  rep.controls.u2 = detail::node_field(rep.grids[1], rep.strategy[1], steps, prob.dims.k2);
  const FbsdeSolution sol = solve_fbsde(prob, rep.controls, backend, opts.fbsde);
  rep.J1 = eval_cost(prob, sol.state, rep.controls, 1, backend).value;
  rep.J2 = eval_cost(prob, sol.state, rep.controls, 2, backend).value;

  // B_i = sum over every control coordinate c (both players, all nodes) of
  // max over +/- of |J_i(u + h e_c) - J_i(u)|.
  for (int mover = 1; mover <= 2; ++mover) {
    const double h = rep.spacing[static_cast<std::size_t>(mover - 1)];
    if (h == 0.0) continue;
    for (int j = 0; j < steps; ++j) {
      for (Index l = 0; l <= j; ++l) {
        for (Index c = 0; c < prob.dims.control(mover); ++c) {
          std::array<double, 2> worst{};
          for (double sign : {-1.0, 1.0}) {
            ControlProcess w = rep.controls;
            w.of(mover)[static_cast<std::size_t>(j)](c, l) += sign * h;
            const FbsdeSolution s = solve_fbsde(prob, w, backend, opts.fbsde);
            ++rep.solves;
            worst[0] = std::max(worst[0], std::abs(eval_cost(prob, s.state, w, 1, backend).value - rep.J1));
            worst[1] = std::max(worst[1], std::abs(eval_cost(prob, s.state, w, 2, backend).value - rep.J2));
          }
          rep.resolution_bound[0] += worst[0];
          rep.resolution_bound[1] += worst[1];
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Single-player Riccati oracle

struct RiccatiOptions {
  int substeps = 50;  // RK4 steps per grid interval
};

struct RiccatiReport {
  std::vector<Mat> P;     // at t_0..t_N
  std::vector<Mat> gain;  // K(t_j), u = K x, j = 0..N-1
  Field x;                // lattice state under the feedback
  Field u;                // controls K(t_j) x_j
};

/// Optimal feedback of player 1 when player 2 is inert and the forward
/// dynamics and player-1 costs do not involve (y, z):
///   dx = (A x + D u) dt + sum_c (C_c x + E_c u) dB_c,
///   J = E[ 1/2 int (x'Qx + u'Nu) dt + 1/2 x(T)'G x(T) ],
///   -P' = A'P + PA + sum C'PC + Q - (PD + sum C'PE)(N + sum E'PE)^{-1}(D'P + sum E'PC),
///   P(T) = G, K = -(N + sum E'PE)^{-1}(D'P + sum E'PC).
/// The Riccati ODE is integrated backward with RK4 and the closed loop is
/// propagated on the lattice.
inline RiccatiReport riccati_oracle(const LQGameSpec& spec, const LatticeBackend& backend,
                                    const RiccatiOptions& opts = {}) {
  const Dims& dims = spec.dims;
  auto zero = [](const Mat& m) { return m.size() == 0 || m.isZero(0.0); };
  auto vzero = [](const Vec& v) { return v.size() == 0 || v.isZero(0.0); };
  std::string why;
  if (dims.k2 != 0) why += " player 2 must be inert (k2 = 0);";
  if (dims.d != 1) why += " lattice requires d = 1;";
  if (!zero(spec.drift.B) || !zero(spec.drift.C) || !vzero(spec.drift.e) || !vzero(spec.drift.e_t)) {
    why += " b must be A x + D1 u1;";
  }
  for (const auto& s : spec.diffusion) {
    if (!zero(s.B) || !zero(s.C) || !vzero(s.e) || !vzero(s.e_t)) why += " sigma must be C x + E u1;";
  }
  const auto& c1 = spec.costs[0];
  if (!zero(c1.R) || c1.S != 0.0 || !zero(c1.H)) why += " player-1 cost must not involve y or z;";
  if (spec.u1_box.lower.allFinite() || spec.u1_box.upper.allFinite()) {
    for (Index c = 0; c < spec.u1_box.size(); ++c) {
      if (std::isfinite(spec.u1_box.lower[c]) || std::isfinite(spec.u1_box.upper[c])) {
        why += " player-1 box must be unbounded;";
        break;
      }
    }
  }
  if (!why.empty()) throw ConfigError("riccati_oracle not applicable:" + why);

  const Mat& A = spec.drift.A;
  const Mat& D = spec.drift.D1;
  const Mat Q = 0.5 * (c1.Q + c1.Q.transpose());
  const Mat Nm = 0.5 * (c1.N + c1.N.transpose());
  const Mat G = 0.5 * (c1.G + c1.G.transpose());
  std::vector<Mat> Cs, Es;
  for (const auto& s : spec.diffusion) {
    Cs.push_back(s.A);
    Es.push_back(s.D1);
  }
  auto gain_of = [&](const Mat& P) {
    Mat lhs = Nm, rhs = D.transpose() * P;
    for (std::size_t c = 0; c < Cs.size(); ++c) {
      lhs += Es[c].transpose() * P * Es[c];
      rhs += Es[c].transpose() * P * Cs[c];
    }
    return Mat(-lhs.ldlt().solve(rhs));
  };
  // dP/dt = -(A'P + PA + sum C'PC + Q) + (PD + sum C'PE)(...)^{-1}(D'P + sum E'PC)
  auto rhs = [&](const Mat& P) {
    Mat out = A.transpose() * P + P * A + Q;
    Mat lhs = Nm, cross = D.transpose() * P;
    for (std::size_t c = 0; c < Cs.size(); ++c) {
      out += Cs[c].transpose() * P * Cs[c];
      lhs += Es[c].transpose() * P * Es[c];
      cross += Es[c].transpose() * P * Cs[c];
    }
    out -= cross.transpose() * lhs.ldlt().solve(cross);
    return Mat(-out);
  };

  const TimeGrid& grid = backend.grid();
  const int steps = grid.steps;
  RiccatiReport rep;
  rep.P.assign(static_cast<std::size_t>(steps) + 1, Mat());
  rep.P[static_cast<std::size_t>(steps)] = G;
  const double h = grid.dt() / opts.substeps;
  Mat P = G;
  for (int j = steps - 1; j >= 0; --j) {
    for (int k = 0; k < opts.substeps; ++k) {
      // Backward in time: step -h.
      const Mat k1 = rhs(P);
      const Mat k2 = rhs(P - 0.5 * h * k1);
      const Mat k3 = rhs(P - 0.5 * h * k2);
      const Mat k4 = rhs(P - h * k3);
      P = P - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      P = 0.5 * (P + P.transpose()).eval();
    }
    rep.P[static_cast<std::size_t>(j)] = P;
  }

  rep.x.resize(static_cast<std::size_t>(steps) + 1);
  rep.x[0] = spec.initial_state.replicate(1, 1);
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Mat K = gain_of(rep.P[sj]);
    rep.gain.push_back(K);
    rep.u.push_back(K * rep.x[sj]);
    const Layer drift = (A + D * K) * rep.x[sj];
    const Layer diffusion = (Cs[0] + Es[0] * K) * rep.x[sj];
    rep.x[sj + 1] = backend.propagate(j, rep.x[sj], drift, diffusion);
  }
  return rep;
}

/// Relative L^2(dt x P) distance ||u - v|| / ||v|| between control fields.
template <ScenarioBackend B>
double relative_l2(const Field& u, const Field& v, const B& backend) {
  double num = 0.0, den = 0.0;
  for (int j = 0; j < backend.grid().steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Vec w = backend.weights(j);
    num += (u[sj] - v[sj]).colwise().squaredNorm().dot(w.transpose());
    den += v[sj].colwise().squaredNorm().dot(w.transpose());
  }
  return std::sqrt(num / den);
}

}  // namespace fbnash
