#pragma once

#include "fbnash/adjoint.hpp"

#include <functional>
#include <optional>
#include <random>

namespace fbnash {

// ---------------------------------------------------------------------------
// Variational-inequality residuals

struct PlayerViResidual {
  Field r;                        // |u - Proj(u - H_u)| per step j < N and scenario
  double rho = 0.0;               // max_j sqrt(E_j r^2)
  double min_inner_product = 0.0; // min over points and v in U (|v - u|_inf <= 1) of <H_u, v - u>
};

struct ViResidualReport {
  std::array<PlayerViResidual, 2> players;

  double rho(int player) const { return players[static_cast<std::size_t>(player - 1)].rho; }
  double merit() const { return std::max(players[0].rho, players[1].rho); }
};

namespace detail {

template <ScenarioBackend B>
PlayerViResidual vi_from_gradient(const ControlBox& box, const Field& u, const Field& grad,
                                  const B& backend) {
  PlayerViResidual out;
  const int steps = backend.grid().steps;
  out.r.resize(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    Layer r(1, count);
    for (Index s = 0; s < count; ++s) {
      const Vec uc = u[sj].col(s);
      const Vec gc = grad[sj].col(s);
      r(0, s) = (uc - box.project(uc - gc)).norm();
      double inner = 0.0;
      for (Index c = 0; c < uc.size(); ++c) {
        const double lo = std::max(box.lower[c], uc[c] - 1.0) - uc[c];
        const double hi = std::min(box.upper[c], uc[c] + 1.0) - uc[c];
        inner += std::min(gc[c] * lo, gc[c] * hi);
      }
      out.min_inner_product = std::min(out.min_inner_product, inner);
    }
    const double ms = r.row(0).array().square().matrix().dot(backend.weights(j));
    out.rho = std::max(out.rho, std::sqrt(ms));
    out.r[sj] = std::move(r);
  }
  return out;
}

}  // namespace detail

/// Projected-gradient residuals of both players' first-order conditions,
/// with H_i differentiated in the player's own control and evaluated with
/// that player's adjoints. Gradients come from eval_hamiltonian.
template <ScenarioBackend B>
ViResidualReport vi_residual(const GameProblem& prob, const StateTrajectory& traj,
                             const AdjointTrajectory& adj1, const AdjointTrajectory& adj2,
                             const ControlProcess& u, const B& backend, int threads = 1) {
  const TimeGrid& grid = backend.grid();
  ViResidualReport rep;
  const std::array<const AdjointTrajectory*, 2> adj{&adj1, &adj2};
  for (int i = 1; i <= 2; ++i) {
    const AdjointTrajectory& a = *adj[static_cast<std::size_t>(i - 1)];
    Field g(static_cast<std::size_t>(grid.steps));
    for (int j = 0; j < grid.steps; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      const Index count = backend.scenarios(j);
      g[sj].resize(prob.dims.control(i), count);
      parallel_for(count, threads, [&](Index begin, Index end) {
        for (Index s = begin; s < end; ++s) {
          const auto in = trajectory_inputs(prob, traj, u, grid.time(j), j, s, a.p_hat[sj].col(s),
                                            a.q[sj].col(s), a.k[sj].col(s));
          g[sj].col(s) = eval_hamiltonian(prob, in, i).du(i);
        }
      });
    }
    rep.players[static_cast<std::size_t>(i - 1)] =
        detail::vi_from_gradient(prob.box(i), u.of(i), g, backend);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Sufficient-condition checks

/// Concrete evidence against a sufficient condition.
struct Witness {
  std::string kind;  // "pointwise_min", "hamiltonian_convexity", "phi_convexity", "h_convexity"
  int player = 0;
  int step = -1;
  Index scenario = -1;
  double t = 0.0;
  Vec point;        // test control (pointwise_min) or first sample of the pair
  Vec other_point;  // second sample of a convexity pair
  double violation = 0.0;
};

struct CheckResult {
  bool applicable = true;
  bool passed = true;
  double worst = 0.0;  // largest violation found (<= 0 when none)
  Index evaluations = 0;
  std::optional<Witness> witness;
  std::string note;
};

struct PointwiseMinOptions {
  int grid_density = 11;
  std::optional<double> radius;
  double tolerance = 1e-8;
  int threads = 1;
};

namespace detail {

inline std::vector<Vec> control_grid(const ControlBox& box, const PointwiseMinOptions& opts) {
  const Index k = box.size();
  if (opts.grid_density < 1) throw ConfigError("grid_density must be >= 1");
  std::vector<std::vector<double>> axes(static_cast<std::size_t>(k));
  double total = 1.0;
  for (Index c = 0; c < k; ++c) {
    double lo = box.lower[c], hi = box.upper[c];
    if (opts.radius) {
      lo = std::max(lo, -*opts.radius);
      hi = std::min(hi, *opts.radius);
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
      throw ConfigError("pointwise minimization over an unbounded control box requires a radius R");
    }
    if (lo > hi) throw ConfigError("control box does not meet [-R, R]");
    auto& axis = axes[static_cast<std::size_t>(c)];
    if (lo == hi || opts.grid_density == 1) {
      axis.push_back(lo == hi ? lo : 0.5 * (lo + hi));
    } else {
      for (int g = 0; g < opts.grid_density; ++g) {
        axis.push_back(lo + (hi - lo) * g / (opts.grid_density - 1));
      }
    }
    total *= static_cast<double>(axis.size());
  }
  if (total > 1e6) throw ConfigError("pointwise minimization grid exceeds 10^6 points");
  std::vector<Vec> out;
  std::vector<std::size_t> idx(static_cast<std::size_t>(k), 0);
  while (true) {
    Vec v(k);
    for (Index c = 0; c < k; ++c) v[c] = axes[static_cast<std::size_t>(c)][idx[static_cast<std::size_t>(c)]];
    out.push_back(v);
    Index c = k - 1;
    while (c >= 0) {
      auto& i = idx[static_cast<std::size_t>(c)];
      if (++i < axes[static_cast<std::size_t>(c)].size()) break;
      i = 0;
      --c;
    }
    if (c < 0) break;
  }
  return out;
}

}  // namespace detail

/// Pointwise minimum condition: at every step j < N and scenario,
/// H_i(.., u_i, u_bar_other, p, q, k) >= H_i(.., u_bar_i, ..) - tol for u_i
/// on a grid over U_i intersected with [-R, R]^{k_i}. Throws ConfigError for
/// an unbounded box without R.
template <ScenarioBackend B>
CheckResult check_pointwise_min(const GameProblem& prob, const StateTrajectory& traj,
                                const AdjointTrajectory& adj, const ControlProcess& u, int player,
                                const B& backend, const PointwiseMinOptions& opts = {}) {
  CheckResult res;
  if (prob.dims.control(player) == 0) {
    res.note = "player has no control";
    return res;
  }
  const std::vector<Vec> grid_points = detail::control_grid(prob.box(player), opts);
  const TimeGrid& grid = backend.grid();
  res.worst = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    std::vector<double> worst(static_cast<std::size_t>(count), -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> arg(static_cast<std::size_t>(count), 0);
    parallel_for(count, opts.threads, [&](Index begin, Index end) {
      for (Index s = begin; s < end; ++s) {
        auto in = trajectory_inputs(prob, traj, u, grid.time(j), j, s, adj.p_hat[sj].col(s),
                                    adj.q[sj].col(s), adj.k[sj].col(s));
        const double base = eval_hamiltonian(prob, in, player).value;
        for (std::size_t g = 0; g < grid_points.size(); ++g) {
          in.point.control(player) = grid_points[g];
          const double v = base - eval_hamiltonian(prob, in, player).value;
          if (v > worst[static_cast<std::size_t>(s)]) {
            worst[static_cast<std::size_t>(s)] = v;
            arg[static_cast<std::size_t>(s)] = g;
          }
        }
      }
    });
    res.evaluations += count * static_cast<Index>(grid_points.size() + 1);
    for (Index s = 0; s < count; ++s) {
      const double v = worst[static_cast<std::size_t>(s)];
      if (v > res.worst) {
        res.worst = v;
        if (v > opts.tolerance) {
          res.witness = Witness{"pointwise_min", player, j, s, grid.time(j),
                                grid_points[arg[static_cast<std::size_t>(s)]], u.of(player)[sj].col(s), v};
        }
      }
    }
  }
  res.passed = res.worst <= opts.tolerance;
  if (res.passed) res.witness.reset();
  return res;
}

struct ConvexityOptions {
  int samples = 1000;
  std::uint64_t seed = 1;
  double radius = 1.0;
  double tolerance = 1e-9;  // relative to 1 + |f(a)| + |f(b)|
};

/// Midpoint convexity sampling f((a + b)/2) <= (f(a) + f(b))/2 + tol for
/// random pairs drawn by `draw`. A pass means "not refuted".
template <class Fn, class Draw>
CheckResult check_midpoint_convexity(Fn&& fn, Draw&& draw, const ConvexityOptions& opts,
                                     const std::string& kind) {
  if (opts.samples < 1) throw ConfigError("convexity check: samples must be >= 1");
  CheckResult res;
  res.worst = -std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(opts.seed);
  for (int s = 0; s < opts.samples; ++s) {
    auto [a, b, ctx] = draw(rng);
    const double fa = fn(a, ctx), fb = fn(b, ctx);
    const double fm = fn(Vec(0.5 * (a + b)), ctx);
    const double v = fm - 0.5 * (fa + fb);
    res.evaluations += 3;
    if (v > res.worst) res.worst = v;
    if (v > opts.tolerance * (1.0 + std::abs(fa) + std::abs(fb)) && !res.witness) {
      res.passed = false;
      res.witness = Witness{kind, 0, -1, -1, 0.0, a, b, v};
    }
  }
  return res;
}

/// Convexity of a scalar function on [-radius, radius]^dim.
inline CheckResult check_convexity(const std::function<double(const Vec&)>& fn, Index dim,
                                   const ConvexityOptions& opts = {},
                                   const std::string& kind = "convexity") {
  struct None {};
  return check_midpoint_convexity(
      [&](const Vec& v, None) { return fn(v); },
      [&](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> d(-opts.radius, opts.radius);
        Vec a(dim), b(dim);
        for (Index i = 0; i < dim; ++i) a[i] = d(rng);
        for (Index i = 0; i < dim; ++i) b[i] = d(rng);
        return std::tuple{a, b, None{}};
      },
      opts, kind);
}

/// Convexity of (x, y, z, u_i) -> H_i with t, the opponent's control and the
/// adjoints frozen at random trajectory points; pairs are drawn within
/// `radius` of the trajectory point, with u_i clipped to the box.
template <ScenarioBackend B>
CheckResult check_hamiltonian_convexity(const GameProblem& prob, const StateTrajectory& traj,
                                        const AdjointTrajectory& adj, const ControlProcess& u,
                                        int player, const B& backend,
                                        const ConvexityOptions& opts = {}) {
  const Dims& dims = prob.dims;
  const TimeGrid& grid = backend.grid();
  const Index n = dims.n, m = dims.m, zs = dims.z_size(), k = dims.control(player);
  const ControlBox& box = prob.box(player);
  struct Ctx {
    int j;
    Index s;
  };
  auto fn = [&](const Vec& v, Ctx c) {
    const auto sj = static_cast<std::size_t>(c.j);
    auto in = trajectory_inputs(prob, traj, u, grid.time(c.j), c.j, c.s, adj.p_hat[sj].col(c.s),
                                adj.q[sj].col(c.s), adj.k[sj].col(c.s));
    in.point.x = v.segment(0, n);
    in.point.y = v.segment(n, m);
    in.point.z = v.segment(n + m, zs);
    in.point.control(player) = v.segment(n + m + zs, k);
    return eval_hamiltonian(prob, in, player).value;
  };
  auto draw = [&](std::mt19937_64& rng) {
    std::uniform_int_distribution<int> step(0, grid.steps - 1);
    const int j = step(rng);
    std::uniform_int_distribution<Index> scen(0, backend.scenarios(j) - 1);
    const Index s = scen(rng);
    const auto sj = static_cast<std::size_t>(j);
    Vec center(n + m + zs + k);
    center << traj.x[sj].col(s), traj.y_hat[sj].col(s), traj.z[sj].col(s), u.of(player)[sj].col(s);
    std::uniform_real_distribution<double> d(-opts.radius, opts.radius);
    Vec a = center, b = center;
    for (Index i = 0; i < a.size(); ++i) a[i] += d(rng);
    for (Index i = 0; i < b.size(); ++i) b[i] += d(rng);
    a.tail(k) = box.project(a.tail(k));
    b.tail(k) = box.project(b.tail(k));
    return std::tuple{a, b, Ctx{j, s}};
  };
  CheckResult res = check_midpoint_convexity(fn, draw, opts, "hamiltonian_convexity");
  if (res.witness) res.witness->player = player;
  return res;
}

// ---------------------------------------------------------------------------
// Certificate

enum class Verdict { Certified, Refuted, Inconclusive };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Certified: return "certified";
    case Verdict::Refuted: return "refuted";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

struct VerificationOptions {
  int grid_density = 11;
  std::optional<double> radius;
  double pointwise_tolerance = 1e-8;
  int convexity_samples = 1000;
  double convexity_radius = 1.0;   // neighbourhood of trajectory points for H_i
  double endpoint_radius = 10.0;   // sampling box for phi_i and h_i
  std::uint64_t seed = 1;
  int threads = 1;
};

struct PlayerChecks {
  CheckResult pointwise_min;
  CheckResult hamiltonian_convexity;
  CheckResult phi_convexity;
  CheckResult h_convexity;
};

struct VerificationCertificate {
  Verdict verdict = Verdict::Inconclusive;
  std::array<PlayerChecks, 2> players;
  std::vector<Witness> witnesses;
  std::string optimality_convention =
      "min: H_i(u_i) >= H_i(u_bar_i) for u_i on a grid over U_i";
  std::string player2_convention = "H_2 differentiated in u2 with player-2 adjoints (p2, q2, k2)";
  std::string endpoint_convention = "phi_i convex in x(T), h_i convex in y(0)";
  std::vector<std::string> notes;
};

/// Aggregates the pointwise-minimum and convexity checks of both players.
/// Certified iff every check ran and passed; refuted if any check failed
/// (all witnesses listed); inconclusive otherwise.
template <ScenarioBackend B>
VerificationCertificate build_certificate(const GameProblem& prob, const StateTrajectory& traj,
                                          const AdjointTrajectory& adj1,
                                          const AdjointTrajectory& adj2, const ControlProcess& u,
                                          const B& backend, const VerificationOptions& opts = {}) {
  VerificationCertificate cert;
  const std::array<const AdjointTrajectory*, 2> adj{&adj1, &adj2};
  bool failed = false, incomplete = false;
  for (int i = 1; i <= 2; ++i) {
    PlayerChecks& pc = cert.players[static_cast<std::size_t>(i - 1)];
    const AdjointTrajectory& a = *adj[static_cast<std::size_t>(i - 1)];
    try {
      pc.pointwise_min = check_pointwise_min(
          prob, traj, a, u, i, backend,
          PointwiseMinOptions{opts.grid_density, opts.radius, opts.pointwise_tolerance, opts.threads});
    } catch (const ConfigError& e) {
      pc.pointwise_min.applicable = false;
      pc.pointwise_min.passed = false;
      pc.pointwise_min.note = e.what();
      cert.notes.push_back("player " + std::to_string(i) + ": " + e.what());
    }
    ConvexityOptions copts{opts.convexity_samples, opts.seed + static_cast<std::uint64_t>(i),
                           opts.convexity_radius, 1e-9};
    pc.hamiltonian_convexity = check_hamiltonian_convexity(prob, traj, a, u, i, backend, copts);
    copts.radius = opts.endpoint_radius;
    const auto si = static_cast<std::size_t>(i - 1);
    pc.phi_convexity = check_convexity(
        [&](const Vec& x) {
          EndpointJet j;
          prob.costs.terminal[si](x, j);
          return j.value;
        },
        prob.dims.n, copts, "phi_convexity");
    copts.seed += 100;
    pc.h_convexity = check_convexity(
        [&](const Vec& y) {
          EndpointJet j;
          prob.costs.initial[si](y, j);
          return j.value;
        },
        prob.dims.m, copts, "h_convexity");
    for (CheckResult* c : {&pc.pointwise_min, &pc.hamiltonian_convexity, &pc.phi_convexity,
                           &pc.h_convexity}) {
      if (!c->applicable) {
        incomplete = true;
        continue;
      }
      if (!c->passed) {
        failed = true;
        if (c->witness) {
          c->witness->player = i;
          cert.witnesses.push_back(*c->witness);
        }
      }
    }
  }
  cert.verdict = failed ? Verdict::Refuted : incomplete ? Verdict::Inconclusive : Verdict::Certified;
  return cert;
}

}  // namespace fbnash
