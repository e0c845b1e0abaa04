#pragma once

#include "fbnash/hamiltonian.hpp"

namespace fbnash {

/// Adjoint processes of one player. k runs forward from -h_y(y_0); (p, q)
/// runs backward from phi_x(x_N). p_hat_j = E_j[p_{j+1}] is the value
/// paired with q_j and k_j in the Hamiltonian at step j.
struct AdjointTrajectory {
  int player = 1;
  Field k;      // N + 1 layers, m rows
  Field p;      // N + 1 layers, n rows
  Field p_hat;  // N layers, n rows
  Field q;      // N layers, n * d rows
};

struct AdjointSolution {
  AdjointTrajectory adjoint;
  SolveDiagnostics diagnostics;
};

/// Drift and diffusion data of the adjoint system at one scenario, assembled
/// in the explicit form
///   H_v = b_v' p + sigma_v' q - f_v' k + l_v,   v in {x, y, z, u1, u2},
/// from cached jets. The adjoint moves by dk = -H_y dt - H_z dB and
/// dp = -H_x dt + q dB.
inline HamiltonianPoint adjoint_coefficients(const StepJets& jets, Index s, int player,
                                             const Vec& p, const Vec& q, const Vec& k) {
  const auto& l = jets.l[static_cast<std::size_t>(player - 1)];
  HamiltonianPoint h;
  h.value = -k.dot(jets.f.value.col(s)) + p.dot(jets.b.value.col(s)) +
            q.dot(jets.sigma.value.col(s)) + l.value(0, s);
  std::array<Vec*, 5> out{&h.dx, &h.dy, &h.dz, &h.du1, &h.du2};
  for (int a = 0; a < 5; ++a) {
    *out[static_cast<std::size_t>(a)] = jets.b.partial(a, s).transpose() * p +
                                        jets.sigma.partial(a, s).transpose() * q -
                                        jets.f.partial(a, s).transpose() * k +
                                        l.d[static_cast<std::size_t>(a)].col(s);
  }
  return h;
}

/// One partial H_v of the explicit form above, written into `out`.
inline void partial_into(const StepJets& jets, Index s, int player, JetArg arg, const Vec& p,
                         const Vec& q, const Vec& k, Vec& out) {
  const auto& l = jets.l[static_cast<std::size_t>(player - 1)];
  out = l.d[static_cast<std::size_t>(arg)].col(s);
  out.noalias() += jets.b.partial(arg, s).transpose() * p;
  out.noalias() += jets.sigma.partial(arg, s).transpose() * q;
  out.noalias() -= jets.f.partial(arg, s).transpose() * k;
}

inline Vec hamiltonian_partial(const StepJets& jets, Index s, int player, JetArg arg,
                               const Vec& p, const Vec& q, const Vec& k) {
  Vec out;
  partial_into(jets, s, player, arg, p, q, k, out);
  return out;
}

namespace detail {

inline Layer initial_k(const GameProblem& prob, const Layer& y0, int player) {
  Layer k(prob.dims.m, y0.cols());
  EndpointJet jet;
  for (Index s = 0; s < y0.cols(); ++s) {
    prob.costs.initial[static_cast<std::size_t>(player - 1)](y0.col(s), jet);
    k.col(s) = -jet.grad;
  }
  return k;
}

inline Layer terminal_p(const GameProblem& prob, const Layer& xN, int player) {
  Layer p(prob.dims.n, xN.cols());
  EndpointJet jet;
  for (Index s = 0; s < xN.cols(); ++s) {
    prob.costs.terminal[static_cast<std::size_t>(player - 1)](xN.col(s), jet);
    p.col(s) = jet.grad;
  }
  return p;
}

template <ScenarioBackend B>
Field forward_k(const GameProblem& prob, const StateTrajectory& traj, const TrajectoryJets& jets,
                int player, const Field& p_hat, const Field& q, const B& backend, int threads) {
  const Dims& dims = prob.dims;
  const int steps = backend.grid().steps;
  Field k(static_cast<std::size_t>(steps) + 1);
  k[0] = initial_k(prob, traj.y[0], player);
  require_finite(k[0], "adjoint k", 0);
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    Layer drift(dims.m, count), diffusion(dims.z_size(), count);
    parallel_for(count, threads, [&](Index begin, Index end) {
      Vec ps, qs, ks, h;
      for (Index s = begin; s < end; ++s) {
        ps = p_hat[sj].col(s);
        qs = q[sj].col(s);
        ks = k[sj].col(s);
        partial_into(jets.steps[sj], s, player, kY, ps, qs, ks, h);
        drift.col(s) = -h;
        partial_into(jets.steps[sj], s, player, kZ, ps, qs, ks, h);
        diffusion.col(s) = -h;
      }
    });
    k[sj + 1] = backend.propagate(j, k[sj], drift, diffusion);
    require_finite(k[sj + 1], "adjoint k", j + 1);
  }
  return k;
}

template <ScenarioBackend B>
BackwardResult backward_p(const GameProblem& prob, const StateTrajectory& traj,
                          const TrajectoryJets& jets, int player, const Field& k, const B& backend,
                          int threads) {
  const Dims& dims = prob.dims;
  const int steps = backend.grid().steps;
  const double dt = backend.grid().dt();
  BackwardResult out;  // y <- p, y_hat <- p_hat, z <- q
  out.y.resize(static_cast<std::size_t>(steps) + 1);
  out.y_hat.resize(static_cast<std::size_t>(steps));
  out.z.resize(static_cast<std::size_t>(steps));
  out.y[static_cast<std::size_t>(steps)] = terminal_p(prob, traj.x[static_cast<std::size_t>(steps)], player);
  require_finite(out.y[static_cast<std::size_t>(steps)], "adjoint p", steps);
  for (int j = steps - 1; j >= 0; --j) {
    const auto sj = static_cast<std::size_t>(j);
    Projection proj = backend.project(j, out.y[sj + 1], traj.x[sj]);
    if (proj.ridge) ++out.ridge_fallbacks;
    out.y_hat[sj] = std::move(proj.mean);
    out.z[sj] = std::move(proj.martingale);
    const Index count = backend.scenarios(j);
    Layer p(dims.n, count);
    parallel_for(count, threads, [&](Index begin, Index end) {
      Vec ps, qs, ks, h;
      for (Index s = begin; s < end; ++s) {
        ps = out.y_hat[sj].col(s);
        qs = out.z[sj].col(s);
        ks = k[sj].col(s);
        partial_into(jets.steps[sj], s, player, kX, ps, qs, ks, h);
        p.col(s) = ps + dt * h;
      }
    });
    require_finite(p, "adjoint p", j);
    out.y[sj] = std::move(p);
  }
  return out;
}

}  // namespace detail

/// Solves the adjoint system of `player` along a solved trajectory by
/// damped Picard iteration on the (p_hat, q) guess: k forward with drift
/// -H_y and diffusion -H_z at the guess, then (p, q) backward with
/// q_j = E_j[p_{j+1} dB'] / dt and p_j = E_j[p_{j+1}] + H_x dt. Residual,
/// stopping and failure rules are those of solve_fbsde. `jets` may be
/// supplied to share the coefficient evaluations between players.
template <ScenarioBackend B>
AdjointSolution solve_adjoint(const GameProblem& prob, const StateTrajectory& traj,
                              const ControlProcess& u, int player, const B& backend,
                              const FbsdeConfig& cfg = {}, const AdjointTrajectory* warm = nullptr,
                              const TrajectoryJets* jets = nullptr) {
  if (player != 1 && player != 2) throw ConfigError("player must be 1 or 2");
  cfg.validate();
  detail::check_compatible(prob, u, backend);
  const Dims& dims = prob.dims;
  const int steps = backend.grid().steps;
  if (static_cast<int>(traj.x.size()) != steps + 1 || static_cast<int>(traj.y_hat.size()) != steps) {
    throw ShapeError("solve_adjoint: trajectory does not match the backend grid");
  }
  TrajectoryJets local;
  if (jets == nullptr) {
    local = evaluate_jets(prob, traj, u, backend, cfg.threads);
    jets = &local;
  }

  Field guess_p_hat, guess_q;
  if (warm != nullptr && static_cast<int>(warm->p_hat.size()) == steps) {
    guess_p_hat = warm->p_hat;
    guess_q = warm->q;
  } else {
    for (int j = 0; j < steps; ++j) {
      guess_p_hat.push_back(Layer::Zero(dims.n, backend.scenarios(j)));
      guess_q.push_back(Layer::Zero(dims.sigma_size(), backend.scenarios(j)));
    }
  }

  AdjointSolution sol;
  auto& diag = sol.diagnostics;
  std::optional<BackwardResult> previous, best;
  double best_residual = std::numeric_limits<double>::infinity();
  double baseline = 0.0;
  for (int it = 1; it <= cfg.max_picard; ++it) {
    const Field k = detail::forward_k(prob, traj, *jets, player, guess_p_hat, guess_q, backend,
                                      cfg.threads);
    BackwardResult out = detail::backward_p(prob, traj, *jets, player, k, backend, cfg.threads);
    diag.ridge_fallbacks += out.ridge_fallbacks;
    const double r =
        previous ? detail::max_mean_square(backend, {{&out.y_hat, &previous->y_hat}, {&out.z, &previous->z}})
                 : detail::max_mean_square(backend, {{&out.y_hat, &guess_p_hat}, {&out.z, &guess_q}});
    diag.history.push_back(r);
    diag.iterations = it;
    if (it == 1) baseline = r;
    if (it > 1 && r > diag.history[diag.history.size() - 2] && diag.warnings.empty()) {
      diag.warnings.push_back("non-monotone adjoint Picard residual at iteration " + std::to_string(it));
    }
    if (!std::isfinite(r) || (it > 1 && r > 10.0 * baseline)) {
      diag.residual = r;
      throw DivergenceError("adjoint Picard iteration diverged at iteration " + std::to_string(it),
                            diag);
    }
    if (r < best_residual) {
      best_residual = r;
      best = out;
    }
    if (r <= cfg.tol) {
      diag.converged = true;
      break;
    }
    for (int j = 0; j < steps; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      guess_p_hat[sj] = cfg.damping * out.y_hat[sj] + (1.0 - cfg.damping) * guess_p_hat[sj];
      guess_q[sj] = cfg.damping * out.z[sj] + (1.0 - cfg.damping) * guess_q[sj];
    }
    previous = std::move(out);
  }
  diag.residual = best_residual;
  auto& adj = sol.adjoint;
  adj.player = player;
  adj.k = detail::forward_k(prob, traj, *jets, player, best->y_hat, best->z, backend, cfg.threads);
  adj.p = std::move(best->y);
  adj.p_hat = std::move(best->y_hat);
  adj.q = std::move(best->z);
  return sol;
}

/// H_{i u_i} at every step j < N and scenario, from cached jets.
template <ScenarioBackend B>
Field control_gradient(const TrajectoryJets& jets, const AdjointTrajectory& adj, const B& backend) {
  const int steps = backend.grid().steps;
  Field g(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    const JetArg arg = adj.player == 1 ? kU1 : kU2;
    Vec ps, qs, ks, du;
    for (Index s = 0; s < count; ++s) {
      ps = adj.p_hat[sj].col(s);
      qs = adj.q[sj].col(s);
      ks = adj.k[sj].col(s);
      partial_into(jets.steps[sj], s, adj.player, arg, ps, qs, ks, du);
      if (s == 0) g[sj].resize(du.size(), count);
      g[sj].col(s) = du;
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Duality identity

/// Discrete integration-by-parts identity for <p_bar, x - x_bar> and
/// <k_bar, y - y_bar>:
///   E<p_bar_N, dx_N> - E<k_bar_0, dy_0>
///   + sum_j dt E[<H_x, dx_j> + <H_y, dy_j> + <H_z, dz_j>]
///   - sum_j dt E[<p_bar_j, db_j> + <q_bar_j, dsigma_j> - <k_bar_j, df_j>],
/// with H gradients at the reference point and adjoints. `residual` uses the
/// grid values (p_bar_j, y_j) and is O(dt); `scheme_residual` uses the
/// values paired by the scheme (p_hat_bar_j, y_hat_j) and vanishes up to
/// roundoff and Picard tolerance.
struct DualityReport {
  double residual = 0.0;
  double scheme_residual = 0.0;
  double dt = 0.0;
  Index scenarios = 0;
  double terminal_term = 0.0;
  double initial_term = 0.0;
  double hamiltonian_integral = 0.0;
  double coefficient_integral = 0.0;
};

template <ScenarioBackend B>
DualityReport duality_residual(const GameProblem& prob, const StateTrajectory& traj,
                               const StateTrajectory& traj_bar, const AdjointTrajectory& adj_bar,
                               const ControlProcess& u, const ControlProcess& u_bar,
                               const B& backend, int threads = 1) {
  const int steps = backend.grid().steps;
  auto check = [&](const StateTrajectory& t, const char* name) {
    if (static_cast<int>(t.x.size()) != steps + 1 || static_cast<int>(t.y.size()) != steps + 1 ||
        static_cast<int>(t.z.size()) != steps || static_cast<int>(t.y_hat.size()) != steps) {
      throw ShapeError(std::string("duality_residual: ") + name + " does not match the backend grid");
    }
    for (int j = 0; j <= steps; ++j) {
      if (t.x[static_cast<std::size_t>(j)].cols() != backend.scenarios(j)) {
        throw ShapeError(std::string("duality_residual: ") + name +
                         " was solved on different scenarios");
      }
    }
  };
  check(traj, "trajectory");
  check(traj_bar, "reference trajectory");
  if (static_cast<int>(adj_bar.p.size()) != steps + 1 || static_cast<int>(adj_bar.q.size()) != steps) {
    throw ShapeError("duality_residual: adjoint does not match the backend grid");
  }
  detail::check_compatible(prob, u, backend);
  detail::check_compatible(prob, u_bar, backend);

  const TrajectoryJets jets = evaluate_jets(prob, traj, u, backend, threads);
  const TrajectoryJets jets_bar = evaluate_jets(prob, traj_bar, u_bar, backend, threads);
  const double dt = backend.grid().dt();
  const int player = adj_bar.player;
  const auto sN = static_cast<std::size_t>(steps);

  DualityReport rep;
  rep.dt = dt;
  rep.scenarios = backend.scenarios(steps);
  rep.terminal_term =
      backend.weights(steps).dot((adj_bar.p[sN].cwiseProduct(traj.x[sN] - traj_bar.x[sN])).colwise().sum().transpose());
  rep.initial_term =
      -backend.weights(0).dot((adj_bar.k[0].cwiseProduct(traj.y[0] - traj_bar.y[0])).colwise().sum().transpose());

  double ham = 0.0, ham_scheme = 0.0, coef = 0.0, coef_scheme = 0.0;
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Vec w = backend.weights(j);
    const StepJets& a = jets.steps[sj];
    const StepJets& r = jets_bar.steps[sj];
    for (Index s = 0; s < backend.scenarios(j); ++s) {
      const HamiltonianPoint h = adjoint_coefficients(r, s, player, adj_bar.p_hat[sj].col(s),
                                                      adj_bar.q[sj].col(s), adj_bar.k[sj].col(s));
      const Vec dx = traj.x[sj].col(s) - traj_bar.x[sj].col(s);
      const Vec dy = traj.y[sj].col(s) - traj_bar.y[sj].col(s);
      const Vec dy_hat = traj.y_hat[sj].col(s) - traj_bar.y_hat[sj].col(s);
      const Vec dz = traj.z[sj].col(s) - traj_bar.z[sj].col(s);
      const Vec db = a.b.value.col(s) - r.b.value.col(s);
      const Vec dsig = a.sigma.value.col(s) - r.sigma.value.col(s);
      const Vec df = a.f.value.col(s) - r.f.value.col(s);
      const double hxz = h.dx.dot(dx) + h.dz.dot(dz);
      ham += w[s] * dt * (hxz + h.dy.dot(dy));
      ham_scheme += w[s] * dt * (hxz + h.dy.dot(dy_hat));
      const double qk = adj_bar.q[sj].col(s).dot(dsig) - adj_bar.k[sj].col(s).dot(df);
      coef += w[s] * dt * (adj_bar.p[sj].col(s).dot(db) + qk);
      coef_scheme += w[s] * dt * (adj_bar.p_hat[sj].col(s).dot(db) + qk);
    }
  }
  rep.hamiltonian_integral = ham;
  rep.coefficient_integral = -coef;
  rep.residual = rep.terminal_term + rep.initial_term + ham - coef;
  rep.scheme_residual = rep.terminal_term + rep.initial_term + ham_scheme - coef_scheme;
  return rep;
}

}  // namespace fbnash
