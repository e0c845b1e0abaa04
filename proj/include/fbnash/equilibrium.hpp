#pragma once

#include "fbnash/verification.hpp"

#include <type_traits>

namespace fbnash {

struct CostEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// J_i = E[ sum_j l_i(t_j, x_j, y_hat_j, z_j, u_j) dt + phi_i(x_N) + h_i(y_0) ].
/// The standard error is the sample deviation of the per-path cost over
/// sqrt(P) on Monte Carlo and 0 on the lattice.
template <ScenarioBackend B>
CostEstimate eval_cost(const GameProblem& prob, const StateTrajectory& traj,
                       const ControlProcess& u, int player, const B& backend) {
  if (player != 1 && player != 2) throw ConfigError("player must be 1 or 2");
  const TimeGrid& grid = backend.grid();
  const int steps = grid.steps;
  const double dt = grid.dt();
  const auto pi = static_cast<std::size_t>(player - 1);
  Point pt(prob.dims);
  ScalarJet lj;
  EndpointJet ej;
  std::vector<Vec> running(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    Vec vals(backend.scenarios(j));
    for (Index s = 0; s < vals.size(); ++s) {
      detail::load_point(pt, grid.time(j), traj.x[sj], traj.y_hat[sj], traj.z[sj], u, j, s);
      prob.costs.running[pi](pt, lj);
      vals[s] = lj.value;
    }
    running[sj] = std::move(vals);
  }
  const auto sN = static_cast<std::size_t>(steps);
  Vec terminal(backend.scenarios(steps)), initial(backend.scenarios(0));
  for (Index s = 0; s < terminal.size(); ++s) {
    prob.costs.terminal[pi](traj.x[sN].col(s), ej);
    terminal[s] = ej.value;
  }
  for (Index s = 0; s < initial.size(); ++s) {
    prob.costs.initial[pi](traj.y[0].col(s), ej);
    initial[s] = ej.value;
  }

  CostEstimate out;
  if constexpr (std::is_same_v<B, MonteCarloBackend>) {
    Vec per_path = terminal + initial;
    for (const auto& r : running) per_path += dt * r;
    out.value = per_path.mean();
    if (per_path.size() > 1) {
      const double var = (per_path.array() - out.value).square().sum() /
                         static_cast<double>(per_path.size() - 1);
      out.std_error = std::sqrt(var / static_cast<double>(per_path.size()));
    }
  } else {
    double total = 0.0;
    for (int j = 0; j < steps; ++j) total += dt * running[static_cast<std::size_t>(j)].dot(backend.weights(j));
    total += terminal.dot(backend.weights(steps)) + initial.dot(backend.weights(0));
    out.value = total;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gateaux derivative

struct GateauxOptions {
  double epsilon = 1e-4;
  double picard_tol = 1e-26;  // tightened Picard tolerance for the re-solves
  int max_picard = 2000;
};

struct GateauxResult {
  double adjoint_form = 0.0;
  double finite_diff_form = 0.0;
  bool box_inflated = false;  // u +/- eps v left the box (box ignored for the re-solves)
};

/// adjoint_form = sum_j dt E_j <H_{i u_i}, v_j>; finite_diff_form is the
/// central difference of J_i along v with full re-solves. Throws
/// SolverError if any solve does not reach the tightened tolerance.
template <ScenarioBackend B>
GateauxResult gateaux_derivative(const GameProblem& prob, const ControlProcess& u,
                                 const Field& direction, int player, const B& backend,
                                 FbsdeConfig cfg = {}, const GateauxOptions& opts = {}) {
  if (player != 1 && player != 2) throw ConfigError("player must be 1 or 2");
  const int steps = backend.grid().steps;
  if (static_cast<int>(direction.size()) != steps) throw ShapeError("direction: wrong number of steps");
  for (int j = 0; j < steps; ++j) {
    const auto& v = direction[static_cast<std::size_t>(j)];
    if (v.rows() != prob.dims.control(player) || v.cols() != backend.scenarios(j)) {
      throw ShapeError("direction: wrong shape at step " + std::to_string(j));
    }
  }
  cfg.tol = std::min(cfg.tol, opts.picard_tol);
  cfg.max_picard = std::max(cfg.max_picard, opts.max_picard);
  auto require = [](const SolveDiagnostics& d, const char* what) {
    if (!d.converged) {
      throw SolverError(std::string("gateaux_derivative: ") + what + " did not converge (residual " +
                        std::to_string(d.residual) + " after " + std::to_string(d.iterations) +
                        " iterations)");
    }
  };

  const FbsdeSolution base = solve_fbsde(prob, u, backend, cfg);
  require(base.diagnostics, "FBSDE at u");
  const TrajectoryJets jets = evaluate_jets(prob, base.state, u, backend, cfg.threads);
  const AdjointSolution adj = solve_adjoint(prob, base.state, u, player, backend, cfg, nullptr, &jets);
  require(adj.diagnostics, "adjoint at u");
  const Field g = control_gradient(jets, adj.adjoint, backend);

  GateauxResult res;
  const double dt = backend.grid().dt();
  for (int j = 0; j < steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Vec inner = g[sj].cwiseProduct(direction[sj]).colwise().sum().transpose();
    res.adjoint_form += dt * inner.dot(backend.weights(j));
  }

  auto shifted = [&](double sign) {
    ControlProcess w = u;
    Field& own = w.of(player);
    for (int j = 0; j < steps; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      own[sj] += sign * opts.epsilon * direction[sj];
      for (Index s = 0; s < own[sj].cols(); ++s) {
        if (!prob.box(player).contains(own[sj].col(s))) res.box_inflated = true;
      }
    }
    const FbsdeSolution sol = solve_fbsde(prob, w, backend, cfg, &base.state);
    require(sol.diagnostics, "FBSDE at perturbed control");
    return eval_cost(prob, sol.state, w, player, backend).value;
  };
  const double plus = shifted(1.0);
  const double minus = shifted(-1.0);
  res.finite_diff_form = (plus - minus) / (2.0 * opts.epsilon);
  return res;
}

// ---------------------------------------------------------------------------
// Projected-gradient Nash search

enum class UpdateMode { Simultaneous, BestResponseSweep };

struct GradientConfig {
  double step = 0.1;
  int max_halvings = 20;
  int max_iter = 500;
  double tol = 1e-6;
  UpdateMode mode = UpdateMode::Simultaneous;
  int sweep_inner = 50;   // inner steps per player in best-response sweeps
  int stall_limit = 50;   // sweeps without merit improvement before stopping

  void validate() const {
    if (!(step > 0.0)) throw ConfigError("gradient.step must be positive");
    if (!(tol > 0.0)) throw ConfigError("gradient.tol must be positive");
    if (max_iter < 1) throw ConfigError("gradient.max_iter must be >= 1");
    if (max_halvings < 0) throw ConfigError("gradient.max_halvings must be >= 0");
    if (sweep_inner < 1) throw ConfigError("gradient.sweep_inner must be >= 1");
  }
};

struct IterationRecord {
  int iteration = 0;
  double J1 = 0.0, J2 = 0.0;
  double rho1 = 0.0, rho2 = 0.0;
  double alpha = 0.0;  // accepted step (0 for the initial evaluation)
};

/// Everything known about one control pair: state, adjoints, gradients,
/// residuals and costs.
struct ControlEvaluation {
  ControlProcess controls;
  StateTrajectory state;
  AdjointTrajectory adj1, adj2;
  Field grad1, grad2;  // H_{1 u1}, H_{2 u2}
  ViResidualReport vi;
  CostEstimate J1, J2;
  SolveDiagnostics fbsde, adjoint1, adjoint2;

  double merit() const { return vi.merit(); }
};

template <ScenarioBackend B>
ControlEvaluation evaluate_controls(const GameProblem& prob, const ControlProcess& u,
                                    const B& backend, const FbsdeConfig& cfg,
                                    const ControlEvaluation* warm = nullptr) {
  ControlEvaluation ev;
  ev.controls = u;
  FbsdeSolution sol = solve_fbsde(prob, u, backend, cfg, warm ? &warm->state : nullptr);
  ev.state = std::move(sol.state);
  ev.fbsde = std::move(sol.diagnostics);
  const TrajectoryJets jets = evaluate_jets(prob, ev.state, u, backend, cfg.threads);
  AdjointSolution a1 =
      solve_adjoint(prob, ev.state, u, 1, backend, cfg, warm ? &warm->adj1 : nullptr, &jets);
  AdjointSolution a2 =
      solve_adjoint(prob, ev.state, u, 2, backend, cfg, warm ? &warm->adj2 : nullptr, &jets);
  ev.adj1 = std::move(a1.adjoint);
  ev.adj2 = std::move(a2.adjoint);
  ev.adjoint1 = std::move(a1.diagnostics);
  ev.adjoint2 = std::move(a2.diagnostics);
  ev.grad1 = control_gradient(jets, ev.adj1, backend);
  ev.grad2 = control_gradient(jets, ev.adj2, backend);
  ev.vi.players[0] = detail::vi_from_gradient(prob.u1_box, u.u1, ev.grad1, backend);
  ev.vi.players[1] = detail::vi_from_gradient(prob.u2_box, u.u2, ev.grad2, backend);
  ev.J1 = eval_cost(prob, ev.state, u, 1, backend);
  ev.J2 = eval_cost(prob, ev.state, u, 2, backend);
  return ev;
}

struct EquilibriumReport {
  ControlProcess controls;
  StateTrajectory state;
  AdjointTrajectory adj1, adj2;
  CostEstimate J1, J2;
  double rho1 = 0.0, rho2 = 0.0;
  ViResidualReport vi;
  std::vector<IterationRecord> history;
  VerificationCertificate certificate;
  bool converged = false;
  std::string reason;
  int iterations = 0;  // evaluations accepted, including the initial one
  int evaluations = 0; // all control evaluations, including rejected trials
  SolveDiagnostics fbsde, adjoint1, adjoint2;
  std::vector<std::string> warnings;
};

namespace detail {

inline Field projected_step(const ControlBox& box, const Field& u, const Field& g, double alpha) {
  Field out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    out[j].resize(u[j].rows(), u[j].cols());
    for (Index s = 0; s < u[j].cols(); ++s) {
      out[j].col(s) = box.project(u[j].col(s) - alpha * g[j].col(s));
    }
  }
  return out;
}

inline void note_warnings(std::vector<std::string>& out, const ControlEvaluation& ev) {
  auto add = [&](const SolveDiagnostics& d, const char* what) {
    if (!d.converged) {
      const std::string msg = std::string(what) + " Picard iteration did not reach tolerance";
      if (std::find(out.begin(), out.end(), msg) == out.end()) out.push_back(msg);
    }
  };
  add(ev.fbsde, "FBSDE");
  add(ev.adjoint1, "adjoint 1");
  add(ev.adjoint2, "adjoint 2");
}

}  // namespace detail

/// Projected-gradient search for a point where both first-order conditions
/// hold. Simultaneous mode updates u_i <- Proj(u_i - alpha H_{i u_i}) for
/// both players at once, halving alpha until max(rho_1, rho_2) strictly
/// decreases; alpha restarts from `step` every iteration. Best-response mode
/// alternates inner loops on one player at a time. FBSDE and adjoint solves
/// are warm-started from the previous iterate. The final iterate is
/// certified with build_certificate.
template <ScenarioBackend B>
EquilibriumReport solve_nash(const GameProblem& prob, const B& backend,
                             const FbsdeConfig& fcfg = {}, const GradientConfig& gcfg = {},
                             const VerificationOptions& vopts = {},
                             const ControlProcess* initial = nullptr) {
  gcfg.validate();
  fcfg.validate();
  prob.check_structure();
  EquilibriumReport rep;
  const ControlProcess u0 = initial ? *initial : ControlProcess::initial(prob, backend);

  ControlEvaluation cur = evaluate_controls(prob, u0, backend, fcfg);
  rep.evaluations = 1;
  detail::note_warnings(rep.warnings, cur);
  auto record = [&](const ControlEvaluation& ev, double alpha) {
    rep.history.push_back({static_cast<int>(rep.history.size()), ev.J1.value, ev.J2.value,
                           ev.vi.rho(1), ev.vi.rho(2), alpha});
  };
  record(cur, 0.0);

  // One backtracking step on the players in `movers`; returns false if no
  // trial decreased the merit (the max of the movers' residuals).
  auto step_once = [&](std::initializer_list<int> movers, double& accepted_alpha) {
    auto merit_of = [&](const ControlEvaluation& ev) {
      double m = 0.0;
      for (int i : movers) m = std::max(m, ev.vi.rho(i));
      return m;
    };
    const double current = merit_of(cur);
    double alpha = gcfg.step;
    for (int h = 0; h <= gcfg.max_halvings; ++h, alpha *= 0.5) {
      ControlProcess trial = cur.controls;
      for (int i : movers) {
        trial.of(i) = detail::projected_step(prob.box(i), cur.controls.of(i),
                                             i == 1 ? cur.grad1 : cur.grad2, alpha);
      }
      ControlEvaluation ev = evaluate_controls(prob, trial, backend, fcfg, &cur);
      ++rep.evaluations;
      detail::note_warnings(rep.warnings, ev);
      if (merit_of(ev) < current) {
        cur = std::move(ev);
        accepted_alpha = alpha;
        return true;
      }
    }
    return false;
  };

  if (gcfg.mode == UpdateMode::Simultaneous) {
    for (int it = 1; it < gcfg.max_iter; ++it) {
      if (cur.merit() <= gcfg.tol) break;
      double alpha = 0.0;
      if (!step_once({1, 2}, alpha)) {
        rep.reason = "line search failed / stalled";
        break;
      }
      record(cur, alpha);
    }
  } else {
    ControlEvaluation best = cur;
    int since_best = 0;
    for (int sweep = 1; sweep < gcfg.max_iter && cur.merit() > gcfg.tol; ++sweep) {
      double alpha = 0.0;
      for (int i = 1; i <= 2; ++i) {
        for (int inner = 0; inner < gcfg.sweep_inner; ++inner) {
          if (cur.vi.rho(i) <= 0.5 * gcfg.tol) break;
          if (!step_once({i}, alpha)) break;
        }
      }
      record(cur, alpha);
      if (cur.merit() < best.merit()) {
        best = cur;
        since_best = 0;
      } else if (++since_best >= gcfg.stall_limit) {
        rep.reason = "line search failed / stalled";
        break;
      }
    }
    if (best.merit() < cur.merit()) cur = std::move(best);
  }

  rep.converged = cur.merit() <= gcfg.tol;
  if (rep.converged) {
    rep.reason = "converged";
  } else if (rep.reason.empty()) {
    rep.reason = "iteration limit reached";
  }
  rep.iterations = static_cast<int>(rep.history.size());
  rep.certificate = build_certificate(prob, cur.state, cur.adj1, cur.adj2, cur.controls, backend, vopts);
  rep.controls = std::move(cur.controls);
  rep.state = std::move(cur.state);
  rep.adj1 = std::move(cur.adj1);
  rep.adj2 = std::move(cur.adj2);
  rep.J1 = cur.J1;
  rep.J2 = cur.J2;
  rep.vi = std::move(cur.vi);
  rep.rho1 = rep.vi.rho(1);
  rep.rho2 = rep.vi.rho(2);
  rep.fbsde = std::move(cur.fbsde);
  rep.adjoint1 = std::move(cur.adjoint1);
  rep.adjoint2 = std::move(cur.adjoint2);
  return rep;
}

}  // namespace fbnash
