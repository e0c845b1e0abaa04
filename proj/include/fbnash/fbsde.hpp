#pragma once

#include "fbnash/drivers.hpp"
#include "fbnash/parallel.hpp"
#include "fbnash/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace fbnash {

/// Piecewise-constant controls: u1[j] is k1 x S_j for j = 0..N-1.
struct ControlProcess {
  Field u1, u2;

  Field& of(int player) { return player == 1 ? u1 : u2; }
  const Field& of(int player) const { return player == 1 ? u1 : u2; }

  template <ScenarioBackend B>
  static ControlProcess constant(const B& backend, const Vec& v1, const Vec& v2) {
    ControlProcess u;
    for (int j = 0; j < backend.grid().steps; ++j) {
      const Index s = backend.scenarios(j);
      u.u1.push_back(v1.replicate(1, s));
      u.u2.push_back(v2.replicate(1, s));
    }
    return u;
  }

  /// Box midpoints (projected 0 on unbounded coordinates).
  template <ScenarioBackend B>
  static ControlProcess initial(const GameProblem& p, const B& backend) {
    return constant(backend, p.u1_box.initial_guess(), p.u2_box.initial_guess());
  }
};

/// Discrete state. At step j < N the coefficients and running costs are
/// evaluated at (t_j, x_j, y_hat_j, z_j, u_j), where y_hat_j = E_j[y_{j+1}]
/// is the explicit predictor of the backward step; y_j = y_hat_j + f dt is
/// the reported backward state.
struct StateTrajectory {
  Field x;      // N + 1 layers, n rows
  Field y;      // N + 1 layers, m rows
  Field y_hat;  // N layers, m rows
  Field z;      // N layers, m * d rows (column-major m x d)
};

struct FbsdeConfig {
  int max_picard = 50;
  double damping = 0.5;
  double tol = 1e-8;
  int threads = 1;

  void validate() const {
    if (max_picard < 1) throw ConfigError("fbsde.max_picard must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0)) throw ConfigError("fbsde.damping must be in (0, 1]");
    if (!(tol > 0.0)) throw ConfigError("fbsde.tol must be positive");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

struct SolveDiagnostics {
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<double> history;
  int ridge_fallbacks = 0;
  std::vector<std::string> warnings;
};

/// Picard iteration diverged (residual above 10x its first value).
class DivergenceError : public SolverError {
 public:
  DivergenceError(const std::string& what, SolveDiagnostics diag)
      : SolverError(what), diagnostics_(std::move(diag)) {}
  const SolveDiagnostics& diagnostics() const { return diagnostics_; }

 private:
  SolveDiagnostics diagnostics_;
};

struct FbsdeSolution {
  StateTrajectory state;
  SolveDiagnostics diagnostics;
};

namespace detail {

inline void load_point(Point& pt, double t, const Layer& x, const Layer& y, const Layer& z,
                       const ControlProcess& u, int j, Index s) {
  pt.t = t;
  pt.x = x.col(s);
  pt.y = y.col(s);
  pt.z = z.col(s);
  pt.u1 = u.u1[static_cast<std::size_t>(j)].col(s);
  pt.u2 = u.u2[static_cast<std::size_t>(j)].col(s);
}

inline void require_finite(const Layer& layer, const char* what, int step) {
  if (layer.allFinite()) return;
  for (Index s = 0; s < layer.cols(); ++s) {
    if (!layer.col(s).allFinite()) throw NonFiniteError(std::string("non-finite ") + what, step, s);
  }
}

template <ScenarioBackend B>
void check_compatible(const GameProblem& p, const ControlProcess& u, const B& backend) {
  if (p.dims.d != backend.brownian_dim()) {
    throw ConfigError("backend Brownian dimension " + std::to_string(backend.brownian_dim()) +
                      " does not match d = " + std::to_string(p.dims.d) +
                      " (the lattice backend requires d = 1)");
  }
  const int steps = backend.grid().steps;
  if (static_cast<int>(u.u1.size()) != steps || static_cast<int>(u.u2.size()) != steps) {
    throw ShapeError("controls: expected " + std::to_string(steps) + " steps");
  }
  for (int j = 0; j < steps; ++j) {
    const auto& a = u.u1[static_cast<std::size_t>(j)];
    const auto& b = u.u2[static_cast<std::size_t>(j)];
    if (a.rows() != p.dims.k1 || b.rows() != p.dims.k2 || a.cols() != backend.scenarios(j) ||
        b.cols() != backend.scenarios(j)) {
      throw ShapeError("controls: wrong shape at step " + std::to_string(j));
    }
  }
}

// max_j E |a_j - b_j|^2 summed over the listed fields.
template <ScenarioBackend B>
double max_mean_square(const B& backend, std::initializer_list<std::pair<const Field*, const Field*>> pairs) {
  double worst = 0.0;
  const int steps = backend.grid().steps;
  for (int j = 0; j < steps; ++j) {
    const Vec w = backend.weights(j);
    double total = 0.0;
    for (const auto& [a, b] : pairs) {
      const auto& la = (*a)[static_cast<std::size_t>(j)];
      const auto& lb = (*b)[static_cast<std::size_t>(j)];
      total += (la - lb).colwise().squaredNorm().dot(w);
    }
    worst = std::max(worst, total);
  }
  return worst;
}

}  // namespace detail

/// Explicit Euler pass for x given the (y_hat, z) guess.
template <ScenarioBackend B>
Field forward_pass(const GameProblem& p, const ControlProcess& u, const Field& y_hat,
                   const Field& z, const B& backend, int threads = 1) {
  const Dims& dims = p.dims;
  const TimeGrid& grid = backend.grid();
  Field x(static_cast<std::size_t>(grid.steps) + 1);
  x[0] = p.initial_state.replicate(1, backend.scenarios(0));
  for (int j = 0; j < grid.steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    Layer drift(dims.n, count), diffusion(dims.sigma_size(), count);
    parallel_for(count, threads, [&](Index begin, Index end) {
      Point pt(dims);
      VectorJet jet;
      for (Index s = begin; s < end; ++s) {
        detail::load_point(pt, grid.time(j), x[sj], y_hat[sj], z[sj], u, j, s);
        p.coeffs.drift(pt, jet);
        drift.col(s) = jet.value;
        p.coeffs.diffusion(pt, jet);
        diffusion.col(s) = jet.value;
      }
    });
    x[sj + 1] = backend.propagate(j, x[sj], drift, diffusion);
    detail::require_finite(x[sj + 1], "forward state x", j + 1);
  }
  return x;
}

struct BackwardResult {
  Field y, y_hat, z;
  int ridge_fallbacks = 0;
};

/// Backward pass for (y, z) given x: y_N = xi(B_N); for j = N-1..0,
/// y_hat_j = E_j[y_{j+1}], z_j = E_j[y_{j+1} dB'] / dt and
/// y_j = y_hat_j + f(t_j, x_j, y_hat_j, z_j, u_j) dt.
template <ScenarioBackend B>
BackwardResult backward_pass(const GameProblem& p, const ControlProcess& u, const Field& x,
                             const B& backend, int threads = 1) {
  const Dims& dims = p.dims;
  const TimeGrid& grid = backend.grid();
  const int steps = grid.steps;
  BackwardResult out;
  out.y.resize(static_cast<std::size_t>(steps) + 1);
  out.y_hat.resize(static_cast<std::size_t>(steps));
  out.z.resize(static_cast<std::size_t>(steps));

  const Layer b_terminal = backend.brownian(steps);
  Layer terminal(dims.m, backend.scenarios(steps));
  for (Index s = 0; s < terminal.cols(); ++s) terminal.col(s) = p.terminal.xi(b_terminal.col(s));
  detail::require_finite(terminal, "terminal value xi", steps);
  out.y[static_cast<std::size_t>(steps)] = std::move(terminal);

  for (int j = steps - 1; j >= 0; --j) {
    const auto sj = static_cast<std::size_t>(j);
    Projection proj = backend.project(j, out.y[sj + 1], x[sj]);
    if (proj.ridge) ++out.ridge_fallbacks;
    out.y_hat[sj] = std::move(proj.mean);
    out.z[sj] = std::move(proj.martingale);
    const Index count = backend.scenarios(j);
    Layer y(dims.m, count);
    parallel_for(count, threads, [&](Index begin, Index end) {
      Point pt(dims);
      VectorJet jet;
      for (Index s = begin; s < end; ++s) {
        detail::load_point(pt, grid.time(j), x[sj], out.y_hat[sj], out.z[sj], u, j, s);
        p.coeffs.generator(pt, jet);
        y.col(s) = out.y_hat[sj].col(s) + grid.dt() * jet.value;
      }
    });
    detail::require_finite(y, "backward state y", j);
    out.y[sj] = std::move(y);
  }
  return out;
}

/// Picard iteration for the coupled state system.
///
/// Starting from (y_hat, z) = 0 (or `warm`), each sweep runs the forward pass
/// with the current guess and the backward pass on the resulting x. The
/// fixed-point residual is the sup over steps of the mean-square change of
/// the backward output (y_hat, z) between successive sweeps (against the
/// initial guess on the first sweep). Once it is at most `tol`, a final
/// forward pass is run with the accepted (y_hat, z), so the forward dynamics
/// hold exactly. Guesses are damped: g <- damping * new + (1 - damping) * g.
///
/// Non-convergence returns the best sweep with converged = false; a residual
/// above 10x the first one throws DivergenceError.
template <ScenarioBackend B>
FbsdeSolution solve_fbsde(const GameProblem& p, const ControlProcess& u, const B& backend,
                          const FbsdeConfig& cfg = {}, const StateTrajectory* warm = nullptr) {
  cfg.validate();
  detail::check_compatible(p, u, backend);
  const Dims& dims = p.dims;
  const int steps = backend.grid().steps;

  Field guess_y_hat, guess_z;
  if (warm != nullptr && static_cast<int>(warm->y_hat.size()) == steps) {
    guess_y_hat = warm->y_hat;
    guess_z = warm->z;
  } else {
    for (int j = 0; j < steps; ++j) {
      guess_y_hat.push_back(Layer::Zero(dims.m, backend.scenarios(j)));
      guess_z.push_back(Layer::Zero(dims.z_size(), backend.scenarios(j)));
    }
  }

  FbsdeSolution sol;
  auto& diag = sol.diagnostics;
  std::optional<BackwardResult> previous;
  std::optional<BackwardResult> best;
  double best_residual = std::numeric_limits<double>::infinity();
  double baseline = 0.0;

  for (int it = 1; it <= cfg.max_picard; ++it) {
    const Field x = forward_pass(p, u, guess_y_hat, guess_z, backend, cfg.threads);
    BackwardResult out = backward_pass(p, u, x, backend, cfg.threads);
    diag.ridge_fallbacks += out.ridge_fallbacks;
    const double r =
        previous ? detail::max_mean_square(backend, {{&out.y_hat, &previous->y_hat}, {&out.z, &previous->z}})
                 : detail::max_mean_square(backend, {{&out.y_hat, &guess_y_hat}, {&out.z, &guess_z}});
    diag.history.push_back(r);
    diag.iterations = it;
    if (it == 1) baseline = r;
    if (it > 1 && r > diag.history[diag.history.size() - 2] && diag.warnings.empty()) {
      diag.warnings.push_back("non-monotone Picard residual at iteration " + std::to_string(it));
    }
    if (!std::isfinite(r) || (it > 1 && r > 10.0 * baseline)) {
      diag.residual = r;
      throw DivergenceError("FBSDE Picard iteration diverged at iteration " + std::to_string(it),
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
      guess_y_hat[sj] = cfg.damping * out.y_hat[sj] + (1.0 - cfg.damping) * guess_y_hat[sj];
      guess_z[sj] = cfg.damping * out.z[sj] + (1.0 - cfg.damping) * guess_z[sj];
    }
    previous = std::move(out);
  }

  diag.residual = best_residual;
  sol.state.x = forward_pass(p, u, best->y_hat, best->z, backend, cfg.threads);
  sol.state.y = std::move(best->y);
  sol.state.y_hat = std::move(best->y_hat);
  sol.state.z = std::move(best->z);
  return sol;
}

}  // namespace fbnash
