#pragma once

#include "fbnash/regression.hpp"
#include "fbnash/types.hpp"

#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <variant>

namespace fbnash {

/// Uniform grid t_j = j T / N on [0, T]; t_N is exactly T.
struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;

  static TimeGrid uniform(double horizon, int steps) {
    if (!(horizon > 0.0)) throw ConfigError("time grid: horizon must be positive");
    if (steps < 1) throw ConfigError("time grid: N must be >= 1");
    return {horizon, steps};
  }

  double dt() const { return horizon / steps; }
  double time(int j) const { return j == steps ? horizon : j * dt(); }

  bool operator==(const TimeGrid&) const = default;
};

/// Gaussian increments for P paths. Path p draws from its own generator
/// seeded by (seed, p), so the ensemble does not depend on generation order.
struct PathEnsemble {
  TimeGrid grid;
  Index paths = 0;
  int dim = 1;
  std::uint64_t seed = 0;
  Field increments;  // N layers of dim x P
  Field brownian;    // N + 1 layers of dim x P, brownian[0] = 0

  static constexpr const char* generator = "std::mt19937_64 seeded by std::seed_seq(seed, path)";
};

inline PathEnsemble sample_ensemble(const TimeGrid& grid, Index paths, int dim,
                                    std::uint64_t seed) {
  if (paths < 1) throw ConfigError("sample_ensemble: P must be >= 1");
  if (dim < 1) throw ConfigError("sample_ensemble: d must be >= 1");
  PathEnsemble e;
  e.grid = grid;
  e.paths = paths;
  e.dim = dim;
  e.seed = seed;
  e.increments.assign(static_cast<std::size_t>(grid.steps), Layer(dim, paths));
  e.brownian.assign(static_cast<std::size_t>(grid.steps) + 1, Layer::Zero(dim, paths));
  const double sd = std::sqrt(grid.dt());
  for (Index p = 0; p < paths; ++p) {
    const auto up = static_cast<std::uint64_t>(p);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(up), static_cast<std::uint32_t>(up >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, sd);
    for (int j = 0; j < grid.steps; ++j) {
      for (int c = 0; c < dim; ++c) {
        const double db = normal(rng);
        e.increments[static_cast<std::size_t>(j)](c, p) = db;
        e.brownian[static_cast<std::size_t>(j) + 1](c, p) =
            e.brownian[static_cast<std::size_t>(j)](c, p) + db;
      }
    }
  }
  return e;
}

/// Recombining binomial lattice for one-dimensional Brownian motion. Node
/// (j, l), l = 0..j, carries B = (2l - j) sqrt(dt); each node moves up
/// (l -> l + 1) or down (l -> l) with probability 1/2.
struct BinomialLattice {
  TimeGrid grid;
  Field probability;  // probability[j] is 1 x (j + 1)

  explicit BinomialLattice(TimeGrid g) : grid(g) {
    probability.resize(static_cast<std::size_t>(grid.steps) + 1);
    probability[0] = Layer::Ones(1, 1);
    for (int j = 0; j < grid.steps; ++j) {
      const auto& prev = probability[static_cast<std::size_t>(j)];
      Layer next = Layer::Zero(1, j + 2);
      for (Index l = 0; l <= j; ++l) {
        next(0, l) += 0.5 * prev(0, l);
        next(0, l + 1) += 0.5 * prev(0, l);
      }
      probability[static_cast<std::size_t>(j) + 1] = next;
    }
  }

  Index nodes(int j) const { return j + 1; }
  double brownian(int j, Index l) const {
    return static_cast<double>(2 * l - j) * std::sqrt(grid.dt());
  }
  Index total_nodes() const {
    return static_cast<Index>(grid.steps + 1) * (grid.steps + 2) / 2;
  }
};

/// Conditional expectations of next-step values: mean = E_j[v], martingale
/// = E_j[v dB'] / dt flattened column-major (rows * d).
struct Projection {
  Layer mean;
  Layer martingale;
  bool ridge = false;
};

/// Exact backend on the binomial lattice. Every process is a node function.
/// Forward propagation averages the two incoming transitions of a node,
/// weighted by their conditional arrival probabilities; for dynamics affine
/// in the propagated state this gives exactly E[value | B(t_{j+1})].
class LatticeBackend {
 public:
  explicit LatticeBackend(BinomialLattice lattice) : lattice_(std::move(lattice)) {}
  LatticeBackend(double horizon, int steps) : lattice_(TimeGrid::uniform(horizon, steps)) {}

  static constexpr const char* kind = "lattice";

  const TimeGrid& grid() const { return lattice_.grid; }
  const BinomialLattice& lattice() const { return lattice_; }
  int brownian_dim() const { return 1; }
  Index scenarios(int j) const { return lattice_.nodes(j); }

  Vec weights(int j) const {
    return lattice_.probability[static_cast<std::size_t>(j)].row(0).transpose();
  }

  Layer brownian(int j) const {
    Layer b(1, scenarios(j));
    for (Index l = 0; l < b.cols(); ++l) b(0, l) = lattice_.brownian(j, l);
    return b;
  }

  Vec expectation(int j, const Layer& values) const { return values * weights(j); }

  Projection project(int j, const Layer& next, const Layer& /*state*/) const {
    const Index s = scenarios(j);
    const double scale = 1.0 / (2.0 * std::sqrt(grid().dt()));
    Projection out;
    out.mean = 0.5 * (next.middleCols(1, s) + next.leftCols(s));
    out.martingale = scale * (next.middleCols(1, s) - next.leftCols(s));
    return out;
  }

  Layer propagate(int j, const Layer& current, const Layer& drift, const Layer& diffusion) const {
    const double dt = grid().dt();
    const double sq = std::sqrt(dt);
    const Index next_nodes = scenarios(j + 1);
    Layer out(current.rows(), next_nodes);
    const double denom = static_cast<double>(j + 1);
    for (Index l = 0; l < next_nodes; ++l) {
      out.col(l).setZero();
      if (l >= 1) {
        const Index from = l - 1;
        const double w = static_cast<double>(l) / denom;
        out.col(l) += w * (current.col(from) + dt * drift.col(from) + sq * diffusion.col(from));
      }
      if (l <= j) {
        const double w = static_cast<double>(j + 1 - l) / denom;
        out.col(l) += w * (current.col(l) + dt * drift.col(l) - sq * diffusion.col(l));
      }
    }
    return out;
  }

  bool same_scenarios(const LatticeBackend& other) const { return grid() == other.grid(); }

 private:
  BinomialLattice lattice_;
};

struct RegressionConfig {
  int degree = 2;
  double ridge = 1e-8;
};

/// Monte Carlo backend: conditional expectations by least-squares
/// regression on monomials of (state, B(t_j)).
class MonteCarloBackend {
 public:
  MonteCarloBackend(PathEnsemble ensemble, RegressionConfig reg = {})
      : ensemble_(std::move(ensemble)), reg_(reg) {
    if (reg_.degree < 1 || reg_.degree > 4) throw ConfigError("regression degree must be in 1..4");
  }

  static constexpr const char* kind = "montecarlo";

  const TimeGrid& grid() const { return ensemble_.grid; }
  const PathEnsemble& ensemble() const { return ensemble_; }
  const RegressionConfig& regression() const { return reg_; }
  int brownian_dim() const { return ensemble_.dim; }
  Index scenarios(int /*j*/) const { return ensemble_.paths; }

  Vec weights(int /*j*/) const {
    return Vec::Constant(ensemble_.paths, 1.0 / static_cast<double>(ensemble_.paths));
  }

  Layer brownian(int j) const { return ensemble_.brownian[static_cast<std::size_t>(j)]; }

  Vec expectation(int /*j*/, const Layer& values) const { return values.rowwise().mean(); }

  Projection project(int j, const Layer& next, const Layer& state) const {
    const Index rows = next.rows();
    const int d = ensemble_.dim;
    const Index paths = ensemble_.paths;
    const Layer& db = ensemble_.increments[static_cast<std::size_t>(j)];
    Mat regressors(state.rows() + d, paths);
    regressors << state, ensemble_.brownian[static_cast<std::size_t>(j)];
    PolynomialRegression reg(regressors, reg_.degree, reg_.ridge);

    Mat targets(paths, rows * (1 + d));
    targets.leftCols(rows) = next.transpose();
    for (int c = 0; c < d; ++c) {
      targets.middleCols(rows * (1 + c), rows) =
          (next.array().rowwise() * db.row(c).array()).matrix().transpose();
    }
    const Mat fitted = reg.fit(targets);
    Projection out;
    out.ridge = reg.ridge_used();
    out.mean = fitted.leftCols(rows).transpose();
    out.martingale = fitted.rightCols(rows * d).transpose() / grid().dt();
    return out;
  }

  Layer propagate(int j, const Layer& current, const Layer& drift, const Layer& diffusion) const {
    const Index rows = current.rows();
    const Layer& db = ensemble_.increments[static_cast<std::size_t>(j)];
    Layer out = current + grid().dt() * drift;
    for (int c = 0; c < ensemble_.dim; ++c) {
      out.array() += diffusion.middleRows(rows * c, rows).array().rowwise() * db.row(c).array();
    }
    return out;
  }

  bool same_scenarios(const MonteCarloBackend& other) const {
    return grid() == other.grid() && ensemble_.paths == other.ensemble_.paths &&
           ensemble_.seed == other.ensemble_.seed && ensemble_.dim == other.ensemble_.dim;
  }

 private:
  PathEnsemble ensemble_;
  RegressionConfig reg_;
};

using Backend = std::variant<LatticeBackend, MonteCarloBackend>;

template <class B>
concept ScenarioBackend = requires(const B& b, int j, const Layer& l) {
  { b.grid() } -> std::convertible_to<const TimeGrid&>;
  { b.brownian_dim() } -> std::convertible_to<int>;
  { b.scenarios(j) } -> std::convertible_to<Index>;
  { b.weights(j) } -> std::convertible_to<Vec>;
  { b.brownian(j) } -> std::convertible_to<Layer>;
  { b.project(j, l, l) } -> std::same_as<Projection>;
  { b.propagate(j, l, l, l) } -> std::convertible_to<Layer>;
};

static_assert(ScenarioBackend<LatticeBackend>);
static_assert(ScenarioBackend<MonteCarloBackend>);

/// E[next | F_{t_j}] evaluated at every step-j scenario. `regressors` are
/// the step-j state values used by the Monte Carlo basis; the lattice
/// ignores them.
template <ScenarioBackend B>
Layer conditional_expectation(const B& backend, int j, const Layer& next,
                              const Layer& regressors) {
  return backend.project(j, next, regressors).mean;
}

}  // namespace fbnash
