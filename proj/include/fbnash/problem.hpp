#pragma once

#include "fbnash/types.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace fbnash {

/// Dimensions of a game: x in R^n, y in R^m, z in R^{m x d}, controls in
/// R^{k1} and R^{k2}. A zero control dimension models an inert player.
struct Dims {
  int n = 1;
  int m = 1;
  int d = 1;
  int k1 = 0;
  int k2 = 0;

  int z_size() const { return m * d; }
  int sigma_size() const { return n * d; }
  int control(int player) const { return player == 1 ? k1 : k2; }

  void validate() const {
    if (n < 1 || m < 1 || d < 1) throw ShapeError("dims: n, m, d must be >= 1");
    if (k1 < 0 || k2 < 0) throw ShapeError("dims: k1, k2 must be >= 0");
  }
};

/// Axis-aligned control set; entries may be infinite.
struct ControlBox {
  Vec lower;
  Vec upper;

  static ControlBox unbounded(int k) {
    const double inf = std::numeric_limits<double>::infinity();
    return {Vec::Constant(k, -inf), Vec::Constant(k, inf)};
  }
  static ControlBox uniform(int k, double lo, double hi) {
    return {Vec::Constant(k, lo), Vec::Constant(k, hi)};
  }

  Index size() const { return lower.size(); }

  bool bounded() const { return lower.allFinite() && upper.allFinite(); }

  Vec project(const Vec& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

  bool contains(const Vec& u, double tol = 0.0) const {
    for (Index c = 0; c < u.size(); ++c) {
      if (u[c] < lower[c] - tol || u[c] > upper[c] + tol) return false;
    }
    return true;
  }

  /// Box midpoint; coordinates with an infinite side start from the
  /// projection of 0.
  Vec initial_guess() const {
    Vec u(size());
    for (Index c = 0; c < size(); ++c) {
      if (std::isfinite(lower[c]) && std::isfinite(upper[c])) {
        u[c] = 0.5 * (lower[c] + upper[c]);
      } else {
        u[c] = std::clamp(0.0, lower[c], upper[c]);
      }
    }
    return u;
  }

  void validate(std::string_view name, int k) const {
    if (lower.size() != k || upper.size() != k) {
      throw ShapeError(std::string(name) + ": expected bounds of length " +
                       std::to_string(k));
    }
    for (Index c = 0; c < k; ++c) {
      if (std::isnan(lower[c]) || std::isnan(upper[c]) || lower[c] > upper[c]) {
        throw ShapeError(std::string(name) + ": empty box in coordinate " +
                         std::to_string(c));
      }
    }
  }
};

/// Arguments of the coefficient and running-cost functions. z is stored
/// flattened column-major (entry (r, c) at c * m + r).
struct Point {
  double t = 0.0;
  Vec x, y, z, u1, u2;

  Point() = default;
  explicit Point(const Dims& dims)
      : x(Vec::Zero(dims.n)),
        y(Vec::Zero(dims.m)),
        z(Vec::Zero(dims.z_size())),
        u1(Vec::Zero(dims.k1)),
        u2(Vec::Zero(dims.k2)) {}

  const Vec& control(int player) const { return player == 1 ? u1 : u2; }
  Vec& control(int player) { return player == 1 ? u1 : u2; }
};

/// Value and first partials of a vector-valued map of a Point. Matrix-valued
/// outputs (sigma) are flattened column-major, so sigma_y stacks the d
/// slices of shape n x m.
struct VectorJet {
  Vec value;
  Mat dx, dy, dz, du1, du2;
};

struct ScalarJet {
  double value = 0.0;
  Vec dx, dy, dz, du1, du2;
};

/// Scalar function of a single vector (phi of x(T), h of y(0)).
struct EndpointJet {
  double value = 0.0;
  Vec grad;
};

using VectorMap = std::function<void(const Point&, VectorJet&)>;
using ScalarMap = std::function<void(const Point&, ScalarJet&)>;
using EndpointMap = std::function<void(const Vec&, EndpointJet&)>;

/// Coefficients of the state system
///   dx = b dt + sigma dB,   dy = -f dt + z dB.
struct CoefficientSet {
  VectorMap drift;      // b: R^n
  VectorMap diffusion;  // sigma: R^{n x d}
  VectorMap generator;  // f: R^m
};

/// Player costs J_i = E[ int l_i dt + phi_i(x(T)) + h_i(y(0)) ], indexed by
/// player - 1.
struct CostSet {
  std::array<ScalarMap, 2> running;
  std::array<EndpointMap, 2> terminal;
  std::array<EndpointMap, 2> initial;
};

/// Terminal condition y(T) = xi(B(T)).
struct TerminalData {
  std::function<Vec(const Vec&)> xi;

  static TerminalData constant(Vec value) {
    return {[value = std::move(value)](const Vec&) { return value; }};
  }
};

struct GameProblem {
  Dims dims;
  double horizon = 1.0;
  Vec initial_state;
  TerminalData terminal;
  CoefficientSet coeffs;
  CostSet costs;
  ControlBox u1_box;
  ControlBox u2_box;

  const ControlBox& box(int player) const { return player == 1 ? u1_box : u2_box; }

  /// Cheap structural checks; derivative shapes are checked by
  /// validate_problem.
  void check_structure() const {
    dims.validate();
    if (!(horizon > 0.0)) throw ShapeError("horizon must be positive");
    if (initial_state.size() != dims.n) throw ShapeError("initial state: expected length n");
    if (!terminal.xi) throw ShapeError("terminal data: xi missing");
    if (!coeffs.drift || !coeffs.diffusion || !coeffs.generator) {
      throw ShapeError("coefficient set incomplete");
    }
    for (int i = 0; i < 2; ++i) {
      if (!costs.running[i] || !costs.terminal[i] || !costs.initial[i]) {
        throw ShapeError("cost set incomplete for player " + std::to_string(i + 1));
      }
    }
    u1_box.validate("u1_box", dims.k1);
    u2_box.validate("u2_box", dims.k2);
  }
};

// ---------------------------------------------------------------------------
// Derivative checking

struct DerivativeCheckOptions {
  int samples = 100;
  std::uint64_t seed = 1;
  double radius = 10.0;  // arguments sampled uniformly in [-radius, radius]
  double step = 1e-4;    // central-difference step
  double tolerance = 1e-5;
  double horizon = 1.0;  // t sampled uniformly in [0, horizon]
};

/// Result for one claimed partial. The error measure is
/// |claimed - fd| / max(1, |fd|), maximized over entries and samples.
struct PartialCheck {
  std::string name;
  double max_rel_error = 0.0;
  Vec worst_point;
  bool passed = true;
};

struct NonFiniteSample {
  std::string function;
  Vec point;
};

struct DerivativeReport {
  std::vector<PartialCheck> partials;
  std::vector<NonFiniteSample> nonfinite;

  bool passed() const {
    if (!nonfinite.empty()) return false;
    for (const auto& p : partials) {
      if (!p.passed) return false;
    }
    return true;
  }

  double max_rel_error() const {
    double e = 0.0;
    for (const auto& p : partials) e = std::max(e, p.max_rel_error);
    return e;
  }

  const PartialCheck* find(std::string_view name) const {
    for (const auto& p : partials) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

  void append(const DerivativeReport& other) {
    partials.insert(partials.end(), other.partials.begin(), other.partials.end());
    nonfinite.insert(nonfinite.end(), other.nonfinite.begin(), other.nonfinite.end());
  }
};

/// Named column range of a Jacobian.
struct ArgumentBlock {
  std::string name;
  Index offset = 0;
  Index size = 0;
};

/// Compares a claimed Jacobian against central differences at random points.
/// `sample` draws an argument vector; `value` and `jacobian` act on it.
/// Columns outside every block (e.g. time) are not checked.
template <class Value, class Jacobian, class Sampler>
DerivativeReport check_jacobian(std::string_view function, Value&& value,
                                Jacobian&& jacobian, std::span<const ArgumentBlock> blocks,
                                Sampler&& sample, const DerivativeCheckOptions& opts) {
  if (opts.samples < 1) throw ConfigError("check_derivatives: samples must be >= 1");
  DerivativeReport report;
  for (const auto& b : blocks) {
    report.partials.push_back({std::string(function) + "_" + b.name, 0.0, Vec(), true});
  }
  std::mt19937_64 rng(opts.seed);
  for (int s = 0; s < opts.samples; ++s) {
    const Vec arg = sample(rng);
    const Vec f0 = value(arg);
    if (!f0.allFinite()) {
      report.nonfinite.push_back({std::string(function), arg});
      continue;
    }
    const Mat claimed = jacobian(arg);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const auto& b = blocks[bi];
      auto& check = report.partials[bi];
      for (Index c = 0; c < b.size; ++c) {
        Vec plus = arg, minus = arg;
        plus[b.offset + c] += opts.step;
        minus[b.offset + c] -= opts.step;
        const Vec fp = value(plus);
        const Vec fm = value(minus);
        if (!fp.allFinite() || !fm.allFinite()) {
          report.nonfinite.push_back({std::string(function), arg});
          continue;
        }
        const Vec fd = (fp - fm) / (2.0 * opts.step);
        for (Index r = 0; r < fd.size(); ++r) {
          const double err =
              std::abs(claimed(r, b.offset + c) - fd[r]) / std::max(1.0, std::abs(fd[r]));
          if (!(err <= check.max_rel_error)) {
            check.max_rel_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
            check.worst_point = arg;
          }
        }
      }
    }
  }
  for (auto& p : report.partials) p.passed = p.max_rel_error <= opts.tolerance;
  return report;
}

/// Scalar function of a vector with claimed gradient.
inline DerivativeReport check_derivatives(std::string_view name,
                                          const std::function<double(const Vec&)>& f,
                                          const std::function<Vec(const Vec&)>& grad, Index dim,
                                          const DerivativeCheckOptions& opts = {}) {
  const std::array<ArgumentBlock, 1> blocks{ArgumentBlock{"x", 0, dim}};
  return check_jacobian(
      name, [&](const Vec& v) { return Vec::Constant(1, f(v)); },
      [&](const Vec& v) { return Mat(grad(v).transpose()); }, blocks,
      [&](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-opts.radius, opts.radius);
        Vec v(dim);
        for (Index i = 0; i < dim; ++i) v[i] = u(rng);
        return v;
      },
      opts);
}

namespace detail {

// Argument vector layout for Point-based maps: (t, x, y, z, u1, u2).
inline std::array<ArgumentBlock, 5> point_blocks(const Dims& dims) {
  const Index n = dims.n, m = dims.m, zs = dims.z_size(), k1 = dims.k1, k2 = dims.k2;
  return {ArgumentBlock{"x", 1, n}, ArgumentBlock{"y", 1 + n, m},
          ArgumentBlock{"z", 1 + n + m, zs}, ArgumentBlock{"u1", 1 + n + m + zs, k1},
          ArgumentBlock{"u2", 1 + n + m + zs + k1, k2}};
}

inline Point unpack_point(const Vec& v, const Dims& dims) {
  Point p(dims);
  Index o = 0;
  p.t = v[o++];
  p.x = v.segment(o, dims.n);
  o += dims.n;
  p.y = v.segment(o, dims.m);
  o += dims.m;
  p.z = v.segment(o, dims.z_size());
  o += dims.z_size();
  p.u1 = v.segment(o, dims.k1);
  o += dims.k1;
  p.u2 = v.segment(o, dims.k2);
  return p;
}

inline Index point_arg_size(const Dims& dims) {
  return 1 + dims.n + dims.m + dims.z_size() + dims.k1 + dims.k2;
}

inline auto point_sampler(const Dims& dims, const DerivativeCheckOptions& opts, double radius) {
  return [&dims, &opts, radius](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-radius, radius);
    std::uniform_real_distribution<double> ut(0.0, opts.horizon);
    Vec v(point_arg_size(dims));
    v[0] = ut(rng);
    for (Index i = 1; i < v.size(); ++i) v[i] = u(rng);
    return v;
  };
}

}  // namespace detail

/// Checks every partial of a vector-valued coefficient map; partials are
/// reported as "<name>_x", "<name>_y", ...
inline DerivativeReport check_derivatives(std::string_view name, const VectorMap& map,
                                          const Dims& dims,
                                          const DerivativeCheckOptions& opts = {}) {
  const auto blocks = detail::point_blocks(dims);
  VectorJet jet;
  auto value = [&](const Vec& v) {
    map(detail::unpack_point(v, dims), jet);
    return Vec(jet.value);
  };
  auto jac = [&](const Vec& v) {
    map(detail::unpack_point(v, dims), jet);
    Mat j(jet.value.size(), detail::point_arg_size(dims));
    j.col(0).setZero();
    j.middleCols(blocks[0].offset, blocks[0].size) = jet.dx;
    j.middleCols(blocks[1].offset, blocks[1].size) = jet.dy;
    j.middleCols(blocks[2].offset, blocks[2].size) = jet.dz;
    j.middleCols(blocks[3].offset, blocks[3].size) = jet.du1;
    j.middleCols(blocks[4].offset, blocks[4].size) = jet.du2;
    return j;
  };
  return check_jacobian(name, value, jac, blocks, detail::point_sampler(dims, opts, opts.radius),
                        opts);
}

inline DerivativeReport check_derivatives(std::string_view name, const ScalarMap& map,
                                          const Dims& dims,
                                          const DerivativeCheckOptions& opts = {}) {
  const auto blocks = detail::point_blocks(dims);
  ScalarJet jet;
  auto value = [&](const Vec& v) {
    map(detail::unpack_point(v, dims), jet);
    return Vec::Constant(1, jet.value);
  };
  auto jac = [&](const Vec& v) {
    map(detail::unpack_point(v, dims), jet);
    Mat j = Mat::Zero(1, detail::point_arg_size(dims));
    j.middleCols(blocks[0].offset, blocks[0].size) = jet.dx.transpose();
    j.middleCols(blocks[1].offset, blocks[1].size) = jet.dy.transpose();
    j.middleCols(blocks[2].offset, blocks[2].size) = jet.dz.transpose();
    j.middleCols(blocks[3].offset, blocks[3].size) = jet.du1.transpose();
    j.middleCols(blocks[4].offset, blocks[4].size) = jet.du2.transpose();
    return j;
  };
  return check_jacobian(name, value, jac, blocks, detail::point_sampler(dims, opts, opts.radius),
                        opts);
}

inline DerivativeReport check_derivatives(std::string_view name, const EndpointMap& map,
                                          Index dim, std::string_view arg = "x",
                                          const DerivativeCheckOptions& opts = {}) {
  const std::array<ArgumentBlock, 1> blocks{ArgumentBlock{std::string(arg), 0, dim}};
  EndpointJet jet;
  return check_jacobian(
      name,
      [&](const Vec& v) {
        map(v, jet);
        return Vec::Constant(1, jet.value);
      },
      [&](const Vec& v) {
        map(v, jet);
        return Mat(jet.grad.transpose());
      },
      blocks,
      [&](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u(-opts.radius, opts.radius);
        Vec v(dim);
        for (Index i = 0; i < dim; ++i) v[i] = u(rng);
        return v;
      },
      opts);
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationReport {
  DerivativeReport derivatives;
  std::vector<std::string> warnings;

  bool passed() const { return derivatives.passed(); }
};

namespace detail {

inline void expect_shape(std::vector<std::string>& errors, const std::string& name,
                         Index rows, Index cols, Index want_rows, Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    errors.push_back(name + ": expected " + shape_string(want_rows, want_cols) + ", got " +
                     shape_string(rows, cols));
  }
}

inline void check_vector_jet_shape(std::vector<std::string>& errors, const std::string& name,
                                   const VectorJet& j, Index rows, const Dims& dims) {
  expect_shape(errors, name, j.value.rows(), j.value.cols(), rows, 1);
  expect_shape(errors, name + "_x", j.dx.rows(), j.dx.cols(), rows, dims.n);
  expect_shape(errors, name + "_y", j.dy.rows(), j.dy.cols(), rows, dims.m);
  expect_shape(errors, name + "_z", j.dz.rows(), j.dz.cols(), rows, dims.z_size());
  expect_shape(errors, name + "_u1", j.du1.rows(), j.du1.cols(), rows, dims.k1);
  expect_shape(errors, name + "_u2", j.du2.rows(), j.du2.cols(), rows, dims.k2);
}

inline void check_scalar_jet_shape(std::vector<std::string>& errors, const std::string& name,
                                   const ScalarJet& j, const Dims& dims) {
  expect_shape(errors, name + "_x", j.dx.rows(), j.dx.cols(), dims.n, 1);
  expect_shape(errors, name + "_y", j.dy.rows(), j.dy.cols(), dims.m, 1);
  expect_shape(errors, name + "_z", j.dz.rows(), j.dz.cols(), dims.z_size(), 1);
  expect_shape(errors, name + "_u1", j.du1.rows(), j.du1.cols(), dims.k1, 1);
  expect_shape(errors, name + "_u2", j.du2.rows(), j.du2.cols(), dims.k2, 1);
}

// Largest |entry| of each partial over samples of radius `radius`.
inline std::array<double, 5> max_partials(const VectorMap& map, const Dims& dims,
                                          double radius, const DerivativeCheckOptions& opts) {
  std::array<double, 5> out{};
  std::mt19937_64 rng(opts.seed + 7919);
  auto sample = point_sampler(dims, opts, radius);
  VectorJet j;
  for (int s = 0; s < opts.samples; ++s) {
    map(unpack_point(sample(rng), dims), j);
    const std::array<const Mat*, 5> parts{&j.dx, &j.dy, &j.dz, &j.du1, &j.du2};
    for (int i = 0; i < 5; ++i) {
      if (parts[i]->size() > 0) out[i] = std::max(out[i], parts[i]->cwiseAbs().maxCoeff());
    }
  }
  return out;
}

// Growth constants of a running cost: sup |l| / (1 + |v|^2) and
// sup |grad l| / (1 + |v|).
inline std::array<double, 2> running_growth(const ScalarMap& map, const Dims& dims,
                                            double radius, const DerivativeCheckOptions& opts) {
  std::array<double, 2> out{};
  std::mt19937_64 rng(opts.seed + 104729);
  auto sample = point_sampler(dims, opts, radius);
  ScalarJet j;
  for (int s = 0; s < opts.samples; ++s) {
    const Vec v = sample(rng);
    map(unpack_point(v, dims), j);
    const double r = v.tail(v.size() - 1).norm();
    const double g = std::sqrt(j.dx.squaredNorm() + j.dy.squaredNorm() + j.dz.squaredNorm() +
                               j.du1.squaredNorm() + j.du2.squaredNorm());
    out[0] = std::max(out[0], std::abs(j.value) / (1.0 + r * r));
    out[1] = std::max(out[1], g / (1.0 + r));
  }
  return out;
}

inline std::array<double, 2> endpoint_growth(const EndpointMap& map, Index dim, double radius,
                                             const DerivativeCheckOptions& opts) {
  std::array<double, 2> out{};
  std::mt19937_64 rng(opts.seed + 1299709);
  std::uniform_real_distribution<double> u(-radius, radius);
  EndpointJet j;
  for (int s = 0; s < opts.samples; ++s) {
    Vec v(dim);
    for (Index i = 0; i < dim; ++i) v[i] = u(rng);
    map(v, j);
    const double r = v.norm();
    out[0] = std::max(out[0], std::abs(j.value) / (1.0 + r * r));
    out[1] = std::max(out[1], j.grad.norm() / (1.0 + r));
  }
  return out;
}

// Largest |value| or |partial entry| of a Point-based map at radius `radius`.
template <class Map, class Jet>
double peak_magnitude(const Map& map, const Dims& dims, double radius,
                      const DerivativeCheckOptions& opts) {
  double peak = 0.0;
  std::mt19937_64 rng(opts.seed + 15485863);
  auto sample = point_sampler(dims, opts, radius);
  Jet j;
  auto fold = [&peak](const auto& m) {
    if (m.size() > 0) peak = std::max(peak, m.cwiseAbs().maxCoeff());
  };
  for (int s = 0; s < opts.samples; ++s) {
    map(unpack_point(sample(rng), dims), j);
    if constexpr (std::is_same_v<Jet, ScalarJet>) {
      peak = std::max(peak, std::abs(j.value));
    } else {
      fold(j.value);
    }
    fold(j.dx);
    fold(j.dy);
    fold(j.dz);
    fold(j.du1);
    fold(j.du2);
  }
  return peak;
}

}  // namespace detail

/// Magnitude above which validate_problem reports sampled values as large.
inline constexpr double kLargeMagnitude = 1e5;

/// Spot-checks smoothness and growth of every coefficient and cost.
///
/// Shapes are checked first at the origin; any mismatch throws ShapeError
/// naming each offending function and its expected shape. Every claimed
/// partial is then compared against central differences at `opts.samples`
/// random points. Growth diagnostics compare samples at radius R/10 and R:
/// coefficient partials that grow by more than 10x, or cost growth constants
/// (value over 1+|v|^2, gradient over 1+|v|) that grow by more than 5x, are
/// reported as non-fatal warnings, as are sampled values or partials above
/// kLargeMagnitude at radius R.
inline ValidationReport validate_problem(const GameProblem& p,
                                         DerivativeCheckOptions opts = {}) {
  p.check_structure();
  const Dims& dims = p.dims;
  opts.horizon = p.horizon;

  std::vector<std::string> errors;
  {
    Point origin(dims);
    VectorJet vj;
    p.coeffs.drift(origin, vj);
    detail::check_vector_jet_shape(errors, "b", vj, dims.n, dims);
    p.coeffs.diffusion(origin, vj);
    detail::check_vector_jet_shape(errors, "sigma", vj, dims.sigma_size(), dims);
    p.coeffs.generator(origin, vj);
    detail::check_vector_jet_shape(errors, "f", vj, dims.m, dims);
    ScalarJet sj;
    EndpointJet ej;
    for (int i = 0; i < 2; ++i) {
      const std::string id = std::to_string(i + 1);
      p.costs.running[i](origin, sj);
      detail::check_scalar_jet_shape(errors, "l" + id, sj, dims);
      p.costs.terminal[i](Vec::Zero(dims.n), ej);
      detail::expect_shape(errors, "phi" + id + "_x", ej.grad.rows(), ej.grad.cols(), dims.n, 1);
      p.costs.initial[i](Vec::Zero(dims.m), ej);
      detail::expect_shape(errors, "h" + id + "_y", ej.grad.rows(), ej.grad.cols(), dims.m, 1);
    }
    const Vec xi = p.terminal.xi(Vec::Zero(dims.d));
    detail::expect_shape(errors, "xi", xi.rows(), xi.cols(), dims.m, 1);
  }
  if (!errors.empty()) {
    std::string msg = "shape mismatch:";
    for (const auto& e : errors) msg += " " + e + ";";
    throw ShapeError(msg);
  }

  ValidationReport report;
  report.derivatives.append(check_derivatives("b", p.coeffs.drift, dims, opts));
  report.derivatives.append(check_derivatives("sigma", p.coeffs.diffusion, dims, opts));
  report.derivatives.append(check_derivatives("f", p.coeffs.generator, dims, opts));
  for (int i = 0; i < 2; ++i) {
    const std::string id = std::to_string(i + 1);
    report.derivatives.append(check_derivatives("l" + id, p.costs.running[i], dims, opts));
    report.derivatives.append(
        check_derivatives("phi" + id, p.costs.terminal[i], dims.n, "x", opts));
    report.derivatives.append(check_derivatives("h" + id, p.costs.initial[i], dims.m, "y", opts));
  }

  const double outer = opts.radius;
  const double inner = opts.radius / 10.0;
  const std::array<const char*, 5> parts{"x", "y", "z", "u1", "u2"};
  const std::array<std::pair<const char*, const VectorMap*>, 3> coeffs{
      std::pair{"b", &p.coeffs.drift}, std::pair{"sigma", &p.coeffs.diffusion},
      std::pair{"f", &p.coeffs.generator}};
  for (const auto& [name, map] : coeffs) {
    const auto lo = detail::max_partials(*map, dims, inner, opts);
    const auto hi = detail::max_partials(*map, dims, outer, opts);
    for (int i = 0; i < 5; ++i) {
      if (hi[i] > 10.0 * lo[i] + 1e-12 && hi[i] > 1.0) {
        report.warnings.push_back(std::string(name) + "_" + parts[i] +
                                  " appears unbounded: max |entry| grows from " +
                                  std::to_string(lo[i]) + " (radius " + std::to_string(inner) +
                                  ") to " + std::to_string(hi[i]) + " (radius " +
                                  std::to_string(outer) + ")");
      }
    }
  }
  auto magnitude_warning = [&](const std::string& name, double peak) {
    if (peak > kLargeMagnitude) {
      report.warnings.push_back(name + " reaches magnitude " + std::to_string(peak) +
                                " at radius " + std::to_string(outer));
    }
  };
  for (const auto& [name, map] : coeffs) {
    magnitude_warning(name, detail::peak_magnitude<VectorMap, VectorJet>(*map, dims, outer, opts));
  }
  for (int i = 0; i < 2; ++i) {
    magnitude_warning("l" + std::to_string(i + 1),
                      detail::peak_magnitude<ScalarMap, ScalarJet>(p.costs.running[i], dims, outer, opts));
  }
  auto growth_warning = [&](const std::string& name, std::array<double, 2> lo,
                            std::array<double, 2> hi) {
    if (hi[0] > 5.0 * lo[0] + 1e-12) {
      report.warnings.push_back(name + " grows faster than C(1+|v|^2): constant " +
                                std::to_string(lo[0]) + " -> " + std::to_string(hi[0]));
    }
    if (hi[1] > 5.0 * lo[1] + 1e-12) {
      report.warnings.push_back(name + " gradient grows faster than C(1+|v|): constant " +
                                std::to_string(lo[1]) + " -> " + std::to_string(hi[1]));
    }
  };
  for (int i = 0; i < 2; ++i) {
    const std::string id = std::to_string(i + 1);
    growth_warning("l" + id, detail::running_growth(p.costs.running[i], dims, inner, opts),
                   detail::running_growth(p.costs.running[i], dims, outer, opts));
    growth_warning("phi" + id, detail::endpoint_growth(p.costs.terminal[i], dims.n, inner, opts),
                   detail::endpoint_growth(p.costs.terminal[i], dims.n, outer, opts));
    growth_warning("h" + id, detail::endpoint_growth(p.costs.initial[i], dims.m, inner, opts),
                   detail::endpoint_growth(p.costs.initial[i], dims.m, outer, opts));
  }
  return report;
}

}  // namespace fbnash
