#pragma once

#include "fbnash/problem.hpp"

#include <memory>

namespace fbnash {

/// Affine map  A x + B y + C vec(z) + D1 u1 + D2 u2 + e + t e_t  with `rows`
/// outputs.
struct AffineMap {
  Mat A, B, C, D1, D2;
  Vec e, e_t;

  static AffineMap zero(Index rows, const Dims& dims) {
    return {Mat::Zero(rows, dims.n),      Mat::Zero(rows, dims.m), Mat::Zero(rows, dims.z_size()),
            Mat::Zero(rows, dims.k1),     Mat::Zero(rows, dims.k2), Vec::Zero(rows),
            Vec::Zero(rows)};
  }

  Vec eval(const Point& p) const {
    Vec out;
    eval_into(p, out);
    return out;
  }

  void eval_into(const Point& p, Vec& out) const {
    out = e + p.t * e_t;
    out.noalias() += A * p.x;
    out.noalias() += B * p.y;
    out.noalias() += C * p.z;
    out.noalias() += D1 * p.u1;
    out.noalias() += D2 * p.u2;
  }

  void validate(const std::string& name, Index rows, const Dims& dims) const {
    auto want = [&](const std::string& part, const Mat& mat, Index r, Index c) {
      if (mat.rows() != r || mat.cols() != c) {
        throw ShapeError(name + "." + part + ": expected " + shape_string(r, c) + ", got " +
                         shape_string(mat.rows(), mat.cols()));
      }
    };
    want("A", A, rows, dims.n);
    want("B", B, rows, dims.m);
    want("C", C, rows, dims.z_size());
    want("D1", D1, rows, dims.k1);
    want("D2", D2, rows, dims.k2);
    want("e", e, rows, 1);
    want("e_t", e_t, rows, 1);
  }
};

/// l_i = 1/2 (x'Qx + y'Ry + S|z|^2 + u_i' N u_i + u_j' M u_j),
/// phi_i = 1/2 x'Gx, h_i = 1/2 y'Hy, where u_i is the player's own control
/// and u_j the opponent's.
struct QuadraticCost {
  Mat Q, R;
  double S = 0.0;
  Mat N, M, G, H;

  static QuadraticCost zero(const Dims& dims, int player) {
    const int own = dims.control(player), other = dims.control(3 - player);
    return {Mat::Zero(dims.n, dims.n), Mat::Zero(dims.m, dims.m), 0.0,
            Mat::Zero(own, own),       Mat::Zero(other, other),   Mat::Zero(dims.n, dims.n),
            Mat::Zero(dims.m, dims.m)};
  }

  QuadraticCost scaled(double c) const { return {c * Q, c * R, c * S, c * N, c * M, c * G, c * H}; }
};

/// Linear-quadratic game: affine coefficients, quadratic costs, constant xi.
struct LQGameSpec {
  Dims dims;
  double horizon = 1.0;
  Vec initial_state;
  Vec xi;
  AffineMap drift;
  std::vector<AffineMap> diffusion;  // one affine map per Brownian column
  AffineMap generator;
  std::array<QuadraticCost, 2> costs;
  ControlBox u1_box, u2_box;
  /// Declared convexity (N_i positive definite etc.); informational only.
  bool convex = true;

  static LQGameSpec zeros(const Dims& dims) {
    LQGameSpec s;
    s.dims = dims;
    s.initial_state = Vec::Zero(dims.n);
    s.xi = Vec::Zero(dims.m);
    s.drift = AffineMap::zero(dims.n, dims);
    s.diffusion.assign(static_cast<std::size_t>(dims.d), AffineMap::zero(dims.n, dims));
    s.generator = AffineMap::zero(dims.m, dims);
    s.costs = {QuadraticCost::zero(dims, 1), QuadraticCost::zero(dims, 2)};
    s.u1_box = ControlBox::unbounded(dims.k1);
    s.u2_box = ControlBox::unbounded(dims.k2);
    return s;
  }
};

namespace detail {

inline void check_square(const std::string& name, const Mat& m, Index size) {
  if (m.rows() != size || m.cols() != size) {
    throw ShapeError(name + ": expected " + shape_string(size, size) + ", got " +
                     shape_string(m.rows(), m.cols()));
  }
}

inline void affine_jet(const AffineMap& a, const Point& p, VectorJet& jet) {
  a.eval_into(p, jet.value);
  jet.dx = a.A;
  jet.dy = a.B;
  jet.dz = a.C;
  jet.du1 = a.D1;
  jet.du2 = a.D2;
}

// Column c of sigma occupies rows [c*n, (c+1)*n) of the flattened output.
inline AffineMap stack_columns(const std::vector<AffineMap>& cols, const Dims& dims) {
  AffineMap s = AffineMap::zero(dims.sigma_size(), dims);
  for (int c = 0; c < dims.d; ++c) {
    const auto& a = cols[static_cast<std::size_t>(c)];
    const Index r = static_cast<Index>(c) * dims.n;
    s.A.middleRows(r, dims.n) = a.A;
    s.B.middleRows(r, dims.n) = a.B;
    s.C.middleRows(r, dims.n) = a.C;
    s.D1.middleRows(r, dims.n) = a.D1;
    s.D2.middleRows(r, dims.n) = a.D2;
    s.e.segment(r, dims.n) = a.e;
    s.e_t.segment(r, dims.n) = a.e_t;
  }
  return s;
}

// Quadratic form 1/2 v'Mv with gradient 1/2 (M + M')v.
struct QuadForm {
  Mat m, sym;
  explicit QuadForm(const Mat& mat) : m(mat), sym(0.5 * (mat + mat.transpose())) {}
  double value(const Vec& v) const { return 0.5 * v.dot(m * v); }
  Vec grad(const Vec& v) const { return sym * v; }
};

struct RunningQuadratic {
  QuadForm Q, R, N, M;
  double S;
  int player;

  void operator()(const Point& p, ScalarJet& jet) const {
    const Vec& own = p.control(player);
    const Vec& other = p.control(3 - player);
    jet.value = Q.value(p.x) + R.value(p.y) + 0.5 * S * p.z.squaredNorm() + N.value(own) +
                M.value(other);
    jet.dx = Q.grad(p.x);
    jet.dy = R.grad(p.y);
    jet.dz = S * p.z;
    Vec& d_own = player == 1 ? jet.du1 : jet.du2;
    Vec& d_other = player == 1 ? jet.du2 : jet.du1;
    d_own = N.grad(own);
    d_other = M.grad(other);
  }
};

}  // namespace detail

/// Builds the GameProblem of an LQ spec; derivative fields are the exact
/// matrix partials.
inline GameProblem lq_to_problem(const LQGameSpec& spec) {
  const Dims& dims = spec.dims;
  dims.validate();
  if (!(spec.horizon > 0.0)) throw ShapeError("horizon: must be positive");
  if (spec.initial_state.size() != dims.n) {
    throw ShapeError("a: expected length " + std::to_string(dims.n));
  }
  if (spec.xi.size() != dims.m) throw ShapeError("xi: expected length " + std::to_string(dims.m));
  spec.drift.validate("b", dims.n, dims);
  if (static_cast<int>(spec.diffusion.size()) != dims.d) {
    throw ShapeError("sigma: expected " + std::to_string(dims.d) + " columns, got " +
                     std::to_string(spec.diffusion.size()));
  }
  for (int c = 0; c < dims.d; ++c) {
    spec.diffusion[static_cast<std::size_t>(c)].validate("sigma[" + std::to_string(c) + "]",
                                                         dims.n, dims);
  }
  spec.generator.validate("f", dims.m, dims);
  for (int i = 1; i <= 2; ++i) {
    const auto& c = spec.costs[static_cast<std::size_t>(i - 1)];
    const std::string id = "cost" + std::to_string(i) + ".";
    detail::check_square(id + "Q", c.Q, dims.n);
    detail::check_square(id + "R", c.R, dims.m);
    detail::check_square(id + "N", c.N, dims.control(i));
    detail::check_square(id + "M", c.M, dims.control(3 - i));
    detail::check_square(id + "G", c.G, dims.n);
    detail::check_square(id + "H", c.H, dims.m);
  }
  spec.u1_box.validate("u1_box", dims.k1);
  spec.u2_box.validate("u2_box", dims.k2);

  GameProblem p;
  p.dims = dims;
  p.horizon = spec.horizon;
  p.initial_state = spec.initial_state;
  p.terminal = TerminalData::constant(spec.xi);
  p.u1_box = spec.u1_box;
  p.u2_box = spec.u2_box;

  auto drift = std::make_shared<const AffineMap>(spec.drift);
  auto diffusion = std::make_shared<const AffineMap>(detail::stack_columns(spec.diffusion, dims));
  auto generator = std::make_shared<const AffineMap>(spec.generator);
  p.coeffs.drift = [drift](const Point& pt, VectorJet& j) { detail::affine_jet(*drift, pt, j); };
  p.coeffs.diffusion = [diffusion](const Point& pt, VectorJet& j) {
    detail::affine_jet(*diffusion, pt, j);
  };
  p.coeffs.generator = [generator](const Point& pt, VectorJet& j) {
    detail::affine_jet(*generator, pt, j);
  };

  for (int i = 1; i <= 2; ++i) {
    const auto& c = spec.costs[static_cast<std::size_t>(i - 1)];
    auto running = std::make_shared<const detail::RunningQuadratic>(detail::RunningQuadratic{
        detail::QuadForm(c.Q), detail::QuadForm(c.R), detail::QuadForm(c.N),
        detail::QuadForm(c.M), c.S, i});
    p.costs.running[static_cast<std::size_t>(i - 1)] =
        [running](const Point& pt, ScalarJet& j) { (*running)(pt, j); };
    auto g = std::make_shared<const detail::QuadForm>(c.G);
    auto h = std::make_shared<const detail::QuadForm>(c.H);
    p.costs.terminal[static_cast<std::size_t>(i - 1)] = [g](const Vec& x, EndpointJet& j) {
      j.value = g->value(x);
      j.grad = g->grad(x);
    };
    p.costs.initial[static_cast<std::size_t>(i - 1)] = [h](const Vec& y, EndpointJet& j) {
      j.value = h->value(y);
      j.grad = h->grad(y);
    };
  }
  return p;
}

}  // namespace fbnash
