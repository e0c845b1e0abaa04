#pragma once

#include "fbnash/fbsde.hpp"

#include <array>

namespace fbnash {

/// Arguments of H_i: the state/control point and the adjoint values
/// (p in R^n, q in R^{n x d} flattened like sigma, k in R^m).
struct HamiltonianInputs {
  Point point;
  Vec p, q, k;
};

/// H_i = <k, -f> + <p, b> + <q, sigma> + l_i and its partials.
struct HamiltonianPoint {
  double value = 0.0;
  Vec dx, dy, dz, du1, du2;

  const Vec& du(int player) const { return player == 1 ? du1 : du2; }
};

namespace detail {

// grad += sum_r w[r] * J.row(r)', accumulated row by row.
inline void add_rows(Vec& grad, const Mat& jac, const Vec& w, double sign) {
  for (Index r = 0; r < jac.rows(); ++r) grad.noalias() += (sign * w[r]) * jac.row(r).transpose();
}

// grad += sum_c sigma_v[slice c]' q_c for the d column slices of sigma.
inline void add_slices(Vec& grad, const Mat& jac, const Vec& q, Index n, Index d) {
  for (Index c = 0; c < d; ++c) {
    grad.noalias() += jac.middleRows(c * n, n).transpose() * q.segment(c * n, n);
  }
}

}  // namespace detail

/// Evaluates H_i and its gradients by the chain rule,
/// H_v = b_v' p + sigma_v' q - f_v' k + l_v for v in {x, y, z, u1, u2}.
inline HamiltonianPoint eval_hamiltonian(const GameProblem& prob, const HamiltonianInputs& in,
                                         int player) {
  if (player != 1 && player != 2) throw ConfigError("player must be 1 or 2");
  const Dims& dims = prob.dims;
  if (in.p.size() != dims.n || in.q.size() != dims.sigma_size() || in.k.size() != dims.m) {
    throw ShapeError("eval_hamiltonian: adjoint inputs have the wrong length");
  }
  VectorJet b, s, f;
  ScalarJet l;
  prob.coeffs.drift(in.point, b);
  prob.coeffs.diffusion(in.point, s);
  prob.coeffs.generator(in.point, f);
  prob.costs.running[static_cast<std::size_t>(player - 1)](in.point, l);

  HamiltonianPoint h;
  h.value = -in.k.dot(f.value) + in.p.dot(b.value) + in.q.dot(s.value) + l.value;
  auto assemble = [&](Vec& out, const Vec& lv, const Mat& bv, const Mat& sv, const Mat& fv) {
    out = lv;
    detail::add_rows(out, bv, in.p, 1.0);
    detail::add_slices(out, sv, in.q, dims.n, dims.d);
    detail::add_rows(out, fv, in.k, -1.0);
  };
  assemble(h.dx, l.dx, b.dx, s.dx, f.dx);
  assemble(h.dy, l.dy, b.dy, s.dy, f.dy);
  assemble(h.dz, l.dz, b.dz, s.dz, f.dz);
  assemble(h.du1, l.du1, b.du1, s.du1, f.du1);
  assemble(h.du2, l.du2, b.du2, s.du2, f.du2);
  return h;
}

// ---------------------------------------------------------------------------
// Jets along a trajectory

/// Jets of one vector map at every scenario of one step, packed column-wise:
/// d[a].col(s) holds the (rows x size_a) partial flattened column-major.
struct PackedVectorJets {
  Index rows = 0;
  std::array<Index, 5> sizes{};
  Layer value;
  std::array<Layer, 5> d;

  Eigen::Map<const Mat> partial(int arg, Index s) const {
    const auto a = static_cast<std::size_t>(arg);
    return {d[a].col(s).data(), rows, sizes[a]};
  }
};

struct PackedScalarJets {
  Layer value;            // 1 x S
  std::array<Layer, 5> d; // size_a x S
};

/// Argument order of packed partials.
enum JetArg : int { kX = 0, kY = 1, kZ = 2, kU1 = 3, kU2 = 4 };

struct StepJets {
  PackedVectorJets b, sigma, f;
  std::array<PackedScalarJets, 2> l;
};

/// Jets of b, sigma, f, l_1, l_2 at the evaluation points
/// (t_j, x_j, y_hat_j, z_j, u_j) of steps 0..N-1.
struct TrajectoryJets {
  std::vector<StepJets> steps;
};

namespace detail {

inline std::array<Index, 5> arg_sizes(const Dims& dims) {
  return {dims.n, dims.m, dims.z_size(), dims.k1, dims.k2};
}

inline void init_packed(PackedVectorJets& pj, Index rows, const Dims& dims, Index count) {
  pj.rows = rows;
  pj.sizes = arg_sizes(dims);
  pj.value.resize(rows, count);
  for (std::size_t a = 0; a < 5; ++a) pj.d[a].resize(rows * pj.sizes[a], count);
}

inline void store(PackedVectorJets& pj, const VectorJet& jet, Index s) {
  pj.value.col(s) = jet.value;
  const std::array<const Mat*, 5> parts{&jet.dx, &jet.dy, &jet.dz, &jet.du1, &jet.du2};
  for (std::size_t a = 0; a < 5; ++a) {
    pj.d[a].col(s) = Eigen::Map<const Vec>(parts[a]->data(), parts[a]->size());
  }
}

inline void init_packed(PackedScalarJets& pj, const Dims& dims, Index count) {
  const auto sizes = arg_sizes(dims);
  pj.value.resize(1, count);
  for (std::size_t a = 0; a < 5; ++a) pj.d[a].resize(sizes[a], count);
}

inline void store(PackedScalarJets& pj, const ScalarJet& jet, Index s) {
  pj.value(0, s) = jet.value;
  pj.d[0].col(s) = jet.dx;
  pj.d[1].col(s) = jet.dy;
  pj.d[2].col(s) = jet.dz;
  pj.d[3].col(s) = jet.du1;
  pj.d[4].col(s) = jet.du2;
}

}  // namespace detail

template <ScenarioBackend B>
TrajectoryJets evaluate_jets(const GameProblem& prob, const StateTrajectory& traj,
                             const ControlProcess& u, const B& backend, int threads = 1) {
  const Dims& dims = prob.dims;
  const TimeGrid& grid = backend.grid();
  TrajectoryJets out;
  out.steps.resize(static_cast<std::size_t>(grid.steps));
  for (int j = 0; j < grid.steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const Index count = backend.scenarios(j);
    StepJets& sjets = out.steps[sj];
    detail::init_packed(sjets.b, dims.n, dims, count);
    detail::init_packed(sjets.sigma, dims.sigma_size(), dims, count);
    detail::init_packed(sjets.f, dims.m, dims, count);
    detail::init_packed(sjets.l[0], dims, count);
    detail::init_packed(sjets.l[1], dims, count);
    parallel_for(count, threads, [&](Index begin, Index end) {
      Point pt(dims);
      VectorJet vj;
      ScalarJet lj;
      for (Index s = begin; s < end; ++s) {
        detail::load_point(pt, grid.time(j), traj.x[sj], traj.y_hat[sj], traj.z[sj], u, j, s);
        prob.coeffs.drift(pt, vj);
        detail::store(sjets.b, vj, s);
        prob.coeffs.diffusion(pt, vj);
        detail::store(sjets.sigma, vj, s);
        prob.coeffs.generator(pt, vj);
        detail::store(sjets.f, vj, s);
        for (std::size_t i = 0; i < 2; ++i) {
          prob.costs.running[i](pt, lj);
          detail::store(sjets.l[i], lj, s);
        }
      }
    });
  }
  return out;
}

/// Inputs of H_i at step j < N, scenario s of a solved trajectory: the
/// point (t_j, x_j, y_hat_j, z_j, u_j) with adjoint values (p, q, k).
inline HamiltonianInputs trajectory_inputs(const GameProblem& prob, const StateTrajectory& traj,
                                           const ControlProcess& u, double t, int j, Index s,
                                           const Vec& p, const Vec& q, const Vec& k) {
  HamiltonianInputs in{Point(prob.dims), p, q, k};
  detail::load_point(in.point, t, traj.x[static_cast<std::size_t>(j)],
                     traj.y_hat[static_cast<std::size_t>(j)], traj.z[static_cast<std::size_t>(j)],
                     u, j, s);
  return in;
}

}  // namespace fbnash
