// Acceptance run: one PASS/FAIL line per criterion.
#include "test_support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace fbnash;
using namespace fbnash::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double budget_seconds, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= budget_seconds;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::ostringstream line;
  line << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail
       << " [" << secs << " s of " << budget_seconds << " s]";
  if (!in_time) line << " (over time budget)";
  std::cout << line.str() << std::endl;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Zero dynamics, l_1 = n1 u1^2 / 2, l_2 = u2^2 / 2 on [-1, 1]^2.
GameProblem quadratic_control_problem(double n1) {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 1, 1});
  s.initial_state = Vec::Ones(1);
  s.costs[0].N(0, 0) = n1;
  s.costs[1].N(0, 0) = 1.0;
  s.u1_box = s.u2_box = ControlBox::uniform(1, -1.0, 1.0);
  return lq_to_problem(s);
}

double cost(const GameProblem& p, const ControlProcess& u, const LatticeBackend& be, int i) {
  const FbsdeSolution s = solve_fbsde(p, u, be, tight());
  return eval_cost(p, s.state, u, i, be).value;
}

VerificationCertificate certify(const GameProblem& p, const ControlProcess& u, const LatticeBackend& be,
                                const VerificationOptions& opts) {
  const FbsdeSolution fb = solve_fbsde(p, u, be, tight());
  const auto a1 = solve_adjoint(p, fb.state, u, 1, be, tight()).adjoint;
  const auto a2 = solve_adjoint(p, fb.state, u, 2, be, tight()).adjoint;
  return build_certificate(p, fb.state, a1, a2, u, be, opts);
}

bool has_witness(const VerificationCertificate& c, const std::string& kind) {
  for (const auto& w : c.witnesses) {
    if (w.kind == kind) return true;
  }
  return false;
}

// Every control field on a 2-step lattice with values in `grid` (3 nodes).
std::vector<Field> all_strategies(const std::vector<double>& grid) {
  std::vector<Field> out;
  for (double a : grid) {
    for (double b : grid) {
      for (double c : grid) {
        Layer l0(1, 1), l1(1, 2);
        l0(0, 0) = a;
        l1(0, 0) = b;
        l1(0, 1) = c;
        out.push_back({l0, l1});
      }
    }
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(FBNASH_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome derivative_consistency() {
  double worst = 0.0;
  int points = 0;
  bool passed = true;
  const Dims dims{2, 2, 2, 1, 2};
  for (std::uint64_t seed : {101u, 202u, 303u}) {
    const GameProblem p = lq_to_problem(random_spec(seed, dims, 0.5));
    DerivativeCheckOptions opts;
    opts.samples = 100;
    opts.seed = seed;
    const ValidationReport v = validate_problem(p, opts);
    passed = passed && v.derivatives.passed();
    worst = std::max(worst, v.derivatives.max_rel_error());

    std::mt19937_64 rng(seed);
    for (int sample = 0; sample < 100; ++sample) {
      HamiltonianInputs in{Point(dims), random_matrix(rng, dims.n, 1, 1.0),
                           random_matrix(rng, dims.sigma_size(), 1, 1.0), random_matrix(rng, dims.m, 1, 1.0)};
      in.point.t = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      in.point.x = random_matrix(rng, dims.n, 1, 3.0);
      in.point.y = random_matrix(rng, dims.m, 1, 3.0);
      in.point.z = random_matrix(rng, dims.z_size(), 1, 3.0);
      in.point.u1 = random_matrix(rng, dims.k1, 1, 3.0);
      in.point.u2 = random_matrix(rng, dims.k2, 1, 3.0);
      ++points;
      for (int i = 1; i <= 2; ++i) {
        const HamiltonianPoint h = eval_hamiltonian(p, in, i);
        const std::array<std::pair<Vec*, const Vec*>, 5> args{
            std::pair{&in.point.x, &h.dx}, std::pair{&in.point.y, &h.dy}, std::pair{&in.point.z, &h.dz},
            std::pair{&in.point.u1, &h.du1}, std::pair{&in.point.u2, &h.du2}};
        for (auto [arg, grad] : args) {
          for (Index c = 0; c < arg->size(); ++c) {
            const double step = 1e-4, save = (*arg)[c];
            (*arg)[c] = save + step;
            const double up = eval_hamiltonian(p, in, i).value;
            (*arg)[c] = save - step;
            const double dn = eval_hamiltonian(p, in, i).value;
            (*arg)[c] = save;
            const double fd = (up - dn) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - (*grad)[c]) / std::max(1.0, std::abs(fd)));
          }
        }
      }
    }
  }
  passed = passed && worst <= 1e-5;
  return {passed, "max relative error " + fmt(worst) + " over 3 instances x 100 coefficient samples and " +
                      std::to_string(points) + " Hamiltonian points"};
}

Outcome trivial_exactness() {
  const GameProblem p = lq_to_problem(zero_spec());
  const LatticeBackend be(1.0, 16);
  const auto u = ControlProcess::initial(p, be);
  const FbsdeSolution fb = solve_fbsde(p, u, be);
  double dev = std::max({max_abs_dev(fb.state.x, 1.0), max_abs_dev(fb.state.y, 0.0), max_abs_dev(fb.state.z, 0.0)});
  for (int i : {1, 2}) {
    const AdjointTrajectory a = solve_adjoint(p, fb.state, u, i, be).adjoint;
    dev = std::max({dev, max_abs_dev(a.p, 1.0), max_abs_dev(a.q, 0.0), max_abs_dev(a.k, 0.0)});
    dev = std::max(dev, std::abs(eval_cost(p, fb.state, u, i, be).value - 0.5));
  }
  return {dev <= 1e-14, "max deviation " + fmt(dev)};
}

Outcome backward_order() {
  LQGameSpec s = LQGameSpec::zeros({1, 1, 1, 0, 0});
  s.generator.B(0, 0) = 0.5;
  s.xi = Vec::Ones(1);
  const GameProblem p = lq_to_problem(s);
  const double exact = std::exp(0.5);
  auto error = [&](int N) {
    const LatticeBackend be(1.0, N);
    const auto u = ControlProcess::initial(p, be);
    return relative(solve_fbsde(p, u, be).state.y[0](0, 0), exact);
  };
  const double e256 = error(256), e512 = error(512);
  const double ratio = e256 / e512;
  return {e256 <= 1e-3 && ratio >= 1.8, "relative error " + fmt(e256) + " at N=256, ratio " + fmt(ratio)};
}

Outcome martingale_exactness() {
  GameProblem p = lq_to_problem(LQGameSpec::zeros({1, 1, 1, 0, 0}));
  p.terminal.xi = [](const Vec& b) { return b; };
  const LatticeBackend be(1.0, 32);
  const auto u = ControlProcess::initial(p, be);
  const FbsdeSolution fb = solve_fbsde(p, u, be);
  double dev = max_abs_dev(fb.state.z, 1.0);
  for (int j = 0; j <= 32; ++j) {
    for (Index s = 0; s < be.scenarios(j); ++s) {
      dev = std::max(dev, std::abs(fb.state.y[static_cast<std::size_t>(j)](0, s) - be.lattice().brownian(j, s)));
    }
  }
  return {dev <= 1e-14, "max deviation " + fmt(dev)};
}

Outcome gateaux_identity() {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 64);
  const auto u = ControlProcess::constant(be, Vec::Constant(1, 0.2), Vec::Constant(1, -0.3));
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  for (int i : {1, 2}) {
    for (int r = 0; r < 5; ++r) {
      Field v;
      for (int j = 0; j < 64; ++j) v.push_back(random_matrix(rng, 1, be.scenarios(j), 1.0));
      const GateauxResult g = gateaux_derivative(p, u, v, i, be);
      worst = std::max(worst, relative(g.adjoint_form, g.finite_diff_form));
    }
  }
  return {worst <= 1e-3, "max relative gap " + fmt(worst) + " over 10 directions"};
}

Outcome duality_identity() {
  const GameProblem p = lq_to_problem(coupled_spec());
  double sum = 0.0;
  int count = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coef(-0.5, 0.5);
    const double c1 = coef(rng), c2 = coef(rng), c3 = coef(rng);
    std::array<double, 3> residual{};
    for (int r = 0; r < 3; ++r) {
      const LatticeBackend be(1.0, 32 << r);
      const auto u_bar = ControlProcess::constant(be, Vec::Constant(1, 0.2), Vec::Constant(1, -0.1));
      ControlProcess u = u_bar;
      for (std::size_t j = 0; j < u.u1.size(); ++j) {
        u.u1[j] += node_field(be, 1, [&](double t, double b) { return c1 + c2 * t + c3 * b; })[j];
      }
      const FbsdeSolution ref = solve_fbsde(p, u_bar, be, tight());
      const FbsdeSolution pert = solve_fbsde(p, u, be, tight());
      const AdjointTrajectory a = solve_adjoint(p, ref.state, u_bar, 1, be, tight()).adjoint;
      residual[static_cast<std::size_t>(r)] =
          std::abs(duality_residual(p, pert.state, ref.state, a, u, u_bar, be).residual);
    }
    sum += residual[0] / residual[1] + residual[1] / residual[2];
    count += 2;
  }
  const double avg = sum / count;
  return {avg >= 1.5, "average residual ratio " + fmt(avg) + " over 5 seeds"};
}

Outcome riccati_agreement() {
  const LQGameSpec s = regulator_spec();
  const LatticeBackend be(1.0, 128);
  const RiccatiReport r = riccati_oracle(s, be);
  GradientConfig g;
  g.step = 0.5;
  g.tol = 1e-8;
  const EquilibriumReport rep = solve_nash(lq_to_problem(s), be, tight(), g);
  const double err = relative_l2(rep.controls.u1, r.u, be);
  return {rep.converged && err <= 0.02,
          "relative L2 " + fmt(err) + ", solver " + rep.reason + " after " + std::to_string(rep.iterations) +
              " iterations"};
}

Outcome brute_force_agreement() {
  LQGameSpec s = coupled_spec();
  s.drift.B(0, 0) = 0.05;
  s.u1_box = s.u2_box = ControlBox::uniform(1, -1.0, 1.0);
  const GameProblem p = lq_to_problem(s);
  const LatticeBackend be(1.0, 2);
  OracleOptions opts;
  opts.grid_points = 5;
  const OracleReport rep = brute_force_nash(p, be, opts);

  // Exhaustive unilateral deviations, independent of the oracle's own test.
  const auto strategies = all_strategies({-1.0, -0.5, 0.0, 0.5, 1.0});
  bool grid_nash = rep.equilibrium;
  for (int i : {1, 2}) {
    const double own = cost(p, rep.controls, be, i);
    for (const Field& f : strategies) {
      ControlProcess w = rep.controls;
      w.of(i) = f;
      if (cost(p, w, be, i) < own - 1e-12 * (1.0 + std::abs(own))) grid_nash = false;
    }
  }

  GradientConfig g;
  g.step = 0.5;
  g.tol = 1e-9;
  const EquilibriumReport nash = solve_nash(p, be, tight(), g);
  const double gap1 = std::abs(nash.J1.value - rep.J1), gap2 = std::abs(nash.J2.value - rep.J2);
  const bool within = gap1 <= rep.resolution_bound[0] && gap2 <= rep.resolution_bound[1];
  return {grid_nash && nash.converged && within,
          std::string(grid_nash ? "grid Nash point" : "profitable grid deviation found") + " (" + rep.method +
              "), |dJ1| " + fmt(gap1) + " <= " + fmt(rep.resolution_bound[0]) + ", |dJ2| " + fmt(gap2) +
              " <= " + fmt(rep.resolution_bound[1])};
}

Outcome certificate_soundness() {
  const GameProblem p = lq_to_problem(coupled_spec());
  const LatticeBackend be(1.0, 16);
  GradientConfig g;
  g.step = 0.5;
  g.tol = 1e-8;
  VerificationOptions v;
  v.radius = 3.0;
  const EquilibriumReport rep = solve_nash(p, be, tight(), g, v);
  const bool certified = rep.converged && rep.certificate.verdict == Verdict::Certified;

  ControlProcess shifted = rep.controls;
  for (auto& l : shifted.u1) l.array() += 0.5;
  const VerificationCertificate c2 = certify(p, shifted, be, v);
  const bool stationarity = c2.verdict == Verdict::Refuted && has_witness(c2, "pointwise_min");

  const GameProblem concave = quadratic_control_problem(-1.0);
  const auto u0 = ControlProcess::constant(be, Vec::Zero(1), Vec::Zero(1));
  const VerificationCertificate c3 = certify(concave, u0, be, VerificationOptions{});
  const bool convexity = c3.verdict == Verdict::Refuted && has_witness(c3, "hamiltonian_convexity");

  return {certified && stationarity && convexity,
          std::string("equilibrium ") + to_string(rep.certificate.verdict) + ", shifted " + to_string(c2.verdict) +
              (stationarity ? " with pointwise_min witness" : "") + ", concave control cost " +
              to_string(c3.verdict) + (convexity ? " with hamiltonian_convexity witness" : "")};
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / "fbnash_acceptance";
  fs::remove_all(root);
  const std::string config = std::string(FBNASH_CONFIG_DIR) + "/montecarlo.json";
  const std::array<std::pair<const char*, int>, 3> runs{std::pair{"a", 1}, std::pair{"b", 1}, std::pair{"c", 4}};
  for (const auto& [name, threads] : runs) {
    fs::create_directories(root / name);
    const int code = run_tool("solve --config " + config + " --out " + (root / name).string() + " --threads " +
                              std::to_string(threads));
    if (code != 0) return {false, "solve exited with " + std::to_string(code)};
  }
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const std::string file = entry.path().filename().string();
    if (file == "timing.json") continue;
    const std::string ref = slurp(entry.path());
    for (const char* other : {"b", "c"}) {
      if (slurp(root / other / file) != ref) return {false, file + " differs in run " + other};
    }
    ++compared;
  }
  fs::remove_all(root);
  return {compared >= 3, std::to_string(compared) + " output files byte-identical across 3 runs (threads 1, 1, 4)"};
}

}  // namespace

int main() {
  std::cout.precision(3);
  criterion(1, "derivative consistency", 10, derivative_consistency);
  criterion(2, "trivial exactness", 1, trivial_exactness);
  criterion(3, "backward-solver order", 30, backward_order);
  criterion(4, "martingale-representation exactness", 1, martingale_exactness);
  criterion(5, "Gateaux identity", 120, gateaux_identity);
  criterion(6, "duality identity", 120, duality_identity);
  criterion(7, "single-player Riccati oracle", 60, riccati_agreement);
  criterion(8, "brute-force Nash oracle", 120, brute_force_agreement);
  criterion(9, "verification certificate soundness", 60, certificate_soundness);
  criterion(10, "reproducibility", 60, reproducibility);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
