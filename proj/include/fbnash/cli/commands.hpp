#pragma once

#include "fbnash/cli/io.hpp"

#include <chrono>
#include <iostream>

namespace fbnash::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kSolverFailure = 1,
  kRefuted = 2,        // also: check failed
  kInconclusive = 3,
  kBadInput = 64,
  kBudgetExceeded = 65,
};

struct CommandOptions {
  std::string config;
  std::string out = ".";
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string controls;  // verify
  std::string report;    // oracle: companion solve report
};

inline Backend make_backend(const RunConfig& cfg) {
  const TimeGrid grid = TimeGrid::uniform(cfg.problem.horizon, cfg.backend.N);
  if (cfg.backend.type == "lattice") {
    if (cfg.problem.dims.d != 1) throw ConfigError("backend.type: the lattice requires problem.dims.d = 1");
    return LatticeBackend(BinomialLattice(grid));
  }
  return MonteCarloBackend(sample_ensemble(grid, cfg.backend.P, cfg.problem.dims.d, cfg.seed),
                           RegressionConfig{cfg.backend.degree, 1e-8});
}

inline VerificationOptions verification_options(const RunConfig& cfg, int threads) {
  VerificationOptions v;
  v.grid_density = cfg.verify.grid_density;
  v.radius = cfg.verify.radius;
  v.pointwise_tolerance = cfg.verify.tolerance;
  v.convexity_samples = cfg.verify.convexity_samples;
  v.convexity_radius = cfg.verify.convexity_radius;
  v.endpoint_radius = cfg.verify.endpoint_radius;
  v.seed = cfg.seed;
  v.threads = threads;
  return v;
}

namespace detail {

struct Loaded {
  RunConfig cfg;
  GameProblem problem;
  std::filesystem::path out;
  int threads = 1;
};

inline Loaded load(const CommandOptions& opts) {
  Loaded l;
  l.cfg = load_config(opts.config);
  if (opts.seed) {
    l.cfg.seed = *opts.seed;
    l.cfg.source["seed"] = *opts.seed;
  }
  l.problem = make_problem(l.cfg);
  if (opts.threads < 1) throw ConfigError("--threads must be >= 1");
  l.threads = opts.threads;
  l.cfg.fbsde.threads = opts.threads;
  l.out = opts.out;
  std::filesystem::create_directories(l.out);
  return l;
}

inline void write_timing(const std::filesystem::path& out, double seconds, int threads) {
  write_json(out / "timing.json", {{"wall_time_seconds", seconds}, {"threads", threads}});
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Maps library exceptions to exit codes; `body` returns the success code.
template <class Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const BudgetError& e) {
    err << "error: " << e.what() << "\n";
    return kBudgetExceeded;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolverFailure;
  }
}

}  // namespace detail

/// solve: runs solve_nash and writes report.json, trajectory.csv,
/// history.csv and timing.json. Exit 0 iff converged and the certificate is
/// certified or inconclusive, 2 if refuted, 1 otherwise.
inline int cmd_solve(const CommandOptions& opts, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    detail::Loaded l = detail::load(opts);
    const Backend backend = make_backend(l.cfg);
    return std::visit(
        [&](const auto& be) {
          const EquilibriumReport rep = solve_nash(l.problem, be, l.cfg.fbsde, l.cfg.gradient,
                                                   verification_options(l.cfg, l.threads));
          json r = {{"metadata", metadata(l.cfg, "solve")},
                    {"converged", rep.converged},
                    {"reason", rep.reason},
                    {"iterations", rep.iterations},
                    {"evaluations", rep.evaluations},
                    {"J1", number_or_null(rep.J1.value)},
                    {"J1_std_error", number_or_null(rep.J1.std_error)},
                    {"J2", number_or_null(rep.J2.value)},
                    {"J2_std_error", number_or_null(rep.J2.std_error)},
                    {"rho1", number_or_null(rep.rho1)},
                    {"rho2", number_or_null(rep.rho2)},
                    {"min_inner_product1", number_or_null(rep.vi.players[0].min_inner_product)},
                    {"min_inner_product2", number_or_null(rep.vi.players[1].min_inner_product)},
                    {"tolerance", l.cfg.gradient.tol},
                    {"certificate", to_json(rep.certificate)},
                    {"fbsde", to_json(rep.fbsde)},
                    {"adjoint1", to_json(rep.adjoint1)},
                    {"adjoint2", to_json(rep.adjoint2)},
                    {"warnings", rep.warnings}};
          write_json(l.out / "report.json", r);
          write_text(l.out / "trajectory.csv",
                     trajectory_csv(l.problem.dims, be, rep.state, rep.controls, rep.adj1, rep.adj2));
          write_text(l.out / "history.csv", history_csv(rep.history));
          detail::write_timing(l.out, detail::seconds_since(start), l.threads);
          out << "converged: " << (rep.converged ? "yes" : "no") << " (" << rep.reason << ")\n"
              << "J1 = " << format_double(rep.J1.value) << ", J2 = " << format_double(rep.J2.value)
              << "\nrho1 = " << format_double(rep.rho1) << ", rho2 = " << format_double(rep.rho2)
              << "\ncertificate: " << to_string(rep.certificate.verdict) << "\n";
          if (rep.certificate.verdict == Verdict::Refuted) return static_cast<int>(kRefuted);
          return static_cast<int>(rep.converged ? kOk : kSolverFailure);
        },
        backend);
  });
}

/// verify: solves the state and adjoints for supplied controls and writes
/// certificate.json. Exit 0 certified, 2 refuted, 3 inconclusive.
inline int cmd_verify(const CommandOptions& opts, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    detail::Loaded l = detail::load(opts);
    const Backend backend = make_backend(l.cfg);
    return std::visit(
        [&](const auto& be) {
          const ControlProcess u = read_controls_csv(opts.controls, l.problem.dims, be);
          const FbsdeSolution sol = solve_fbsde(l.problem, u, be, l.cfg.fbsde);
          const TrajectoryJets jets = evaluate_jets(l.problem, sol.state, u, be, l.threads);
          const AdjointSolution a1 = solve_adjoint(l.problem, sol.state, u, 1, be, l.cfg.fbsde, nullptr, &jets);
          const AdjointSolution a2 = solve_adjoint(l.problem, sol.state, u, 2, be, l.cfg.fbsde, nullptr, &jets);
          const ViResidualReport vi =
              vi_residual(l.problem, sol.state, a1.adjoint, a2.adjoint, u, be, l.threads);
          const VerificationCertificate cert =
              build_certificate(l.problem, sol.state, a1.adjoint, a2.adjoint, u, be,
                                verification_options(l.cfg, l.threads));
          json r = {{"metadata", metadata(l.cfg, "verify")},
                    {"controls", opts.controls},
                    {"vi_residual", to_json(vi)},
                    {"certificate", to_json(cert)},
                    {"J1", number_or_null(eval_cost(l.problem, sol.state, u, 1, be).value)},
                    {"J2", number_or_null(eval_cost(l.problem, sol.state, u, 2, be).value)},
                    {"fbsde", to_json(sol.diagnostics)},
                    {"adjoint1", to_json(a1.diagnostics)},
                    {"adjoint2", to_json(a2.diagnostics)}};
          write_json(l.out / "certificate.json", r);
          detail::write_timing(l.out, detail::seconds_since(start), l.threads);
          out << "rho1 = " << format_double(vi.rho(1)) << ", rho2 = " << format_double(vi.rho(2))
              << "\ncertificate: " << to_string(cert.verdict) << "\n";
          switch (cert.verdict) {
            case Verdict::Certified: return static_cast<int>(kOk);
            case Verdict::Refuted: return static_cast<int>(kRefuted);
            case Verdict::Inconclusive: return static_cast<int>(kInconclusive);
          }
          return static_cast<int>(kInconclusive);
        },
        backend);
  });
}

/// oracle: brute-force grid Nash search on the lattice (and the Riccati
/// oracle when enabled); writes oracle.json. Exit 65 when over budget.
inline int cmd_oracle(const CommandOptions& opts, std::ostream& out = std::cout,
                      std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    const auto start = std::chrono::steady_clock::now();
    detail::Loaded l = detail::load(opts);
    if (l.cfg.backend.type != "lattice") throw ConfigError("backend.type: the oracle requires the lattice");
    const Backend backend = make_backend(l.cfg);
    const auto& be = std::get<LatticeBackend>(backend);
    OracleOptions o;
    o.grid_points = l.cfg.oracle.grid_points;
    o.budget = l.cfg.oracle.budget;
    o.radius = l.cfg.oracle.radius;
    o.max_rounds = l.cfg.oracle.max_rounds;
    o.fbsde.threads = l.threads;
    o.fbsde.damping = l.cfg.fbsde.damping;
    const OracleReport rep = brute_force_nash(l.problem, be, o);

    json strategies = json::array();
    for (const auto& s : rep.strategy) strategies.push_back(s);
    json grids = json::array();
    for (const auto& g : rep.grids) {
      json a = json::array();
      for (const auto& v : g) a.push_back(to_json(v));
      grids.push_back(a);
    }
    json r = {{"metadata", metadata(l.cfg, "oracle")},
              {"method", rep.method},
              {"equilibrium", rep.equilibrium},
              {"cycle", rep.cycle},
              {"rounds", rep.rounds},
              {"solves", rep.solves},
              {"J1", number_or_null(rep.J1)},
              {"J2", number_or_null(rep.J2)},
              {"resolution_bound", {rep.resolution_bound[0], rep.resolution_bound[1]}},
              {"grid_spacing", {rep.spacing[0], rep.spacing[1]}},
              {"grids", grids},
              {"strategies", strategies}};
    if (l.cfg.oracle.riccati) {
      const RiccatiReport ric = riccati_oracle(l.cfg.problem, be);
      json u = json::array();
      for (const auto& layer : ric.u) {
        json row = json::array();
        for (Index s = 0; s < layer.cols(); ++s) row.push_back(to_json(layer.col(s)));
        u.push_back(row);
      }
      r["riccati"] = {{"P0", to_json(Eigen::Map<const Vec>(ric.P[0].data(), ric.P[0].size()))},
                      {"controls", u}};
    }
    write_json(l.out / "oracle.json", r);
    detail::write_timing(l.out, detail::seconds_since(start), l.threads);
    out << "method: " << rep.method << "\ngrid equilibrium: " << (rep.equilibrium ? "yes" : "no")
        << "\nJ1 = " << format_double(rep.J1) << ", J2 = " << format_double(rep.J2)
        << "\nresolution bound: " << format_double(rep.resolution_bound[0]) << ", "
        << format_double(rep.resolution_bound[1]) << "\n";
    if (!opts.report.empty()) {
      std::ifstream in(opts.report);
      if (!in) throw ConfigError(opts.report + ": cannot open solve report");
      json solved;
      try {
        in >> solved;
      } catch (const json::exception& e) {
        throw ConfigError(opts.report + ": " + e.what());
      }
      if (!solved.contains("J1") || !solved.contains("J2") || !solved["J1"].is_number() ||
          !solved["J2"].is_number()) {
        throw ConfigError(opts.report + ": J1 and J2 missing");
      }
      const double g1 = std::abs(solved["J1"].get<double>() - rep.J1);
      const double g2 = std::abs(solved["J2"].get<double>() - rep.J2);
      out << "cost gap: |dJ1| = " << format_double(g1) << ", |dJ2| = " << format_double(g2)
          << (g1 <= rep.resolution_bound[0] && g2 <= rep.resolution_bound[1] ? " (within bound)"
                                                                             : " (outside bound)")
          << "\n";
    }
    return static_cast<int>(kOk);
  });
}

/// check: validate_problem with the configured sampling; exit 0 pass, 2 fail.
inline int cmd_check(const CommandOptions& opts, std::ostream& out = std::cout,
                     std::ostream& err = std::cerr) {
  return detail::guarded(err, [&] {
    detail::Loaded l = detail::load(opts);
    DerivativeCheckOptions d;
    d.samples = l.cfg.check.samples;
    d.seed = l.cfg.seed;
    d.radius = l.cfg.check.radius;
    d.tolerance = l.cfg.check.tolerance;
    ValidationReport rep;
    try {
      rep = validate_problem(l.problem, d);
    } catch (const ShapeError& e) {
      err << "validation failure: " << e.what() << "\n";
      return static_cast<int>(kRefuted);
    }
    for (const auto& p : rep.derivatives.partials) {
      out << (p.passed ? "ok    " : "FAIL  ") << p.name << "  max rel error " << format_double(p.max_rel_error)
          << "\n";
    }
    for (const auto& nf : rep.derivatives.nonfinite) out << "non-finite value in " << nf.function << "\n";
    for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
    out << (rep.passed() ? "derivative check passed" : "derivative check FAILED") << "\n";
    return static_cast<int>(rep.passed() ? kOk : kRefuted);
  });
}

}  // namespace fbnash::cli
