#pragma once

#include "fbnash/cli/config.hpp"
#include "fbnash/oracles.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <ostream>

namespace fbnash::cli {

/// 17 significant digits, enough to round-trip a double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// JSON number, or null when not finite.
inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const Vec& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number_or_null(v[i]));
  return a;
}

inline json to_json(const SolveDiagnostics& d) {
  json h = json::array();
  for (double r : d.history) h.push_back(number_or_null(r));
  return {{"iterations", d.iterations},
          {"residual", number_or_null(d.residual)},
          {"converged", d.converged},
          {"ridge_fallbacks", d.ridge_fallbacks},
          {"history", h},
          {"warnings", d.warnings}};
}

inline json to_json(const Witness& w) {
  return {{"kind", w.kind},         {"player", w.player}, {"step", w.step},
          {"scenario", w.scenario}, {"t", w.t},           {"point", to_json(w.point)},
          {"other_point", to_json(w.other_point)},        {"violation", number_or_null(w.violation)}};
}

inline json to_json(const CheckResult& c) {
  json j = {{"applicable", c.applicable},
            {"passed", c.passed},
            {"worst", number_or_null(c.worst)},
            {"evaluations", c.evaluations}};
  if (c.witness) j["witness"] = to_json(*c.witness);
  if (!c.note.empty()) j["note"] = c.note;
  return j;
}

inline json to_json(const VerificationCertificate& c) {
  json players = json::array();
  for (const auto& p : c.players) {
    players.push_back({{"pointwise_min", to_json(p.pointwise_min)},
                       {"hamiltonian_convexity", to_json(p.hamiltonian_convexity)},
                       {"phi_convexity", to_json(p.phi_convexity)},
                       {"h_convexity", to_json(p.h_convexity)}});
  }
  json w = json::array();
  for (const auto& x : c.witnesses) w.push_back(to_json(x));
  return {{"verdict", to_string(c.verdict)},
          {"players", players},
          {"witnesses", w},
          {"optimality_convention", c.optimality_convention},
          {"player2_convention", c.player2_convention},
          {"endpoint_convention", c.endpoint_convention},
          {"notes", c.notes}};
}

inline json to_json(const ViResidualReport& v) {
  return {{"rho1", number_or_null(v.rho(1))},
          {"rho2", number_or_null(v.rho(2))},
          {"min_inner_product1", number_or_null(v.players[0].min_inner_product)},
          {"min_inner_product2", number_or_null(v.players[1].min_inner_product)},
          {"projection_step", 1.0}};
}

inline json metadata(const RunConfig& cfg, const std::string& command) {
  json m = {{"tool", "fbnash"},
            {"version", "1.0.0"},
            {"command", command},
            {"seed", cfg.seed},
            {"backend", cfg.backend.type},
            {"config", cfg.source}};
  m["generator"] = cfg.backend.type == "montecarlo" ? json(PathEnsemble::generator)
                                                    : json("binomial lattice (no random draws)");
  return m;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

namespace detail {

inline void append_names(std::vector<std::string>& cols, const std::string& prefix, Index n) {
  for (Index i = 1; i <= n; ++i) cols.push_back(prefix + std::to_string(i));
}

// Entries (r, c) of an r x c block flattened column-major, named row-major.
inline void append_matrix_names(std::vector<std::string>& cols, const std::string& prefix, Index rows,
                                Index ncols) {
  for (Index r = 1; r <= rows; ++r) {
    for (Index c = 1; c <= ncols; ++c) cols.push_back(prefix + std::to_string(r) + std::to_string(c));
  }
}

inline void append_values(std::string& line, const Layer* layer, Index s, Index size) {
  for (Index i = 0; i < size; ++i) {
    line += ',';
    if (layer != nullptr) line += format_double((*layer)(i, s));
  }
}

inline void append_matrix_values(std::string& line, const Layer* layer, Index s, Index rows,
                                 Index ncols) {
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < ncols; ++c) {
      line += ',';
      if (layer != nullptr) line += format_double((*layer)(c * rows + r, s));
    }
  }
}

}  // namespace detail

/// Trajectory table: one row per (step, scenario). Values undefined at step
/// N (z, u, q) are empty fields.
template <ScenarioBackend B>
std::string trajectory_csv(const Dims& dims, const B& backend, const StateTrajectory& st,
                           const ControlProcess& u, const AdjointTrajectory& a1,
                           const AdjointTrajectory& a2) {
  using namespace detail;
  const Index n = dims.n, m = dims.m, d = dims.d;
  std::vector<std::string> cols{"step", "t", "scenario_id"};
  append_names(cols, "x_", n);
  append_names(cols, "y_", m);
  append_matrix_names(cols, "z_", m, d);
  append_names(cols, "u1_", dims.k1);
  append_names(cols, "u2_", dims.k2);
  for (int i = 1; i <= 2; ++i) {
    const std::string id = std::to_string(i);
    append_names(cols, "k" + id + "_", m);
    append_names(cols, "p" + id + "_", n);
    append_matrix_names(cols, "q" + id + "_", n, d);
  }
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + cols[c];
  out += '\n';
  const int steps = backend.grid().steps;
  for (int j = 0; j <= steps; ++j) {
    const auto sj = static_cast<std::size_t>(j);
    const bool last = j == steps;
    for (Index s = 0; s < backend.scenarios(j); ++s) {
      std::string line = std::to_string(j) + "," + format_double(backend.grid().time(j)) + "," +
                         std::to_string(s);
      append_values(line, &st.x[sj], s, n);
      append_values(line, &st.y[sj], s, m);
      append_matrix_values(line, last ? nullptr : &st.z[sj], s, m, d);
      append_values(line, last ? nullptr : &u.u1[sj], s, dims.k1);
      append_values(line, last ? nullptr : &u.u2[sj], s, dims.k2);
      for (const AdjointTrajectory* a : {&a1, &a2}) {
        append_values(line, &a->k[sj], s, m);
        append_values(line, &a->p[sj], s, n);
        append_matrix_values(line, last ? nullptr : &a->q[sj], s, n, d);
      }
      out += line;
      out += '\n';
    }
  }
  return out;
}

inline std::string history_csv(const std::vector<IterationRecord>& history) {
  std::string out = "iteration,J1,J2,rho1,rho2,alpha\n";
  for (const auto& r : history) {
    out += std::to_string(r.iteration) + "," + format_double(r.J1) + "," + format_double(r.J2) +
           "," + format_double(r.rho1) + "," + format_double(r.rho2) + "," + format_double(r.alpha) +
           "\n";
  }
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

/// Reads controls from a CSV with columns step, scenario_id, u1_1..,
/// u2_1.. (other columns ignored, so a trajectory.csv can be reused). Every
/// (step < N, scenario) must appear; rows at step N are ignored. Any
/// mismatch throws ShapeError.
template <ScenarioBackend B>
ControlProcess read_controls_csv(const std::string& path, const Dims& dims, const B& backend) {
  std::ifstream in(path);
  if (!in) throw ShapeError(path + ": cannot open controls file");
  std::string line;
  if (!std::getline(in, line)) throw ShapeError(path + ": empty controls file");
  const auto header = detail::split_csv(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) index[header[c]] = c;
  auto column = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) throw ShapeError(path + ": missing column " + name);
    return it->second;
  };
  const std::size_t step_col = column("step"), scen_col = column("scenario_id");
  std::array<std::vector<std::size_t>, 2> ucols;
  for (int i = 1; i <= 2; ++i) {
    for (int c = 1; c <= dims.control(i); ++c) {
      ucols[static_cast<std::size_t>(i - 1)].push_back(
          column("u" + std::to_string(i) + "_" + std::to_string(c)));
    }
  }
  const int steps = backend.grid().steps;
  ControlProcess u;
  std::vector<std::vector<bool>> seen(static_cast<std::size_t>(steps));
  for (int j = 0; j < steps; ++j) {
    u.u1.push_back(Layer::Zero(dims.k1, backend.scenarios(j)));
    u.u2.push_back(Layer::Zero(dims.k2, backend.scenarios(j)));
    seen[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(backend.scenarios(j)), false);
  }
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    auto field = [&](std::size_t c) -> const std::string& {
      if (c >= f.size()) throw ShapeError(path + ": row " + std::to_string(row) + " is too short");
      return f[c];
    };
    auto parse = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw ShapeError(path + ": row " + std::to_string(row) + ": bad number '" + s + "'");
      }
    };
    const double jd = parse(field(step_col)), sd = parse(field(scen_col));
    const int j = static_cast<int>(jd);
    const auto s = static_cast<Index>(sd);
    if (j == steps) continue;
    if (jd != j || sd != static_cast<double>(s) || j < 0 || j > steps || s < 0 ||
        s >= backend.scenarios(j)) {
      throw ShapeError(path + ": row " + std::to_string(row) + ": (step, scenario) outside the grid");
    }
    for (int i = 1; i <= 2; ++i) {
      const auto& cols = ucols[static_cast<std::size_t>(i - 1)];
      for (std::size_t c = 0; c < cols.size(); ++c) {
        u.of(i)[static_cast<std::size_t>(j)](static_cast<Index>(c), s) = parse(field(cols[c]));
      }
    }
    seen[static_cast<std::size_t>(j)][static_cast<std::size_t>(s)] = true;
  }
  for (int j = 0; j < steps; ++j) {
    for (std::size_t s = 0; s < seen[static_cast<std::size_t>(j)].size(); ++s) {
      if (!seen[static_cast<std::size_t>(j)][s]) {
        throw ShapeError(path + ": no controls for step " + std::to_string(j) + ", scenario " +
                         std::to_string(s));
      }
    }
  }
  return u;
}

}  // namespace fbnash::cli
