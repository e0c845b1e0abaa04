#pragma once

#include "fbnash/equilibrium.hpp"
#include "fbnash/lq.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>

namespace fbnash::cli {

using json = nlohmann::json;

struct BackendConfig {
  std::string type = "lattice";  // lattice | montecarlo
  int N = 32;
  Index P = 10000;
  int degree = 2;
};

struct VerifyConfig {
  int grid_density = 11;
  std::optional<double> radius;
  double tolerance = 1e-8;
  int convexity_samples = 1000;
  double convexity_radius = 1.0;
  double endpoint_radius = 10.0;
};

struct OracleConfig {
  int grid_points = 5;
  double budget = 1e6;
  std::optional<double> radius;
  int max_rounds = 100;
  bool riccati = false;
};

struct CheckConfig {
  int samples = 100;
  double radius = 10.0;
  double tolerance = 1e-5;
};

struct RunConfig {
  LQGameSpec problem;
  BackendConfig backend;
  FbsdeConfig fbsde;
  GradientConfig gradient;
  VerifyConfig verify;
  OracleConfig oracle;
  CheckConfig check;
  std::uint64_t seed = 1;
  std::string debug_corrupt_derivative;  // test hook: "b_x" perturbs the claimed b_x
  json source;                           // parsed document, echoed in reports
};

namespace detail {

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path + ": expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items()) {
    if (!keys.count(k)) throw ConfigError(join(path, k) + ": unknown field");
  }
}

inline double number(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw ConfigError(path + ": expected a number");
}

inline double finite_number(const json& v, const std::string& path) {
  const double x = number(v, path);
  if (!std::isfinite(x)) throw ConfigError(path + ": expected a finite number");
  return x;
}

inline long long integer(const json& v, const std::string& path, long long lo, long long hi) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  const auto x = v.get<long long>();
  if (x < lo || x > hi) {
    throw ConfigError(path + ": must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  return x;
}

inline double positive(const json& v, const std::string& path) {
  const double x = finite_number(v, path);
  if (!(x > 0.0)) throw ConfigError(path + ": must be positive");
  return x;
}

inline Vec vector(const json& v, const std::string& path, bool allow_inf = false) {
  if (v.is_number() && !allow_inf) return Vec::Constant(1, v.get<double>());
  if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vec out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    out[static_cast<Index>(i)] = allow_inf ? number(v[i], p) : finite_number(v[i], p);
  }
  return out;
}

// Row-major array of rows; a bare number is a 1x1 matrix.
inline Mat matrix(const json& v, const std::string& path) {
  if (v.is_number()) return Mat::Constant(1, 1, v.get<double>());
  if (!v.is_array()) throw ConfigError(path + ": expected an array of rows");
  if (v.empty()) return Mat(0, 0);
  const std::size_t cols = v[0].is_array() ? v[0].size() : 0;
  Mat out(static_cast<Index>(v.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < v.size(); ++r) {
    const std::string rp = path + "[" + std::to_string(r) + "]";
    if (!v[r].is_array() || v[r].size() != cols) {
      throw ConfigError(rp + ": rows must be arrays of equal length");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      out(static_cast<Index>(r), static_cast<Index>(c)) =
          finite_number(v[r][c], rp + "[" + std::to_string(c) + "]");
    }
  }
  return out;
}

inline void read_affine(const json& obj, const std::string& path, AffineMap& map) {
  reject_unknown(obj, path, {"A", "B", "C", "D1", "D2", "e", "e_t"});
  if (obj.contains("A")) map.A = matrix(obj["A"], path + ".A");
  if (obj.contains("B")) map.B = matrix(obj["B"], path + ".B");
  if (obj.contains("C")) map.C = matrix(obj["C"], path + ".C");
  if (obj.contains("D1")) map.D1 = matrix(obj["D1"], path + ".D1");
  if (obj.contains("D2")) map.D2 = matrix(obj["D2"], path + ".D2");
  if (obj.contains("e")) map.e = vector(obj["e"], path + ".e");
  if (obj.contains("e_t")) map.e_t = vector(obj["e_t"], path + ".e_t");
}

inline void read_cost(const json& obj, const std::string& path, QuadraticCost& c) {
  reject_unknown(obj, path, {"Q", "R", "S", "N", "M", "G", "H"});
  if (obj.contains("Q")) c.Q = matrix(obj["Q"], path + ".Q");
  if (obj.contains("R")) c.R = matrix(obj["R"], path + ".R");
  if (obj.contains("S")) c.S = finite_number(obj["S"], path + ".S");
  if (obj.contains("N")) c.N = matrix(obj["N"], path + ".N");
  if (obj.contains("M")) c.M = matrix(obj["M"], path + ".M");
  if (obj.contains("G")) c.G = matrix(obj["G"], path + ".G");
  if (obj.contains("H")) c.H = matrix(obj["H"], path + ".H");
}

inline ControlBox read_box(const json& obj, const std::string& path, int k) {
  reject_unknown(obj, path, {"lower", "upper"});
  ControlBox box = ControlBox::unbounded(k);
  auto side = [&](const char* key, Vec& out) {
    if (!obj.contains(key)) return;
    const json& v = obj[key];
    const std::string p = path + "." + key;
    out = v.is_array() ? vector(v, p, true) : Vec::Constant(k, number(v, p));
  };
  side("lower", box.lower);
  side("upper", box.upper);
  return box;
}

inline LQGameSpec read_problem(const json& obj, const std::string& path) {
  reject_unknown(obj, path,
                 {"dims", "T", "a", "xi", "b", "sigma", "f", "costs", "u1_box", "u2_box", "convex"});
  if (!obj.contains("dims")) throw ConfigError(path + ".dims: required");
  const json& jd = obj["dims"];
  const std::string dp = path + ".dims";
  reject_unknown(jd, dp, {"n", "m", "d", "k1", "k2"});
  Dims dims;
  auto dim = [&](const char* key, int& out, long long lo) {
    if (jd.contains(key)) out = static_cast<int>(integer(jd[key], dp + "." + key, lo, 1000));
  };
  dim("n", dims.n, 1);
  dim("m", dims.m, 1);
  dim("d", dims.d, 1);
  dim("k1", dims.k1, 0);
  dim("k2", dims.k2, 0);

  LQGameSpec spec = LQGameSpec::zeros(dims);
  if (obj.contains("T")) spec.horizon = positive(obj["T"], path + ".T");
  if (obj.contains("a")) spec.initial_state = vector(obj["a"], path + ".a");
  if (obj.contains("xi")) spec.xi = vector(obj["xi"], path + ".xi");
  if (obj.contains("b")) read_affine(obj["b"], path + ".b", spec.drift);
  if (obj.contains("f")) read_affine(obj["f"], path + ".f", spec.generator);
  if (obj.contains("sigma")) {
    const json& js = obj["sigma"];
    if (!js.is_array()) throw ConfigError(path + ".sigma: expected an array with one map per Brownian column");
    spec.diffusion.assign(js.size(), AffineMap::zero(dims.n, dims));
    for (std::size_t c = 0; c < js.size(); ++c) {
      read_affine(js[c], path + ".sigma[" + std::to_string(c) + "]", spec.diffusion[c]);
    }
  }
  if (obj.contains("costs")) {
    const json& jc = obj["costs"];
    if (!jc.is_array() || jc.size() != 2) throw ConfigError(path + ".costs: expected two cost objects");
    for (std::size_t i = 0; i < 2; ++i) {
      read_cost(jc[i], path + ".costs[" + std::to_string(i) + "]", spec.costs[i]);
    }
  }
  if (obj.contains("u1_box")) spec.u1_box = read_box(obj["u1_box"], path + ".u1_box", dims.k1);
  if (obj.contains("u2_box")) spec.u2_box = read_box(obj["u2_box"], path + ".u2_box", dims.k2);
  if (obj.contains("convex")) {
    if (!obj["convex"].is_boolean()) throw ConfigError(path + ".convex: expected true or false");
    spec.convex = obj["convex"].get<bool>();
  }
  return spec;
}

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace detail

/// Parses a JSON run configuration. Unknown fields, wrong types and
/// out-of-range values throw ConfigError naming the field path; syntax
/// errors name the line. The LQ problem is validated by lq_to_problem.
inline RunConfig parse_config(const std::string& text) {
  using namespace detail;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("line " + std::to_string(line_of(text, e.byte == 0 ? 0 : e.byte - 1)) +
                      ": " + e.what());
  }
  reject_unknown(doc, "", {"problem", "backend", "fbsde", "gradient", "verify", "oracle", "check",
                           "seed", "debug_corrupt_derivative"});
  RunConfig cfg;
  cfg.source = doc;
  if (!doc.contains("problem")) throw ConfigError("problem: required");
  cfg.problem = read_problem(doc["problem"], "problem");

  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned()) throw ConfigError("seed: expected a non-negative integer");
    cfg.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("backend")) {
    const json& b = doc["backend"];
    reject_unknown(b, "backend", {"type", "N", "P", "degree"});
    if (b.contains("type")) {
      if (!b["type"].is_string()) throw ConfigError("backend.type: expected a string");
      cfg.backend.type = b["type"].get<std::string>();
      if (cfg.backend.type != "lattice" && cfg.backend.type != "montecarlo") {
        throw ConfigError("backend.type: must be \"lattice\" or \"montecarlo\"");
      }
    }
    if (b.contains("N")) cfg.backend.N = static_cast<int>(integer(b["N"], "backend.N", 1, 100000));
    if (b.contains("P")) cfg.backend.P = static_cast<Index>(integer(b["P"], "backend.P", 1, 100000000));
    if (b.contains("degree")) cfg.backend.degree = static_cast<int>(integer(b["degree"], "backend.degree", 1, 4));
  }
  if (doc.contains("fbsde")) {
    const json& f = doc["fbsde"];
    reject_unknown(f, "fbsde", {"max_picard", "damping", "tol"});
    if (f.contains("max_picard")) cfg.fbsde.max_picard = static_cast<int>(integer(f["max_picard"], "fbsde.max_picard", 1, 1000000));
    if (f.contains("damping")) {
      cfg.fbsde.damping = positive(f["damping"], "fbsde.damping");
      if (cfg.fbsde.damping > 1.0) throw ConfigError("fbsde.damping: must be in (0, 1]");
    }
    if (f.contains("tol")) cfg.fbsde.tol = positive(f["tol"], "fbsde.tol");
  }
  if (doc.contains("gradient")) {
    const json& g = doc["gradient"];
    reject_unknown(g, "gradient", {"step", "max_iter", "tol", "mode", "max_halvings", "sweep_inner"});
    if (g.contains("step")) cfg.gradient.step = positive(g["step"], "gradient.step");
    if (g.contains("max_iter")) cfg.gradient.max_iter = static_cast<int>(integer(g["max_iter"], "gradient.max_iter", 1, 10000000));
    if (g.contains("tol")) cfg.gradient.tol = positive(g["tol"], "gradient.tol");
    if (g.contains("max_halvings")) cfg.gradient.max_halvings = static_cast<int>(integer(g["max_halvings"], "gradient.max_halvings", 0, 60));
    if (g.contains("sweep_inner")) cfg.gradient.sweep_inner = static_cast<int>(integer(g["sweep_inner"], "gradient.sweep_inner", 1, 100000));
    if (g.contains("mode")) {
      const auto m = g["mode"].is_string() ? g["mode"].get<std::string>() : std::string();
      if (m == "simultaneous") {
        cfg.gradient.mode = UpdateMode::Simultaneous;
      } else if (m == "best-response-sweep") {
        cfg.gradient.mode = UpdateMode::BestResponseSweep;
      } else {
        throw ConfigError("gradient.mode: must be \"simultaneous\" or \"best-response-sweep\"");
      }
    }
  }
  if (doc.contains("verify")) {
    const json& v = doc["verify"];
    reject_unknown(v, "verify", {"grid_density", "radius", "tolerance", "convexity_samples",
                                 "convexity_radius", "endpoint_radius"});
    if (v.contains("grid_density")) cfg.verify.grid_density = static_cast<int>(integer(v["grid_density"], "verify.grid_density", 1, 100000));
    if (v.contains("radius")) cfg.verify.radius = positive(v["radius"], "verify.radius");
    if (v.contains("tolerance")) cfg.verify.tolerance = positive(v["tolerance"], "verify.tolerance");
    if (v.contains("convexity_samples")) cfg.verify.convexity_samples = static_cast<int>(integer(v["convexity_samples"], "verify.convexity_samples", 1, 100000000));
    if (v.contains("convexity_radius")) cfg.verify.convexity_radius = positive(v["convexity_radius"], "verify.convexity_radius");
    if (v.contains("endpoint_radius")) cfg.verify.endpoint_radius = positive(v["endpoint_radius"], "verify.endpoint_radius");
  }
  if (doc.contains("oracle")) {
    const json& o = doc["oracle"];
    reject_unknown(o, "oracle", {"grid_points", "budget", "radius", "max_rounds", "riccati"});
    if (o.contains("grid_points")) cfg.oracle.grid_points = static_cast<int>(integer(o["grid_points"], "oracle.grid_points", 1, 1000));
    if (o.contains("budget")) cfg.oracle.budget = positive(o["budget"], "oracle.budget");
    if (o.contains("radius")) cfg.oracle.radius = positive(o["radius"], "oracle.radius");
    if (o.contains("max_rounds")) cfg.oracle.max_rounds = static_cast<int>(integer(o["max_rounds"], "oracle.max_rounds", 1, 1000000));
    if (o.contains("riccati")) {
      if (!o["riccati"].is_boolean()) throw ConfigError("oracle.riccati: expected true or false");
      cfg.oracle.riccati = o["riccati"].get<bool>();
    }
  }
  if (doc.contains("check")) {
    const json& c = doc["check"];
    reject_unknown(c, "check", {"samples", "radius", "tolerance"});
    if (c.contains("samples")) cfg.check.samples = static_cast<int>(integer(c["samples"], "check.samples", 1, 100000000));
    if (c.contains("radius")) cfg.check.radius = positive(c["radius"], "check.radius");
    if (c.contains("tolerance")) cfg.check.tolerance = positive(c["tolerance"], "check.tolerance");
  }
  if (doc.contains("debug_corrupt_derivative")) {
    const json& d = doc["debug_corrupt_derivative"];
    if (!d.is_string() || d.get<std::string>() != "b_x") {
      throw ConfigError("debug_corrupt_derivative: only \"b_x\" is supported");
    }
    cfg.debug_corrupt_derivative = d.get<std::string>();
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Builds the GameProblem of a config, prefixing shape errors with
/// "problem.".
inline GameProblem make_problem(const RunConfig& cfg) {
  GameProblem p;
  try {
    p = lq_to_problem(cfg.problem);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("problem.") + e.what());
  }
  if (cfg.debug_corrupt_derivative == "b_x") {
    auto drift = p.coeffs.drift;
    p.coeffs.drift = [drift](const Point& pt, VectorJet& j) {
      drift(pt, j);
      j.dx.array() += 1.0;
    };
  }
  return p;
}

}  // namespace fbnash::cli
