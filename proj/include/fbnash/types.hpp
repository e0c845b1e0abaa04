#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace fbnash {

using Index = Eigen::Index;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Values of one process at one time step: one column per scenario
/// (Monte Carlo path or lattice node).
using Layer = Eigen::MatrixXd;

/// A discretized process: one Layer per time step.
using Field = std::vector<Layer>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A function or matrix does not have the shape its role requires.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or malformed input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Enumeration or evaluation budget exceeded.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// A numerical solver failed (divergence, non-convergence where the caller
/// required convergence).
class SolverError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public SolverError {
 public:
  NonFiniteError(const std::string& what, int step, Index scenario)
      : SolverError(what + " (step " + std::to_string(step) + ", scenario " +
                    std::to_string(scenario) + ")"),
        step_(step),
        scenario_(scenario) {}

  int step() const { return step_; }
  Index scenario() const { return scenario_; }

 private:
  int step_;
  Index scenario_;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

/// Weighted mean of the columns of `layer`.
inline Vec weighted_mean(const Layer& layer, const Vec& weights) {
  return layer * weights;
}

}  // namespace fbnash
