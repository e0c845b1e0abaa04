#pragma once

#include "fbnash/types.hpp"

#include <cmath>
#include <vector>

namespace fbnash {

/// Least-squares projection onto monomials (up to a total degree) of the
/// regressor rows. Regressors are standardized first and rows with no
/// spread are dropped, so a constant regressor set reduces to the sample
/// mean. If the design is still rank deficient, the fit falls back to ridge
/// normal equations (intercept unpenalized) and reports it.
class PolynomialRegression {
 public:
  PolynomialRegression(const Mat& regressors, int degree, double ridge = 1e-8) {
    if (degree < 1 || degree > 4) throw ConfigError("regression degree must be in 1..4");
    const Index samples = regressors.cols();
    if (samples < 1) throw ConfigError("regression needs at least one sample");

    std::vector<Vec> standardized;
    for (Index r = 0; r < regressors.rows(); ++r) {
      const auto row = regressors.row(r);
      const double mean = row.mean();
      const double var = (row.array() - mean).square().mean();
      const double sd = std::sqrt(var);
      if (sd > 1e-12 * (1.0 + std::abs(mean))) {
        standardized.emplace_back((row.array() - mean).matrix().transpose() / sd);
      }
    }

    std::vector<std::vector<int>> exponents;
    std::vector<int> current(standardized.size(), 0);
    enumerate(exponents, current, 0, degree);

    design_.resize(samples, static_cast<Index>(exponents.size()));
    for (std::size_t b = 0; b < exponents.size(); ++b) {
      Vec col = Vec::Ones(samples);
      for (std::size_t r = 0; r < standardized.size(); ++r) {
        for (int e = 0; e < exponents[b][r]; ++e) col.array() *= standardized[r].array();
      }
      design_.col(static_cast<Index>(b)) = col;
    }

    qr_.compute(design_);
    qr_.setThreshold(1e-10);
    if (qr_.rank() < design_.cols()) {
      ridge_used_ = true;
      Mat gram = design_.transpose() * design_ / static_cast<double>(samples);
      gram.diagonal().tail(gram.cols() - 1).array() += ridge;  // intercept unpenalized
      ridge_solver_.compute(gram);
    }
  }

  /// Fitted values of each target column (targets: samples x q).
  Mat fit(const Mat& targets) const {
    return design_ * coefficients(targets);
  }

  Mat coefficients(const Mat& targets) const {
    if (!ridge_used_) return qr_.solve(targets);
    return ridge_solver_.solve(design_.transpose() * targets /
                               static_cast<double>(design_.rows()));
  }

  bool ridge_used() const { return ridge_used_; }
  Index basis_size() const { return design_.cols(); }

 private:
  static void enumerate(std::vector<std::vector<int>>& out, std::vector<int>& current,
                        std::size_t pos, int remaining) {
    if (pos == current.size()) {
      out.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current[pos] = e;
      enumerate(out, current, pos + 1, remaining - e);
    }
    current[pos] = 0;
  }

  Mat design_;
  Eigen::ColPivHouseholderQR<Mat> qr_;
  Eigen::LDLT<Mat> ridge_solver_;
  bool ridge_used_ = false;
};

}  // namespace fbnash
