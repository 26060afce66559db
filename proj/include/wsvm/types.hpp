#pragma once

#include <Eigen/Dense>

#include <vector>

namespace wsvm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Training data: one row per sample, labels in {-1, +1}.
struct Dataset {
  Matrix features;  // n x p
  Vector labels;    // n

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  // Throws std::invalid_argument on non-finite features, labels outside
  // {-1, +1}, or mismatched sizes. `require_both_classes` additionally
  // demands at least one sample per class (any training operation).
  void validate(bool require_both_classes = false) const;

  Dataset select_columns(const std::vector<int>& columns) const;
  Dataset select_rows(const std::vector<int>& rows) const;
};

enum class FitMethod { L2, L1Select, ENPrimal, ENDual };

/// Affine decision rule f(x) = intercept + coefficients . x with the
/// training weight and regularization it was fitted under.
struct LinearModel {
  double intercept = 0.0;
  Vector coefficients;
  double weight = 0.5;  // class -1 weight pi at training time
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  FitMethod method = FitMethod::L2;

  Eigen::Index dim() const { return coefficients.size(); }
};

/// Per-variable keep/drop decision from one selection fit.
struct SelectionIndicator {
  std::vector<bool> mask;
  double threshold_used = 0.0;

  int count() const {
    int c = 0;
    for (bool b : mask) c += b ? 1 : 0;
    return c;
  }
};

}  // namespace wsvm
