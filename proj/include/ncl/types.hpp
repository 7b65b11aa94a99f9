#pragma once

#include <Eigen/Dense>

#include <optional>

namespace ncl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// An N x k table of per-sample feature rows f(x).
///
/// `weighting`, when present, holds sqrt(P(x)) per row; `weighted()` then
/// yields the factor F with rows sqrt(P(x)) f(x) used by the matrix
/// factorization view.
struct FeatureTable {
  Matrix values;
  bool nonneg = false;
  std::optional<Vector> weighting;

  FeatureTable() = default;
  explicit FeatureTable(Matrix v, bool nonneg_flag = false) : values(std::move(v)), nonneg(nonneg_flag) {}

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }

  Matrix weighted() const;

  /// True when nonneg is set and every entry is >= 0 (tolerance 0).
  bool satisfies_nonneg() const;

  /// Attaches sqrt(marginal) as the row weighting.
  FeatureTable& weight_by(const Vector& marginal);
};

}  // namespace ncl
