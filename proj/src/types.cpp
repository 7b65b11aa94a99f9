#include "ncl/types.hpp"

#include "ncl/error.hpp"

namespace ncl {

Matrix FeatureTable::weighted() const {
  if (!weighting) return values;
  require(weighting->size() == values.rows(), Errc::DimensionMismatch,
          "weighting length does not match feature rows");
  return weighting->asDiagonal() * values;
}

bool FeatureTable::satisfies_nonneg() const {
  return nonneg && (values.size() == 0 || values.minCoeff() >= 0.0);
}

FeatureTable& FeatureTable::weight_by(const Vector& marginal) {
  require(marginal.size() == values.rows(), Errc::DimensionMismatch,
          "marginal length does not match feature rows");
  weighting = marginal.cwiseSqrt();
  return *this;
}

}  // namespace ncl
