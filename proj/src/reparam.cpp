#include "ncl/reparam.hpp"

#include "ncl/error.hpp"

#include <cmath>
#include <numbers>

namespace ncl {

NonNegTransform parse_transform(std::string_view name) {
  if (name == "relu") return {TransformKind::Relu};
  if (name == "softplus") return {TransformKind::Softplus};
  if (name == "sigmoid") return {TransformKind::Sigmoid};
  if (name == "relu_gelu_backward" || name == "relu_forward_gelu_backward")
    return {TransformKind::ReluForwardGeluBackward};
  fail(Errc::ConfigInvalid, "unknown transform kind '" + std::string(name) + "'");
}

std::string transform_name(const NonNegTransform& t) {
  switch (t.kind) {
    case TransformKind::Relu: return "relu";
    case TransformKind::Softplus: return "softplus";
    case TransformKind::Sigmoid: return "sigmoid";
    case TransformKind::ReluForwardGeluBackward: return "relu_gelu_backward";
  }
  return "relu";
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double gelu(double z) { return z * normal_cdf(z); }

double gelu_derivative(double z) { return normal_cdf(z) + z * normal_pdf(z); }

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_finite(double z) {
  if (!std::isfinite(z)) fail(Errc::NonFiniteInput, "transform input is not finite");
}

}  // namespace

double forward(const NonNegTransform& t, double z) {
  switch (t.kind) {
    case TransformKind::Relu:
    case TransformKind::ReluForwardGeluBackward: return z > 0.0 ? z : 0.0;
    case TransformKind::Softplus: return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    case TransformKind::Sigmoid: return sigmoid(z);
  }
  return 0.0;
}

double derivative(const NonNegTransform& t, double z) {
  switch (t.kind) {
    case TransformKind::Relu: return z > 0.0 ? 1.0 : 0.0;
    case TransformKind::ReluForwardGeluBackward: return gelu_derivative(z);
    case TransformKind::Softplus: return sigmoid(z);
    case TransformKind::Sigmoid: {
      const double s = sigmoid(z);
      return s * (1.0 - s);
    }
  }
  return 0.0;
}

std::vector<double> forward(const NonNegTransform& t, std::span<const double> z) {
  std::vector<double> out(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    check_finite(z[i]);
    out[i] = forward(t, z[i]);
  }
  return out;
}

std::vector<double> backward(const NonNegTransform& t, std::span<const double> z,
                             std::span<const double> upstream) {
  require(z.size() == upstream.size(), Errc::ShapeMismatch, "upstream size differs from input");
  std::vector<double> out(z.size());
  for (size_t i = 0; i < z.size(); ++i) {
    check_finite(z[i]);
    out[i] = upstream[i] * derivative(t, z[i]);
  }
  return out;
}

Matrix forward(const NonNegTransform& t, const Matrix& z) {
  require(z.allFinite(), Errc::NonFiniteInput, "transform input is not finite");
  return z.unaryExpr([&](double v) { return forward(t, v); });
}

Matrix backward(const NonNegTransform& t, const Matrix& z, const Matrix& upstream) {
  require(z.rows() == upstream.rows() && z.cols() == upstream.cols(), Errc::ShapeMismatch,
          "upstream shape differs from input");
  require(z.allFinite(), Errc::NonFiniteInput, "transform input is not finite");
  return upstream.cwiseProduct(z.unaryExpr([&](double v) { return derivative(t, v); }));
}

}  // namespace ncl
