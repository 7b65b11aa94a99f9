#pragma once

#include "ncl/types.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ncl {

/// Non-negative output maps sigma_+. `ReluForwardGeluBackward` forwards as
/// ReLU but back-propagates the exact GELU derivative.
enum class TransformKind { Relu, Softplus, Sigmoid, ReluForwardGeluBackward };

struct NonNegTransform {
  TransformKind kind = TransformKind::Relu;
};

/// Config-file spelling: relu, softplus, sigmoid, relu_gelu_backward.
/// Throws ConfigInvalid for anything else.
NonNegTransform parse_transform(std::string_view name);
std::string transform_name(const NonNegTransform& t);

double normal_cdf(double z);
double normal_pdf(double z);
/// Exact GELU z * Phi(z).
double gelu(double z);
/// Phi(z) + z * phi(z).
double gelu_derivative(double z);

double forward(const NonNegTransform& t, double z);
/// d forward / dz, except for the straight-through kind which returns GELU'(z).
double derivative(const NonNegTransform& t, double z);

/// Elementwise forms. Throw NonFiniteInput on NaN/inf input.
std::vector<double> forward(const NonNegTransform& t, std::span<const double> z);
std::vector<double> backward(const NonNegTransform& t, std::span<const double> z,
                             std::span<const double> upstream);

Matrix forward(const NonNegTransform& t, const Matrix& z);
Matrix backward(const NonNegTransform& t, const Matrix& z, const Matrix& upstream);

}  // namespace ncl
