#pragma once

#include "ncl/latent_model.hpp"
#include "ncl/reparam.hpp"
#include "ncl/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace ncl {

/// Value of a loss, its alignment/uniformity split where the loss has one,
/// and gradients with respect to each input group (order documented per
/// function; empty unless requested).
///
/// loss == alignment + uniformity + penalty whenever the split is present.
struct LossReport {
  double loss = 0.0;
  std::optional<double> alignment;
  std::optional<double> uniformity;
  double penalty = 0.0;
  std::vector<Matrix> grads;

  double grad_norm() const;
};

// ---- contrastive objectives -------------------------------------------------

/// Exact spectral contrastive loss
///   -2 sum P(x,x') f(x).f(x') + sum P(x)P(x') (f(x).f(x'))^2
/// from the raw co-occurrence matrix. grads = {d/df}. The same function is
/// the non-negative objective when f comes from a non-negative encoder.
LossReport spectral_loss_population(const Matrix& features, const Matrix& joint, const Vector& marginal,
                                    bool with_grad);
LossReport spectral_loss_population(const FeatureTable& features, const LatentClassModel& model,
                                    bool with_grad);

/// Mini-batch estimate: mean over pairs of -2 f(x).f(x+) plus mean over all
/// anchor x negative pairs of (f(x).f(x-))^2. `negative` may have zero rows.
/// grads = {anchor, positive, negative}.
LossReport spectral_loss_batch(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                               bool with_grad);

struct InfoNceOptions {
  double temperature = 1.0;
  bool cosine = false;
  /// Scale the negative sum by 1/M (mutual-information estimator form).
  bool mean_negatives = false;
};

/// Temperature-scaled SimCLR convention for cosine similarity.
inline constexpr double kCosineTemperature = 0.5;

/// InfoNCE with negatives shared by every anchor:
///   mean_b [ -s(b,b+) + log(exp s(b,b+) + sum_i exp s(b,i)) ].
/// alignment = mean -s(b,b+), uniformity = mean log-partition.
/// grads = {anchor, positive, negatives}.
LossReport infonce_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negatives,
                        const InfoNceOptions& options, bool with_grad);

// ---- factorization objectives ---------------------------------------------

/// || normalized - F F^T ||_F^2 with F = factor.weighted(); the factor must be
/// flagged and actually non-negative (NegativeEntry otherwise). grads = {d/dF}.
LossReport nmf_objective(const Matrix& normalized, const FeatureTable& factor, bool with_grad);
/// Same residual without the non-negativity requirement.
LossReport mf_objective(const Matrix& normalized, const FeatureTable& factor, bool with_grad);

/// sum_{x,x'} P(x,x')^2 / (P(x) P(x')), i.e. || A_bar ||_F^2.
double equivalence_constant(const LatentClassModel& model);
double equivalence_constant(const Matrix& joint, const Vector& p_left, const Vector& p_right);

/// base + lambda * E ||f(x)||_1, expectation weighted by `weights` when given,
/// else the row mean. Adds the subgradient (0 at exact zeros) to grads[0].
LossReport l1_regularized_loss(LossReport base, const Matrix& features, double lambda,
                               const Vector* weights = nullptr);

inline constexpr double kDefaultL1Lambda = 0.01;

// ---- two-view objectives ----------------------------------------------------

/// Exact two-view spectral loss; grads = {visual, language}.
LossReport mm_spectral_loss(const Matrix& visual, const Matrix& language, const TwoViewModel& model,
                            bool with_grad);
/// || A_bar_M - F_V F_L^T ||^2 on weighted factors; grads = {F_V, F_L}.
LossReport asymmetric_nmf_objective(const Matrix& normalized_joint, const Matrix& visual_factor,
                                    const Matrix& language_factor, bool with_grad, bool require_nonneg = true);
double mm_equivalence_constant(const TwoViewModel& model);

// ---- supervised objectives --------------------------------------------------

/// Mean cross-entropy of softmax(features * embeddings) (embeddings: k x C).
/// grads = {features, embeddings}.
LossReport ce_loss(const Matrix& features, const Matrix& embeddings, std::span<const int> labels,
                   bool with_grad);
/// Cross-entropy on sigma(features) * sigma(embeddings); gradients are with
/// respect to the untransformed inputs. grads = {features, embeddings}.
LossReport nce_loss(const Matrix& features, const Matrix& embeddings, std::span<const int> labels,
                    const NonNegTransform& transform, bool with_grad);

}  // namespace ncl
