#include "ncl/objectives.hpp"

#include "ncl/error.hpp"
#include "ncl/kernels.hpp"

#include <cmath>

namespace ncl {

double LossReport::grad_norm() const {
  double sq = 0.0;
  for (const auto& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), Errc::DimensionMismatch, what);
}

LossReport from_bilinear(kernels::BilinearTerms t) {
  LossReport r;
  r.alignment = t.alignment;
  r.uniformity = t.uniformity;
  r.loss = t.alignment + t.uniformity;
  return r;
}

}  // namespace

LossReport spectral_loss_population(const Matrix& features, const Matrix& joint, const Vector& marginal,
                                    bool with_grad) {
  require(features.rows() == joint.rows() && joint.rows() == joint.cols() && marginal.size() == joint.rows(),
          Errc::DimensionMismatch, "features, co-occurrence and marginal disagree on N");
  auto terms = kernels::parallel::bilinear_spectral(features, features, joint, marginal, marginal, with_grad);
  LossReport r = from_bilinear(terms);
  // f appears on both sides of the symmetric form.
  if (with_grad) r.grads.push_back(terms.grad_left + terms.grad_right);
  return r;
}

LossReport spectral_loss_population(const FeatureTable& features, const LatentClassModel& model, bool with_grad) {
  return spectral_loss_population(features.values, cooccurrence(model).raw, model.marginal(), with_grad);
}

LossReport spectral_loss_batch(const Matrix& anchor, const Matrix& positive, const Matrix& negative,
                               bool with_grad) {
  require(anchor.rows() > 0, Errc::EmptyBatch, "batch has no pairs");
  require_same_shape(anchor, positive, "anchor and positive batches differ in shape");
  require(negative.rows() == 0 || negative.cols() == anchor.cols(), Errc::DimensionMismatch,
          "negative feature width differs");
  const double b = static_cast<double>(anchor.rows());

  LossReport r;
  const Vector pos_dot = anchor.cwiseProduct(positive).rowwise().sum();
  r.alignment = -2.0 * pos_dot.sum() / b;
  double unif = 0.0;
  Matrix s;
  if (negative.rows() > 0) {
    s = anchor * negative.transpose();
    unif = s.array().square().sum() / (b * static_cast<double>(negative.rows()));
  }
  r.uniformity = unif;
  r.loss = *r.alignment + unif;

  if (with_grad) {
    Matrix ga = -2.0 / b * positive;
    Matrix gp = -2.0 / b * anchor;
    Matrix gn = Matrix::Zero(negative.rows(), anchor.cols());
    if (negative.rows() > 0) {
      const double scale = 2.0 / (b * static_cast<double>(negative.rows()));
      ga += scale * s * negative;
      gn = scale * s.transpose() * anchor;
    }
    r.grads = {std::move(ga), std::move(gp), std::move(gn)};
  }
  return r;
}

namespace {

struct Normalized {
  Matrix unit;
  Vector norm;
};

Normalized normalize_rows(const Matrix& m, const char* name) {
  Normalized out{m, m.rowwise().norm()};
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    require(out.norm[i] > 0.0, Errc::ZeroNormFeature, std::string(name) + " row " + std::to_string(i) + " has zero norm");
    out.unit.row(i) /= out.norm[i];
  }
  return out;
}

// Back-propagates d/d(unit rows) through row normalization.
Matrix unnormalize_grad(const Normalized& n, const Matrix& grad_unit) {
  Matrix g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    const double proj = n.unit.row(i).dot(grad_unit.row(i));
    g.row(i) = (grad_unit.row(i) - proj * n.unit.row(i)) / n.norm[i];
  }
  return g;
}

}  // namespace

LossReport infonce_loss(const Matrix& anchor, const Matrix& positive, const Matrix& negatives,
                        const InfoNceOptions& options, bool with_grad) {
  require(anchor.rows() > 0, Errc::EmptyBatch, "batch has no pairs");
  require(negatives.rows() > 0, Errc::EmptyNegatives, "InfoNCE needs at least one negative");
  require(options.temperature > 0.0, Errc::ConfigInvalid, "temperature must be > 0");
  require_same_shape(anchor, positive, "anchor and positive batches differ in shape");
  require(negatives.cols() == anchor.cols(), Errc::DimensionMismatch, "negative feature width differs");

  Normalized na, np, nn;
  const Matrix* a = &anchor;
  const Matrix* p = &positive;
  const Matrix* n = &negatives;
  if (options.cosine) {
    na = normalize_rows(anchor, "anchor");
    np = normalize_rows(positive, "positive");
    nn = normalize_rows(negatives, "negative");
    a = &na.unit;
    p = &np.unit;
    n = &nn.unit;
  }

  const Eigen::Index b = anchor.rows(), m = negatives.rows();
  const double inv_t = 1.0 / options.temperature;
  const double neg_weight = options.mean_negatives ? 1.0 / static_cast<double>(m) : 1.0;
  const Vector s_pos = a->cwiseProduct(*p).rowwise().sum() * inv_t;
  const Matrix s_neg = (*a) * n->transpose() * inv_t;

  double align = 0.0, unif = 0.0;
  Vector d_pos(b);
  Matrix d_neg(b, m);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double top = std::max(s_pos[i], s_neg.row(i).maxCoeff());
    const double e_pos = std::exp(s_pos[i] - top);
    const Eigen::RowVectorXd e_neg = neg_weight * (s_neg.row(i).array() - top).exp().matrix();
    const double z = e_pos + e_neg.sum();
    align += -s_pos[i];
    unif += top + std::log(z);
    d_pos[i] = -1.0 + e_pos / z;
    d_neg.row(i) = e_neg / z;
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  LossReport r;
  r.alignment = align * inv_b;
  r.uniformity = unif * inv_b;
  r.loss = *r.alignment + *r.uniformity;

  if (with_grad) {
    // Gradients with respect to the (possibly normalized) rows.
    const Vector dp = d_pos * (inv_t * inv_b);
    const Matrix dn = d_neg * (inv_t * inv_b);
    Matrix ga = dp.asDiagonal() * (*p) + dn * (*n);
    Matrix gp = dp.asDiagonal() * (*a);
    Matrix gn = dn.transpose() * (*a);
    if (options.cosine) {
      ga = unnormalize_grad(na, ga);
      gp = unnormalize_grad(np, gp);
      gn = unnormalize_grad(nn, gn);
    }
    r.grads = {std::move(ga), std::move(gp), std::move(gn)};
  }
  return r;
}

namespace {

LossReport factor_objective(const Matrix& normalized, const Matrix& f, bool with_grad) {
  require(normalized.rows() == normalized.cols() && f.rows() == normalized.rows(), Errc::DimensionMismatch,
          "factor rows do not match the co-occurrence matrix");
  auto t = kernels::parallel::factor_residual(normalized, f, f, with_grad);
  LossReport r;
  r.loss = t.residual;
  if (with_grad) r.grads.push_back(t.grad_left + t.grad_right);
  return r;
}

}  // namespace

LossReport nmf_objective(const Matrix& normalized, const FeatureTable& factor, bool with_grad) {
  require(factor.nonneg, Errc::NegativeEntry, "NMF factor is not flagged non-negative");
  const Matrix f = factor.weighted();
  require(f.size() == 0 || f.minCoeff() >= 0.0, Errc::NegativeEntry, "NMF factor has a negative entry");
  return factor_objective(normalized, f, with_grad);
}

LossReport mf_objective(const Matrix& normalized, const FeatureTable& factor, bool with_grad) {
  return factor_objective(normalized, factor.weighted(), with_grad);
}

double equivalence_constant(const Matrix& joint, const Vector& p_left, const Vector& p_right) {
  require(joint.rows() == p_left.size() && joint.cols() == p_right.size(), Errc::DimensionMismatch,
          "joint does not match marginals");
  double c = 0.0;
  for (Eigen::Index a = 0; a < joint.rows(); ++a)
    for (Eigen::Index b = 0; b < joint.cols(); ++b) c += joint(a, b) * joint(a, b) / (p_left[a] * p_right[b]);
  return c;
}

double equivalence_constant(const LatentClassModel& model) {
  return equivalence_constant(cooccurrence(model).raw, model.marginal(), model.marginal());
}

LossReport l1_regularized_loss(LossReport base, const Matrix& features, double lambda, const Vector* weights) {
  require(lambda >= 0.0, Errc::ConfigInvalid, "l1 lambda must be >= 0");
  Vector w;
  if (weights) {
    require(weights->size() == features.rows(), Errc::DimensionMismatch, "l1 weights length differs");
    w = *weights;
  } else {
    w = Vector::Constant(features.rows(), features.rows() > 0 ? 1.0 / static_cast<double>(features.rows()) : 0.0);
  }
  const Vector row_l1 = features.cwiseAbs().rowwise().sum();
  const double penalty = lambda * w.dot(row_l1);
  base.penalty += penalty;
  base.loss += penalty;
  if (!base.grads.empty() && lambda > 0.0) {
    require(base.grads[0].rows() == features.rows() && base.grads[0].cols() == features.cols(),
            Errc::DimensionMismatch, "l1 features do not match the base gradient");
    const Matrix sign = features.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    base.grads[0] += lambda * (w.asDiagonal() * sign);
  }
  return base;
}

LossReport mm_spectral_loss(const Matrix& visual, const Matrix& language, const TwoViewModel& model,
                            bool with_grad) {
  require(visual.rows() == model.joint().rows() && language.rows() == model.joint().cols(),
          Errc::DimensionMismatch, "view features do not match the two-view model");
  require(visual.cols() == language.cols(), Errc::DimensionMismatch, "views have different feature widths");
  auto t = kernels::parallel::bilinear_spectral(visual, language, model.joint(), model.visual().marginal(),
                                                model.language().marginal(), with_grad);
  LossReport r = from_bilinear(t);
  if (with_grad) r.grads = {std::move(t.grad_left), std::move(t.grad_right)};
  return r;
}

LossReport asymmetric_nmf_objective(const Matrix& normalized_joint, const Matrix& visual_factor,
                                    const Matrix& language_factor, bool with_grad, bool require_nonneg) {
  require(visual_factor.rows() == normalized_joint.rows() && language_factor.rows() == normalized_joint.cols() &&
              visual_factor.cols() == language_factor.cols(),
          Errc::DimensionMismatch, "factors do not match the two-view co-occurrence");
  if (require_nonneg) {
    require(visual_factor.size() == 0 || visual_factor.minCoeff() >= 0.0, Errc::NegativeEntry,
            "visual factor has a negative entry");
    require(language_factor.size() == 0 || language_factor.minCoeff() >= 0.0, Errc::NegativeEntry,
            "language factor has a negative entry");
  }
  auto t = kernels::parallel::factor_residual(normalized_joint, visual_factor, language_factor, with_grad);
  LossReport r;
  r.loss = t.residual;
  if (with_grad) r.grads = {std::move(t.grad_left), std::move(t.grad_right)};
  return r;
}

double mm_equivalence_constant(const TwoViewModel& model) {
  return equivalence_constant(model.joint(), model.visual().marginal(), model.language().marginal());
}

LossReport ce_loss(const Matrix& features, const Matrix& embeddings, std::span<const int> labels, bool with_grad) {
  require(features.rows() > 0, Errc::EmptyBatch, "no samples");
  require(features.cols() == embeddings.rows(), Errc::DimensionMismatch, "feature width != embedding rows");
  require(static_cast<Eigen::Index>(labels.size()) == features.rows(), Errc::DimensionMismatch,
          "one label per feature row required");
  const Eigen::Index classes = embeddings.cols();
  require(classes >= 2, Errc::DegenerateLabels, "cross-entropy needs at least two classes");
  for (int y : labels)
    require(y >= 0 && y < classes, Errc::LabelOutOfRange, "label " + std::to_string(y) + " out of range");

  const Matrix logits = features * embeddings;
  const double inv_b = 1.0 / static_cast<double>(features.rows());
  Matrix d_logits(logits.rows(), classes);
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - top).exp().matrix();
    const double z = e.sum();
    const auto y = static_cast<Eigen::Index>(labels[static_cast<size_t>(i)]);
    total += top + std::log(z) - logits(i, y);
    d_logits.row(i) = e / z;
    d_logits(i, y) -= 1.0;
  }
  LossReport r;
  r.loss = total * inv_b;
  if (with_grad) {
    d_logits *= inv_b;
    r.grads = {d_logits * embeddings.transpose(), features.transpose() * d_logits};
  }
  return r;
}

LossReport nce_loss(const Matrix& features, const Matrix& embeddings, std::span<const int> labels,
                    const NonNegTransform& transform, bool with_grad) {
  LossReport r = ce_loss(forward(transform, features), forward(transform, embeddings), labels, with_grad);
  if (with_grad) {
    r.grads[0] = backward(transform, features, r.grads[0]);
    r.grads[1] = backward(transform, embeddings, r.grads[1]);
  }
  return r;
}

}  // namespace ncl
