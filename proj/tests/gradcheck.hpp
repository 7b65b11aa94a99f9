#pragma once
// Finite-difference harness for end-to-end encoder gradients.
//
// For a smooth transform the oracle is the central difference of the scalar
// loss itself. For the straight-through transform the analytic gradient is
// by design not the derivative of the forward loss; its oracle is the
// central difference of S(theta) = sum c .* GELU(z(theta)) with c = dL/df
// held fixed at the current point, which is exactly what "backward through
// GELU" means. Entries whose perturbation moves a ReLU pre-activation across
// (or to within 1e-3 of) the kink are skipped.

#include "oracles.hpp"

#include "ncl/encoders.hpp"
#include "ncl/error.hpp"
#include "ncl/latent_model.hpp"
#include "ncl/objectives.hpp"
#include "ncl/reparam.hpp"

#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace gradcheck {

using namespace ncl;

enum class EncoderKind { Tabular, Mlp };
enum class LossKind { SpectralPopulation, SpectralBatch, InfoNce, InfoNceCosine, L1Spectral, Ce, Nce };

struct Combination {
  EncoderKind encoder;
  std::optional<TransformKind> transform;
  LossKind loss;

  std::string label() const {
    static const char* enc[] = {"tabular", "mlp"};
    static const char* loss_names[] = {"spectral_population", "spectral_batch", "infonce", "infonce_cosine",
                                       "l1_spectral",         "ce",             "nce"};
    return std::string(enc[static_cast<int>(encoder)]) + "/" +
           (transform ? transform_name(NonNegTransform{*transform}) : std::string("none")) + "/" +
           loss_names[static_cast<int>(loss)];
  }
};

inline std::vector<Combination> all_combinations() {
  std::vector<Combination> out;
  const std::vector<std::optional<TransformKind>> transforms{
      std::nullopt, TransformKind::Relu, TransformKind::Softplus, TransformKind::Sigmoid,
      TransformKind::ReluForwardGeluBackward};
  for (auto enc : {EncoderKind::Tabular, EncoderKind::Mlp}) {
    for (const auto& t : transforms)
      for (auto loss : {LossKind::SpectralPopulation, LossKind::SpectralBatch, LossKind::InfoNce,
                        LossKind::InfoNceCosine, LossKind::L1Spectral})
        out.push_back({enc, t, loss});
    out.push_back({enc, std::nullopt, LossKind::Ce});
    // NCE applies its transform inside the loss; the encoder stays linear.
    for (auto t : {TransformKind::Relu, TransformKind::Softplus, TransformKind::Sigmoid}) out.push_back({enc, t, LossKind::Nce});
  }
  return out;
}

struct Result {
  int checked = 0;
  int skipped = 0;
  double max_rel_error = 0.0;
};

namespace detail {

constexpr int kSamples = 8;
constexpr int kDims = 3;
constexpr int kClasses = 3;
constexpr double kStep = 1e-5;
constexpr double kKink = 1e-3;

inline bool is_relu_like(const std::optional<TransformKind>& t) {
  return t && (*t == TransformKind::Relu || *t == TransformKind::ReluForwardGeluBackward);
}

struct Problem {
  Combination combo;
  LatentClassModel model = fixture_model();
  Matrix joint = cooccurrence(model).raw;
  std::vector<int> indices;
  int batch = 0;      // anchors (= positives) in batch losses
  Matrix embeddings;  // supervised losses
  std::vector<int> labels;

  static LatentClassModel fixture_model() {
    ModelSpec s;
    s.preset = "random";
    s.num_classes = 3;
    s.num_samples = kSamples;
    s.prior = "random";
    s.seed = 5;
    return build_model(s);
  }

  /// Transform applied by the encoder (none for supervised losses).
  std::optional<NonNegTransform> encoder_transform() const {
    if (combo.loss == LossKind::Ce || combo.loss == LossKind::Nce || !combo.transform) return std::nullopt;
    return NonNegTransform{*combo.transform};
  }

  /// Loss of the encoder output rows; grads[0] is d loss / d rows.
  LossReport loss(const Matrix& f, bool with_grad) const {
    switch (combo.loss) {
      case LossKind::SpectralPopulation:
        return spectral_loss_population(f, joint, model.marginal(), with_grad);
      case LossKind::L1Spectral:
        return l1_regularized_loss(spectral_loss_population(f, joint, model.marginal(), with_grad), f, 0.05,
                                   &model.marginal());
      case LossKind::Ce:
        return ce_loss(f, embeddings, labels, with_grad);
      case LossKind::Nce:
        return nce_loss(f, embeddings, labels, NonNegTransform{*combo.transform}, with_grad);
      default:
        break;
    }
    const Matrix a = f.topRows(batch), p = f.middleRows(batch, batch), n = f.bottomRows(f.rows() - 2 * batch);
    LossReport r = combo.loss == LossKind::SpectralBatch
                       ? spectral_loss_batch(a, p, n, with_grad)
                       : infonce_loss(a, p, n, InfoNceOptions{combo.loss == LossKind::InfoNceCosine ? 0.5 : 1.0,
                                                              combo.loss == LossKind::InfoNceCosine, false},
                                      with_grad);
    if (with_grad) {
      Matrix up(f.rows(), f.cols());
      up << r.grads[0], r.grads[1], r.grads[2];
      r.grads = {up};
    }
    return r;
  }
};

inline std::unique_ptr<Encoder> make_encoder(const Problem& p, std::optional<NonNegTransform> t, std::uint64_t seed) {
  if (p.combo.encoder == EncoderKind::Tabular) return std::make_unique<TabularEncoder>(kSamples, kDims, t, seed);
  return std::make_unique<MlpEncoder>(std::vector<int>{kSamples, 5, kDims}, t, seed);
}

inline void copy_params(const Encoder& from, Encoder& to) { to.mutable_params() = from.params(); }

}  // namespace detail

/// Checks `points` parameter entries drawn at random over fresh random
/// parameter sets.
inline Result run(const Combination& combo, int points, std::uint64_t seed = 0) {
  using namespace detail;
  Result res;
  std::mt19937_64 rng(seed * 7919 + std::hash<std::string>{}(combo.label()) % 100003);
  Problem prob;
  prob.combo = combo;
  const bool trick = combo.transform && *combo.transform == TransformKind::ReluForwardGeluBackward &&
                     combo.loss != LossKind::Nce;
  const bool kinked = is_relu_like(combo.transform);
  int attempts = 0;
  while (res.checked < points && attempts < 100 * points) {
    ++attempts;
    // Fresh parameters and batch for every few points.
    std::unique_ptr<Encoder> enc = make_encoder(prob, prob.encoder_transform(), rng());
    for (auto& m : enc->mutable_params()) m = oracle::gaussian(static_cast<int>(m.rows()), static_cast<int>(m.cols()), rng, 0.8);
    std::unique_ptr<Encoder> linear = make_encoder(prob, std::nullopt, 0);
    copy_params(*enc, *linear);

    std::uniform_int_distribution<int> pick(0, kSamples - 1);
    prob.indices.clear();
    if (combo.loss == LossKind::SpectralBatch || combo.loss == LossKind::InfoNce || combo.loss == LossKind::InfoNceCosine) {
      prob.batch = 3;
      for (int i = 0; i < 2 * prob.batch + 4; ++i) prob.indices.push_back(pick(rng));
    } else {
      for (int i = 0; i < kSamples; ++i) prob.indices.push_back(i);
    }
    prob.embeddings = oracle::gaussian(kDims, kClasses, rng);
    prob.labels.clear();
    std::uniform_int_distribution<int> lab(0, kClasses - 1);
    for (size_t i = 0; i < prob.indices.size(); ++i) prob.labels.push_back(lab(rng));

    Matrix analytic_f, upstream;
    ParamBundle analytic;
    try {
      analytic_f = enc->encode(prob.indices).values;
      upstream = prob.loss(analytic_f, true).grads[0];
      analytic = enc->grad_params(upstream);
    } catch (const Error& e) {
      if (e.code() == Errc::ZeroNormFeature) continue;  // cosine loss on an all-zero row
      throw;
    }

    for (int p = 0; p < 5 && res.checked < points; ++p) {
      std::uniform_int_distribution<size_t> block_pick(0, analytic.size() - 1);
      const size_t b = block_pick(rng);
      std::uniform_int_distribution<Eigen::Index> r_pick(0, analytic[b].rows() - 1), c_pick(0, analytic[b].cols() - 1);
      const Eigen::Index r = r_pick(rng), c = c_pick(rng);

      auto perturbed = [&](double delta) {
        auto e = enc->clone();
        e->mutable_params()[b](r, c) += delta;
        auto l = linear->clone();
        l->mutable_params()[b](r, c) += delta;
        return std::pair{std::move(e), std::move(l)};
      };
      auto [up_enc, up_lin] = perturbed(kStep);
      auto [dn_enc, dn_lin] = perturbed(-kStep);
      const Matrix z0 = linear->evaluate(prob.indices).values;
      const Matrix zp = up_lin->evaluate(prob.indices).values, zm = dn_lin->evaluate(prob.indices).values;

      const bool relu_in_play = kinked && !trick;
      if (relu_in_play) {
        bool near = false;
        for (Eigen::Index i = 0; i < z0.rows() && !near; ++i)
          for (Eigen::Index j = 0; j < z0.cols() && !near; ++j) {
            if (zp(i, j) == zm(i, j)) continue;
            near = std::abs(z0(i, j)) < kKink || (zp(i, j) > 0.0) != (zm(i, j) > 0.0);
          }
        if (combo.loss == LossKind::Nce) {
          // The embedding side of NCE is fixed here; only features move.
        }
        if (near) {
          ++res.skipped;
          continue;
        }
      }

      double numeric = 0.0;
      try {
        if (trick) {
          // Surrogate: c .* GELU(z), c = d loss / d f at the current point.
          auto surrogate = [&](const Matrix& z) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < z.rows(); ++i)
              for (Eigen::Index j = 0; j < z.cols(); ++j) s += upstream(i, j) * oracle::gelu(z(i, j));
            return s;
          };
          numeric = (surrogate(zp) - surrogate(zm)) / (2.0 * kStep);
        } else {
          const double lp = prob.loss(up_enc->evaluate(prob.indices).values, false).loss;
          const double lm = prob.loss(dn_enc->evaluate(prob.indices).values, false).loss;
          numeric = (lp - lm) / (2.0 * kStep);
        }
      } catch (const Error& e) {
        if (e.code() == Errc::ZeroNormFeature) {
          ++res.skipped;
          continue;
        }
        throw;
      }
      res.max_rel_error = std::max(res.max_rel_error, oracle::rel_error(analytic[b](r, c), numeric));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace gradcheck
