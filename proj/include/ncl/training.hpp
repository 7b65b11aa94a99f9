#pragma once

#include "ncl/encoders.hpp"
#include "ncl/latent_model.hpp"
#include "ncl/objectives.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ncl {

enum class OptimizerKind { Gd, MomentumGd, Adam };
enum class Schedule { Constant, Cosine };

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::Gd;
  double learning_rate = 0.1;
  Schedule schedule = Schedule::Constant;
  int steps = 1000;
  /// 0 trains on exact population expectations.
  int batch_size = 0;
  /// Negatives per mini-batch; 0 means batch_size.
  int num_negatives = 0;
  /// Early stop once |loss delta| < tolerance for `patience` consecutive steps.
  double tolerance = 0.0;
  int patience = 50;
  std::uint64_t seed = 0;
  /// Keep a parameter snapshot every this many steps (0 = never).
  int snapshot_every = 0;

  /// Full-batch only: halve the step until the loss does not increase.
  bool backtracking = false;
  double backtrack_factor = 0.5;
  int max_backtracks = 60;
  /// Step multiplier after an accepted step (projected-gradient NMF).
  double step_growth = 1.0;

  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// |loss| beyond this counts as divergence, as does any non-finite value.
  double divergence_threshold = 1e12;
};

/// Throws ConfigInvalid on non-positive rates or budgets.
void validate(const TrainConfig& cfg);

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> grad_norm;
  std::vector<int> dead_dims;
  std::vector<double> ms;
  bool converged = false;
  std::vector<std::pair<int, ParamBundle>> snapshots;

  std::size_t steps() const { return loss.size(); }
};

struct ObjectiveSpec {
  enum class Kind { Spectral, InfoNce };
  Kind kind = Kind::Spectral;
  InfoNceOptions infonce;
  /// Weight of the l1 activation penalty (0 disables it).
  double l1_lambda = 0.0;
};

/// First/second-moment optimizers producing a descent direction; the caller
/// scales it by the learning rate.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  ParamBundle direction(const ParamBundle& grads);

 private:
  TrainConfig cfg_;
  ParamBundle first_;
  ParamBundle second_;
  long step_ = 0;
};

double scheduled_rate(const TrainConfig& cfg, int step);

/// Trains `encoder` on `objective` under `model`. Full-batch mode uses the
/// exact population spectral loss; mini-batch mode draws pairs and
/// negatives from a sampler seeded with cfg.seed.
/// Throws DivergenceDetected or ConfigInvalid.
TrainTrace train(Encoder& encoder, const ObjectiveSpec& objective, const LatentClassModel& model,
                 const TrainConfig& cfg);

/// Joint full-batch training of both views on the exact two-view spectral loss.
TrainTrace train_asymmetric(Encoder& visual, Encoder& language, const TwoViewModel& model, const TrainConfig& cfg);

/// || A_bar_M - F_V F_L^T ||^2 for the encoders' current features.
double asymmetric_residual(const Encoder& visual, const Encoder& language, const TwoViewModel& model);

struct NmfResult {
  /// Rows f = F / sqrt(P(x)) with the sqrt(P(x)) weighting attached, so
  /// factor.weighted() is the non-negative factor F.
  FeatureTable factor;
  std::vector<double> residual;
};

/// F <- max(0, F - eta * 4 (F F^T - A_bar) F) from a random non-negative
/// start, halving eta whenever the residual would increase.
/// Throws NonSymmetricInput / NegativeEntry on invalid targets.
NmfResult projected_gradient_nmf(const Matrix& normalized, const Vector& marginal, int dims, const TrainConfig& cfg);

/// Jointly trains an MLP encoder and a k x C class-embedding matrix on
/// cross-entropy, or on the non-negative variant when `nce` is given.
TrainTrace train_supervised(MlpEncoder& encoder, Matrix& embeddings, const Matrix& inputs,
                            std::span<const int> labels, const std::optional<NonNegTransform>& nce,
                            const TrainConfig& cfg);

}  // namespace ncl
