#pragma once

#include "ncl/types.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ncl {

using Rng = std::mt19937_64;

/// Finite latent-class generative model over samples 0..N-1.
///
/// Positive pairs are two independent draws from P(.|c) for a shared class
/// c ~ P(c). The marginal P(x) and posterior P(c|x) are derived once at
/// construction; the object is immutable afterwards.
class LatentClassModel {
 public:
  /// Validates and caches derived quantities. `conditional` is m x N.
  ///
  /// Throws NonStochastic, ZeroMarginal or DimensionMismatch.
  LatentClassModel(Vector class_prior, Matrix conditional);

  int num_classes() const { return static_cast<int>(prior_.size()); }
  int num_samples() const { return static_cast<int>(conditional_.cols()); }

  const Vector& class_prior() const { return prior_; }
  const Matrix& conditional() const { return conditional_; }
  const Vector& marginal() const { return marginal_; }
  /// N x m, row x = P(.|x).
  const Matrix& posterior() const { return posterior_; }

  double min_class_prior() const { return prior_.minCoeff(); }

 private:
  Vector prior_;
  Matrix conditional_;
  Vector marginal_;
  Matrix posterior_;
};

struct ModelSpec {
  /// "explicit", "one_hot", "overlap" or "random".
  std::string preset = "one_hot";
  int num_classes = 2;
  int num_samples = 4;
  /// Target class overlap for the "overlap" preset.
  double overlap = 0.0;
  /// "uniform", "random", or explicit values in `prior_values`.
  std::string prior = "uniform";
  std::vector<double> prior_values;
  /// Explicit m x N conditional, used by the "explicit" preset.
  Matrix conditional;
  std::uint64_t seed = 0;
};

/// Builds a model from an explicit specification or a preset.
///
/// one_hot: samples are split into m contiguous blocks and class c is
/// uniform on its block. overlap: like one_hot, but class c also leaks a
/// fraction of its mass onto block c+1 (excluding that block's first
/// sample, so every class keeps a unique sample); the fraction is solved so
/// that class_overlap() equals the requested value. random: dense random
/// conditionals.
LatentClassModel build_model(const ModelSpec& spec);

struct CooccurrenceMatrix {
  /// A[x,x'] = P(x,x').
  Matrix raw;
  /// A[x,x'] / sqrt(P(x) P(x')).
  Matrix normalized;
};

CooccurrenceMatrix cooccurrence(const LatentClassModel& model);

/// Assignment of every latent class to exactly one observed label.
class LabelMap {
 public:
  /// Throws LabelMapMismatch when a label id is out of range or unused.
  LabelMap(std::vector<int> class_to_label, int label_count);

  /// Labels are latent classes themselves.
  static LabelMap identity(int num_classes);

  int label_count() const { return label_count_; }
  int num_classes() const { return static_cast<int>(class_to_label_.size()); }
  int label_of(int cls) const { return class_to_label_.at(static_cast<size_t>(cls)); }
  const std::vector<int>& class_to_label() const { return class_to_label_; }

 private:
  std::vector<int> class_to_label_;
  int label_count_;
};

std::vector<int> identity_permutation(int m);

/// Rows phi(x) with column j = P(pi_j|x) / sqrt(P(pi_j)); columns beyond m
/// (when dims > m) are zero. The table is flagged non-negative and carries
/// the sqrt(P(x)) weighting.
FeatureTable ground_truth_phi(const LatentClassModel& model, const std::vector<int>& permutation,
                              int dims = -1);

/// dims x C matrix whose column y is sqrt(P(pi_j)) 1[pi_j in C_y].
Matrix bayes_classifier_weights(const LatentClassModel& model, const LabelMap& labels,
                                const std::vector<int>& permutation, int dims = -1);

/// N x C matrix of P(y|x).
Matrix label_posterior(const LatentClassModel& model, const LabelMap& labels);

/// argmax_y P(y|x) per sample; ties within 1e-12 go to the lowest label.
std::vector<int> bayes_labels(const LatentClassModel& model, const LabelMap& labels);

/// max over i != j of sum_x P(x) P(c_i|x) P(c_j|x).
double class_overlap(const LatentClassModel& model);

/// Draws positive pairs and negatives by inverse-CDF sampling.
class PairSampler {
 public:
  explicit PairSampler(const LatentClassModel& model);

  std::pair<int, int> sample_pair(Rng& rng) const;
  int sample_negative(Rng& rng) const;

 private:
  static int draw(const std::vector<double>& cdf, Rng& rng);

  std::vector<double> prior_cdf_;
  std::vector<std::vector<double>> conditional_cdf_;
  std::vector<double> marginal_cdf_;
};

/// Two-view model: P_M(v, l) = sum_c P(c) P(v|c) P(l|c).
class TwoViewModel {
 public:
  TwoViewModel(Vector class_prior, Matrix visual_conditional, Matrix language_conditional);

  const LatentClassModel& visual() const { return visual_; }
  const LatentClassModel& language() const { return language_; }
  const Vector& class_prior() const { return visual_.class_prior(); }

  /// N_V x N_L joint P_M.
  const Matrix& joint() const { return joint_; }
  /// P_M / sqrt(P_V P_L).
  const Matrix& normalized_joint() const { return normalized_; }

 private:
  LatentClassModel visual_;
  LatentClassModel language_;
  Matrix joint_;
  Matrix normalized_;
};

/// One-hot two-view model with m classes and `per_class` samples per class in
/// each view.
TwoViewModel build_one_hot_two_view(int num_classes, int per_class_visual, int per_class_language);

}  // namespace ncl
