#pragma once

#include "ncl/latent_model.hpp"
#include "ncl/types.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ncl {

inline constexpr double kZeroThreshold = 1e-5;

struct SparsityResult {
  std::vector<double> per_sample;
  double mean = 0.0;
};

/// Fraction of entries with |v| < threshold, per row and overall.
SparsityResult sparsity(const Matrix& features, double threshold = kZeroThreshold);

struct CorrelationResult {
  /// live x live matrix, columns normalized by sqrt(sum_x f_i(x)^2).
  Matrix matrix;
  std::vector<int> live;
  std::vector<int> dead;

  double max_off_diagonal() const;
};

/// Throws AllDimensionsDead when every column is all-zero.
CorrelationResult correlation_matrix(const Matrix& features, double threshold = kZeroThreshold);

/// max_{i != j} sum_x P(x) f_i(x) f_j(x).
double weighted_cross_moment(const Matrix& features, const Vector& marginal);

struct ConsistencyResult {
  /// One entry per dimension that activates at least one sample.
  std::vector<int> dims;
  std::vector<double> rates;
  std::vector<int> empty_dims;
  double mean = 0.0;
};

ConsistencyResult class_consistency(const Matrix& features, std::span<const int> labels,
                                    double threshold = kZeroThreshold);

struct ExpectedActivation {
  Vector values;
  int zero_rows = 0;
};

/// Mean of f(x)/||f(x)|| over rows, weighted by `weights` when given.
/// Zero rows are skipped and counted; AllRowsZero if nothing remains.
ExpectedActivation expected_activation(const Matrix& features, const Vector* weights = nullptr);

/// Indices of the n largest entries, descending; ties go to the lower index.
std::vector<int> select_top(const Vector& scores, int n);

Matrix select_columns(const Matrix& features, std::span<const int> columns);

struct RetrievalResult {
  double map = 0.0;
  std::vector<double> per_query;
  /// Queries whose class has no other member in the gallery.
  int zero_relevant = 0;
};

/// mAP@k with cosine similarity. Every row is a query against all other rows;
/// similarity ties go to the lower gallery index. Throws ZeroNormFeature.
RetrievalResult retrieval_map(const Matrix& features, std::span<const int> labels, int k = 10);

struct SepinConfig {
  int top_k = 1;
  /// Anchor/positive pairs per batch.
  int batch_size = 64;
  /// Negatives per batch, shared by its anchors.
  int num_negatives = 64;
  int batches = 200;
  double critic_scale = 1.0;
  /// Row-normalize features (and every leave-one-out subset) before the critic.
  bool normalize = false;
  /// True: log 2 - L with (1/M) sum over negatives. False: log(M + 1) - L.
  bool mean_negatives = true;
  std::uint64_t seed = 0;
};

struct SepinResult {
  /// Per-dimension conditional information estimates, in dimension order.
  std::vector<double> per_dim;
  std::vector<double> per_dim_stderr;
  /// Dimensions sorted by estimate, descending.
  std::vector<int> order;
  double score = 0.0;
  double score_stderr = 0.0;
  /// Estimates of I(x, f(x)) and I(x, f_{-i}(x)) with standard errors.
  double full = 0.0;
  double full_stderr = 0.0;
  std::vector<double> without;
  std::vector<double> without_stderr;
};

/// Leave-one-out InfoNCE decomposition I(x, f) - I(x, f_{-i}), with all
/// feature subsets scored on the same draws. Throws InsufficientDraws when
/// fewer than 2 batches or an empty batch is requested.
SepinResult sepin_at_k(const Matrix& features, const LatentClassModel& model, const SepinConfig& cfg);

/// Entropy (nats) of the row pattern under `weights`: I(x, f(x)) for a
/// deterministic f over an enumerable space.
double pattern_entropy(const Matrix& features, const Vector& weights);

struct AlignmentResult {
  /// f column j ~ scale[j] * g column permutation[j].
  std::vector<int> permutation;
  Vector scale;
  double residual = 0.0;
};

/// Optimal assignment on |cosine| between columns, then least-squares
/// non-negative scales. Throws ShapeMismatch, ZeroColumn (g).
AlignmentResult identifiability_align(const Matrix& f, const Matrix& g);

/// Minimum-cost assignment; result[r] is the column assigned to row r.
std::vector<int> solve_assignment(const Matrix& cost);

/// Haar-distributed rotation (QR of a Gaussian matrix, det = +1).
Matrix random_rotation(int k, std::uint64_t seed);
/// Rotation by `angle` in the (i, j) plane.
Matrix planar_rotation(int k, int i, int j, double angle);
/// True when R is a signed permutation matrix (within tol).
bool is_permutation_like(const Matrix& r, double tol = 1e-12);

struct RotationCheck {
  double loss_delta = 0.0;
  double min_entry = 0.0;
};

/// Applies f -> f R to every row.
RotationCheck rotation_symmetry_check(const Matrix& features, const Matrix& rotation,
                                      const std::function<double(const Matrix&)>& loss);

/// Descending eigenvalues of sum_x P(x) f(x) f(x)^T.
Vector eigen_spectrum(const Matrix& features, const Vector& marginal);

struct ActivationHistogram {
  std::vector<int> per_sample;
  /// counts[d] = samples with exactly d activated dimensions.
  std::vector<int> counts;
};

ActivationHistogram activated_dim_histogram(const Matrix& features, double threshold = kZeroThreshold);

struct ProbeConfig {
  double learning_rate = 0.5;
  int max_steps = 5000;
  /// Stops once the gradient norm falls below this.
  double tolerance = 1e-6;
  double l2 = 0.0;
};

struct ProbeResult {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_loss = 0.0;
  int steps = 0;
  Matrix weights;  // k x C
  Vector bias;     // C
};

/// Multinomial logistic regression by full-batch gradient descent.
/// Throws DegenerateLabels when fewer than two classes appear.
ProbeResult linear_probe(const Matrix& train_features, std::span<const int> train_labels,
                         const Matrix& test_features, std::span<const int> test_labels,
                         const ProbeConfig& cfg = {});

/// Index of the largest entry; entries within tol of the maximum tie and
/// the lowest index wins.
int argmax_with_ties(const Eigen::Ref<const Vector>& v, double tol = 1e-12);

/// Fraction of samples where argmax_y (W^T f(x))_y equals argmax_y P(y|x).
double bayes_agreement(const Matrix& weights, const Matrix& features, const LatentClassModel& model,
                       const LabelMap& labels);

}  // namespace ncl
