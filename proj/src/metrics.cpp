#include "ncl/metrics.hpp"

#include "ncl/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace ncl {

namespace {

void require_labels(std::span<const int> labels, Eigen::Index rows) {
  require(static_cast<Eigen::Index>(labels.size()) == rows, Errc::ShapeMismatch,
          "expected " + std::to_string(rows) + " labels, got " + std::to_string(labels.size()));
  for (int y : labels) require(y >= 0, Errc::LabelOutOfRange, "labels must be >= 0");
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - mu) * (x - mu);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// log(1 + w * sum exp(d_j)) without overflow.
double log1p_weighted_sum_exp(const std::vector<double>& d, double w) {
  double mx = 0.0;
  for (double x : d) mx = std::max(mx, x);
  double acc = std::exp(-mx);
  for (double x : d) acc += w * std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace

SparsityResult sparsity(const Matrix& features, double threshold) {
  require(features.size() > 0, Errc::ShapeMismatch, "sparsity of an empty table");
  SparsityResult r;
  r.per_sample.resize(static_cast<size_t>(features.rows()));
  Eigen::Index total = 0;
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const auto zeros = (features.row(i).array().abs() < threshold).count();
    total += zeros;
    r.per_sample[static_cast<size_t>(i)] = static_cast<double>(zeros) / static_cast<double>(features.cols());
  }
  // One rounding step, so (m-1)/m structure comes out exact.
  r.mean = static_cast<double>(total) / static_cast<double>(features.size());
  return r;
}

double CorrelationResult::max_off_diagonal() const {
  double best = 0.0;
  for (Eigen::Index i = 0; i < matrix.rows(); ++i)
    for (Eigen::Index j = 0; j < matrix.cols(); ++j)
      if (i != j) best = std::max(best, std::abs(matrix(i, j)));
  return best;
}

CorrelationResult correlation_matrix(const Matrix& features, double threshold) {
  require(features.rows() > 0, Errc::ShapeMismatch, "correlation of an empty table");
  CorrelationResult r;
  for (Eigen::Index j = 0; j < features.cols(); ++j)
    (features.col(j).cwiseAbs().maxCoeff() > threshold ? r.live : r.dead).push_back(static_cast<int>(j));
  require(!r.live.empty(), Errc::AllDimensionsDead, "every feature dimension is zero");
  Matrix normed(features.rows(), static_cast<Eigen::Index>(r.live.size()));
  for (size_t j = 0; j < r.live.size(); ++j) {
    const auto col = features.col(r.live[j]);
    normed.col(static_cast<Eigen::Index>(j)) = col / col.norm();
  }
  r.matrix = normed.transpose() * normed;
  return r;
}

double weighted_cross_moment(const Matrix& features, const Vector& marginal) {
  require(marginal.size() == features.rows(), Errc::DimensionMismatch, "marginal length != rows");
  const Matrix m = features.transpose() * marginal.asDiagonal() * features;
  double best = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j) best = std::max(best, m(i, j));
  return best;
}

ConsistencyResult class_consistency(const Matrix& features, std::span<const int> labels, double threshold) {
  require_labels(labels, features.rows());
  ConsistencyResult r;
  for (Eigen::Index d = 0; d < features.cols(); ++d) {
    std::map<int, int> counts;
    int active = 0;
    for (Eigen::Index x = 0; x < features.rows(); ++x) {
      if (features(x, d) > threshold) {
        ++counts[labels[static_cast<size_t>(x)]];
        ++active;
      }
    }
    if (active == 0) {
      r.empty_dims.push_back(static_cast<int>(d));
      continue;
    }
    int modal = 0;
    for (const auto& [label, c] : counts) modal = std::max(modal, c);
    r.dims.push_back(static_cast<int>(d));
    r.rates.push_back(static_cast<double>(modal) / active);
  }
  r.mean = mean_of(r.rates);
  return r;
}

ExpectedActivation expected_activation(const Matrix& features, const Vector* weights) {
  require(!weights || weights->size() == features.rows(), Errc::DimensionMismatch, "weights length != rows");
  ExpectedActivation ea;
  ea.values = Vector::Zero(features.cols());
  double total = 0.0;
  for (Eigen::Index x = 0; x < features.rows(); ++x) {
    const double n = features.row(x).norm();
    if (n == 0.0) {
      ++ea.zero_rows;
      continue;
    }
    const double w = weights ? (*weights)(x) : 1.0;
    ea.values += (w / n) * features.row(x).transpose();
    total += w;
  }
  require(total > 0.0, Errc::AllRowsZero, "every feature row is zero");
  ea.values /= total;
  return ea;
}

std::vector<int> select_top(const Vector& scores, int n) {
  require(n >= 0 && n <= scores.size(), Errc::IndexOutOfRange, "cannot select " + std::to_string(n) + " dims");
  std::vector<int> idx(static_cast<size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return scores(a) > scores(b); });
  idx.resize(static_cast<size_t>(n));
  return idx;
}

Matrix select_columns(const Matrix& features, std::span<const int> columns) {
  Matrix out(features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (size_t j = 0; j < columns.size(); ++j) {
    require(columns[j] >= 0 && columns[j] < features.cols(), Errc::IndexOutOfRange, "column out of range");
    out.col(static_cast<Eigen::Index>(j)) = features.col(columns[j]);
  }
  return out;
}

RetrievalResult retrieval_map(const Matrix& features, std::span<const int> labels, int k) {
  require(k >= 1, Errc::ConfigInvalid, "retrieval depth must be >= 1");
  require_labels(labels, features.rows());
  const Eigen::Index n = features.rows();
  Matrix unit = features;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double nrm = unit.row(i).norm();
    require(nrm > 0.0, Errc::ZeroNormFeature, "retrieval query " + std::to_string(i) + " has a zero feature row");
    unit.row(i) /= nrm;
  }
  const Matrix sim = unit * unit.transpose();
  std::map<int, int> class_size;
  for (int y : labels) ++class_size[y];

  RetrievalResult r;
  r.per_query.assign(static_cast<size_t>(n), 0.0);
  std::vector<int> gallery;
  for (Eigen::Index q = 0; q < n; ++q) {
    const int yq = labels[static_cast<size_t>(q)];
    if (class_size[yq] < 2) ++r.zero_relevant;
    gallery.clear();
    for (Eigen::Index g = 0; g < n; ++g)
      if (g != q) gallery.push_back(static_cast<int>(g));
    const size_t depth = std::min(static_cast<size_t>(k), gallery.size());
    std::partial_sort(gallery.begin(), gallery.begin() + static_cast<std::ptrdiff_t>(depth), gallery.end(),
                      [&](int a, int b) { return sim(q, a) > sim(q, b) || (sim(q, a) == sim(q, b) && a < b); });
    int hits = 0;
    double ap = 0.0;
    for (size_t pos = 0; pos < depth; ++pos) {
      if (labels[static_cast<size_t>(gallery[pos])] == yq) {
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(pos + 1);
      }
    }
    r.per_query[static_cast<size_t>(q)] = hits > 0 ? ap / hits : 0.0;
  }
  r.map = mean_of(r.per_query);
  return r;
}

SepinResult sepin_at_k(const Matrix& features, const LatentClassModel& model, const SepinConfig& cfg) {
  require(features.rows() == model.num_samples(), Errc::DimensionMismatch, "feature rows != model samples");
  require(cfg.batches >= 2 && cfg.batch_size >= 1 && cfg.num_negatives >= 1, Errc::InsufficientDraws,
          "SEPIN needs >= 2 batches, >= 1 pair and >= 1 negative per batch");
  const int k = static_cast<int>(features.cols());
  require(cfg.top_k >= 1 && cfg.top_k <= k, Errc::ConfigInvalid, "SEPIN top_k must lie in 1..k");

  const Matrix gram = features * features.transpose();
  const int subsets = k + 1;  // subset k is the full table; subset i drops dimension i
  auto similarity = [&](int subset, int a, int b) {
    double s = gram(a, b);
    double na = gram(a, a), nb = gram(b, b);
    if (subset < k) {
      s -= features(a, subset) * features(b, subset);
      na -= features(a, subset) * features(a, subset);
      nb -= features(b, subset) * features(b, subset);
    }
    if (cfg.normalize) {
      const double d = std::sqrt(std::max(na, 0.0) * std::max(nb, 0.0));
      s = d > 0.0 ? s / d : 0.0;
    }
    return cfg.critic_scale * s;
  };

  const PairSampler sampler(model);
  Rng rng(cfg.seed);
  const int b = cfg.batch_size, m = cfg.num_negatives;
  const double weight = cfg.mean_negatives ? 1.0 / m : 1.0;
  const double ceiling = cfg.mean_negatives ? std::log(2.0) : std::log(m + 1.0);
  std::vector<std::vector<double>> per_batch(static_cast<size_t>(subsets));
  std::vector<int> anchors(static_cast<size_t>(b)), positives(static_cast<size_t>(b)), negatives(static_cast<size_t>(m));
  std::vector<double> d(static_cast<size_t>(m));
  for (int t = 0; t < cfg.batches; ++t) {
    for (int i = 0; i < b; ++i) std::tie(anchors[static_cast<size_t>(i)], positives[static_cast<size_t>(i)]) = sampler.sample_pair(rng);
    for (int i = 0; i < m; ++i) negatives[static_cast<size_t>(i)] = sampler.sample_negative(rng);
    for (int s = 0; s < subsets; ++s) {
      double acc = 0.0;
      for (int i = 0; i < b; ++i) {
        const int a = anchors[static_cast<size_t>(i)];
        const double pos = similarity(s, a, positives[static_cast<size_t>(i)]);
        for (int j = 0; j < m; ++j) d[static_cast<size_t>(j)] = similarity(s, a, negatives[static_cast<size_t>(j)]) - pos;
        acc += ceiling - log1p_weighted_sum_exp(d, weight);
      }
      per_batch[static_cast<size_t>(s)].push_back(acc / b);
    }
  }

  SepinResult r;
  const auto& full = per_batch[static_cast<size_t>(k)];
  r.full = mean_of(full);
  r.full_stderr = stderr_of(full);
  std::vector<std::vector<double>> cond(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto& wo = per_batch[static_cast<size_t>(i)];
    r.without.push_back(mean_of(wo));
    r.without_stderr.push_back(stderr_of(wo));
    auto& c = cond[static_cast<size_t>(i)];
    for (size_t t = 0; t < full.size(); ++t) c.push_back(full[t] - wo[t]);
    r.per_dim.push_back(mean_of(c));
    r.per_dim_stderr.push_back(stderr_of(c));
  }
  r.order = select_top(Eigen::Map<const Vector>(r.per_dim.data(), k), k);
  std::vector<double> top(full.size(), 0.0);
  for (int j = 0; j < cfg.top_k; ++j)
    for (size_t t = 0; t < top.size(); ++t) top[t] += cond[static_cast<size_t>(r.order[static_cast<size_t>(j)])][t] / cfg.top_k;
  r.score = mean_of(top);
  r.score_stderr = stderr_of(top);
  return r;
}

double pattern_entropy(const Matrix& features, const Vector& weights) {
  require(weights.size() == features.rows(), Errc::DimensionMismatch, "weights length != rows");
  std::vector<int> idx(static_cast<size_t>(features.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  auto row_less = [&](int a, int b) {
    for (Eigen::Index j = 0; j < features.cols(); ++j)
      if (features(a, j) != features(b, j)) return features(a, j) < features(b, j);
    return false;
  };
  std::sort(idx.begin(), idx.end(), row_less);
  const double total = weights.sum();
  double h = 0.0;
  for (size_t i = 0; i < idx.size();) {
    double mass = 0.0;
    size_t j = i;
    while (j < idx.size() && !row_less(idx[i], idx[j]) && !row_less(idx[j], idx[i])) mass += weights(idx[j++]);
    const double p = mass / total;
    if (p > 0.0) h -= p * std::log(p);
    i = j;
  }
  return h;
}

std::vector<int> solve_assignment(const Matrix& cost) {
  // Hungarian method with potentials, 1-based internally.
  const int n = static_cast<int>(cost.rows());
  require(cost.cols() == n, Errc::ShapeMismatch, "assignment cost must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<size_t>(n));
  for (int j = 1; j <= n; ++j) row_to_col[static_cast<size_t>(p[j] - 1)] = j - 1;
  return row_to_col;
}

AlignmentResult identifiability_align(const Matrix& f, const Matrix& g) {
  require(f.rows() == g.rows() && f.cols() == g.cols(), Errc::ShapeMismatch, "alignment needs equal shapes");
  const Eigen::Index k = f.cols();
  Vector gn(k), fn(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    gn(j) = g.col(j).norm();
    fn(j) = f.col(j).norm();
    require(gn(j) > 0.0, Errc::ZeroColumn, "reference column " + std::to_string(j) + " is zero");
  }
  const Matrix inner = f.transpose() * g;
  Matrix cost(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) cost(i, j) = fn(i) > 0.0 ? -std::abs(inner(i, j)) / (fn(i) * gn(j)) : 0.0;

  AlignmentResult r;
  r.permutation = solve_assignment(cost);
  r.scale.resize(k);
  Matrix fitted(f.rows(), k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const int src = r.permutation[static_cast<size_t>(j)];
    r.scale(j) = std::max(0.0, inner(j, src) / (gn(src) * gn(src)));
    fitted.col(j) = r.scale(j) * g.col(src);
  }
  const double total = f.norm();
  r.residual = total > 0.0 ? (f - fitted).norm() / total : 0.0;
  return r;
}

Matrix random_rotation(int k, std::uint64_t seed) {
  require(k >= 1, Errc::ShapeMismatch, "rotation size must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix a(k, k);
  for (Eigen::Index j = 0; j < k; ++j)
    for (Eigen::Index i = 0; i < k; ++i) a(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  const Matrix rr = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < k; ++j)
    if (rr(j, j) < 0.0) q.col(j) = -q.col(j);
  if (q.determinant() < 0.0) q.col(0) = -q.col(0);
  return q;
}

Matrix planar_rotation(int k, int i, int j, double angle) {
  require(i >= 0 && j >= 0 && i < k && j < k && i != j, Errc::IndexOutOfRange, "invalid rotation plane");
  Matrix r = Matrix::Identity(k, k);
  r(i, i) = std::cos(angle);
  r(j, j) = std::cos(angle);
  r(i, j) = -std::sin(angle);
  r(j, i) = std::sin(angle);
  return r;
}

bool is_permutation_like(const Matrix& r, double tol) {
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    int big = 0;
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      const double a = std::abs(r(i, j));
      if (std::abs(a - 1.0) <= tol) ++big;
      else if (a > tol) return false;
    }
    if (big != 1) return false;
  }
  return true;
}

RotationCheck rotation_symmetry_check(const Matrix& features, const Matrix& rotation,
                                      const std::function<double(const Matrix&)>& loss) {
  require(rotation.rows() == features.cols() && rotation.cols() == features.cols(), Errc::ShapeMismatch,
          "rotation must be k x k");
  const Matrix rotated = features * rotation;
  return {std::abs(loss(rotated) - loss(features)), rotated.minCoeff()};
}

Vector eigen_spectrum(const Matrix& features, const Vector& marginal) {
  require(features.size() > 0, Errc::ShapeMismatch, "spectrum of an empty table");
  require(marginal.size() == features.rows(), Errc::DimensionMismatch, "marginal length != rows");
  const Matrix second = features.transpose() * marginal.asDiagonal() * features;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(second, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

ActivationHistogram activated_dim_histogram(const Matrix& features, double threshold) {
  ActivationHistogram h;
  h.counts.assign(static_cast<size_t>(features.cols() + 1), 0);
  for (Eigen::Index x = 0; x < features.rows(); ++x) {
    const int c = static_cast<int>((features.row(x).array() > threshold).count());
    h.per_sample.push_back(c);
    ++h.counts[static_cast<size_t>(c)];
  }
  return h;
}

int argmax_with_ties(const Eigen::Ref<const Vector>& v, double tol) {
  const double mx = v.maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) >= mx - tol) return static_cast<int>(i);
  return 0;
}

ProbeResult linear_probe(const Matrix& train_features, std::span<const int> train_labels,
                         const Matrix& test_features, std::span<const int> test_labels, const ProbeConfig& cfg) {
  require_labels(train_labels, train_features.rows());
  require_labels(test_labels, test_features.rows());
  require(test_features.cols() == train_features.cols(), Errc::ShapeMismatch, "train/test widths differ");
  int classes = 0;
  std::map<int, int> seen;
  for (int y : train_labels) ++seen[y];
  require(seen.size() >= 2, Errc::DegenerateLabels, "probe needs at least two classes");
  for (int y : train_labels) classes = std::max(classes, y + 1);
  for (int y : test_labels) classes = std::max(classes, y + 1);

  const Matrix& x = train_features;
  const auto n = static_cast<double>(x.rows());
  Matrix onehot = Matrix::Zero(x.rows(), classes);
  for (Eigen::Index i = 0; i < x.rows(); ++i) onehot(i, train_labels[static_cast<size_t>(i)]) = 1.0;
  double scale = 1.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) scale = std::max(scale, x.row(i).squaredNorm() + 1.0);
  const double lr = cfg.learning_rate / scale;

  ProbeResult r;
  r.weights = Matrix::Zero(x.cols(), classes);
  r.bias = Vector::Zero(classes);
  auto softmax_loss = [&](Matrix& probs) {
    probs = x * r.weights;
    probs.rowwise() += r.bias.transpose();
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const double mx = probs.row(i).maxCoeff();
      probs.row(i) = (probs.row(i).array() - mx).exp();
      const double z = probs.row(i).sum();
      probs.row(i) /= z;
      loss -= std::log(std::max(probs(i, train_labels[static_cast<size_t>(i)]), 1e-300));
    }
    return loss / n + 0.5 * cfg.l2 * r.weights.squaredNorm();
  };
  Matrix probs;
  for (r.steps = 0; r.steps < cfg.max_steps; ++r.steps) {
    r.final_loss = softmax_loss(probs);
    const Matrix diff = (probs - onehot) / n;
    const Matrix gw = x.transpose() * diff + cfg.l2 * r.weights;
    const Vector gb = diff.colwise().sum().transpose();
    if (std::sqrt(gw.squaredNorm() + gb.squaredNorm()) < cfg.tolerance) break;
    r.weights -= lr * gw;
    r.bias -= lr * gb;
  }
  r.final_loss = softmax_loss(probs);

  auto accuracy = [&](const Matrix& feats, std::span<const int> labels) {
    if (feats.rows() == 0) return 0.0;
    Matrix logits = feats * r.weights;
    logits.rowwise() += r.bias.transpose();
    int correct = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
      if (argmax_with_ties(logits.row(i).transpose()) == labels[static_cast<size_t>(i)]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(feats.rows());
  };
  r.train_accuracy = accuracy(train_features, train_labels);
  r.test_accuracy = accuracy(test_features, test_labels);
  return r;
}

double bayes_agreement(const Matrix& weights, const Matrix& features, const LatentClassModel& model,
                       const LabelMap& labels) {
  require(features.rows() == model.num_samples(), Errc::DimensionMismatch, "feature rows != model samples");
  require(weights.rows() == features.cols() && weights.cols() == labels.label_count(), Errc::LabelMapMismatch,
          "classifier weights do not match features and labels");
  const std::vector<int> bayes = bayes_labels(model, labels);
  const Matrix scores = features * weights;
  int agree = 0;
  for (Eigen::Index x = 0; x < scores.rows(); ++x)
    if (argmax_with_ties(scores.row(x).transpose()) == bayes[static_cast<size_t>(x)]) ++agree;
  return static_cast<double>(agree) / static_cast<double>(scores.rows());
}

}  // namespace ncl
