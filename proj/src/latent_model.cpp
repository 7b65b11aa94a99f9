#include "ncl/latent_model.hpp"

#include "ncl/error.hpp"
#include "ncl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ncl {

namespace {

constexpr double kStochasticTol = 1e-12;

void check_permutation(const std::vector<int>& perm, int m) {
  require(static_cast<int>(perm.size()) == m, Errc::InvalidPermutation,
          "permutation length " + std::to_string(perm.size()) + " != m = " + std::to_string(m));
  std::vector<bool> seen(static_cast<size_t>(m), false);
  for (int p : perm) {
    require(p >= 0 && p < m && !seen[static_cast<size_t>(p)], Errc::InvalidPermutation,
            "not a permutation of 0..m-1");
    seen[static_cast<size_t>(p)] = true;
  }
}

// First sample index of block c when N samples are split into m blocks.
int block_start(int c, int n, int m) { return static_cast<int>((static_cast<long>(c) * n) / m); }

Vector make_prior(const ModelSpec& spec, Rng& rng) {
  const int m = spec.num_classes;
  if (!spec.prior_values.empty()) {
    require(static_cast<int>(spec.prior_values.size()) == m, Errc::DimensionMismatch,
            "prior has " + std::to_string(spec.prior_values.size()) + " entries, expected " +
                std::to_string(m));
    return Eigen::Map<const Vector>(spec.prior_values.data(), m);
  }
  if (spec.prior == "uniform") return Vector::Constant(m, 1.0 / m);
  if (spec.prior == "random") {
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Vector p(m);
    for (int c = 0; c < m; ++c) p[c] = u(rng);
    return p / p.sum();
  }
  fail(Errc::InvalidPreset, "unknown prior kind '" + spec.prior + "'");
}

Matrix one_hot_conditional(int m, int n) {
  require(n >= m, Errc::DimensionMismatch, "one_hot preset needs n_samples >= m");
  Matrix cond = Matrix::Zero(m, n);
  for (int c = 0; c < m; ++c) {
    const int lo = block_start(c, n, m), hi = block_start(c + 1, n, m);
    cond.row(c).segment(lo, hi - lo).setConstant(1.0 / (hi - lo));
  }
  return cond;
}

Matrix leaky_conditional(int m, int n, double leak) {
  Matrix cond = Matrix::Zero(m, n);
  for (int c = 0; c < m; ++c) {
    const int lo = block_start(c, n, m), hi = block_start(c + 1, n, m);
    const int next = (c + 1) % m;
    const int nlo = block_start(next, n, m) + 1, nhi = block_start(next + 1, n, m);
    cond.row(c).segment(lo, hi - lo).setConstant((1.0 - leak) / (hi - lo));
    cond.row(c).segment(nlo, nhi - nlo).array() += leak / (nhi - nlo);
  }
  return cond;
}

LatentClassModel build_overlap(const ModelSpec& spec, const Vector& prior) {
  const int m = spec.num_classes, n = spec.num_samples;
  require(m >= 2, Errc::InvalidPreset, "overlap preset needs m >= 2");
  require(n >= 2 * m, Errc::DimensionMismatch, "overlap preset needs n_samples >= 2m");
  require(spec.overlap >= 0.0, Errc::InvalidPreset, "overlap must be >= 0");
  if (spec.overlap == 0.0) return LatentClassModel(prior, one_hot_conditional(m, n));

  auto overlap_at = [&](double leak) {
    return class_overlap(LatentClassModel(prior, leaky_conditional(m, n, leak)));
  };
  // Bracket the first crossing on a grid, then bisect.
  constexpr int kGrid = 64;
  double lo = 0.0, hi = -1.0;
  for (int i = 1; i <= kGrid; ++i) {
    const double leak = 0.5 * i / kGrid;
    if (overlap_at(leak) >= spec.overlap) {
      hi = leak;
      break;
    }
    lo = leak;
  }
  require(hi > 0.0, Errc::InvalidPreset,
          "overlap " + std::to_string(spec.overlap) + " is not attainable for this m, N");
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    (overlap_at(mid) < spec.overlap ? lo : hi) = mid;
  }
  return LatentClassModel(prior, leaky_conditional(m, n, 0.5 * (lo + hi)));
}

}  // namespace

LatentClassModel::LatentClassModel(Vector class_prior, Matrix conditional)
    : prior_(std::move(class_prior)), conditional_(std::move(conditional)) {
  const Eigen::Index m = prior_.size();
  require(m >= 1 && conditional_.cols() >= 1, Errc::DimensionMismatch, "empty model");
  require(conditional_.rows() == m, Errc::DimensionMismatch,
          "conditional has " + std::to_string(conditional_.rows()) + " rows, prior has " +
              std::to_string(m) + " entries");
  require(prior_.allFinite() && conditional_.allFinite(), Errc::NonStochastic,
          "non-finite probability");
  require(prior_.minCoeff() > 0.0, Errc::NonStochastic, "class prior entries must be > 0");
  require(std::abs(prior_.sum() - 1.0) <= kStochasticTol, Errc::NonStochastic,
          "class prior sums to " + std::to_string(prior_.sum()));
  require(conditional_.minCoeff() >= 0.0, Errc::NonStochastic, "negative conditional entry");
  for (Eigen::Index c = 0; c < m; ++c) {
    const double s = conditional_.row(c).sum();
    require(std::abs(s - 1.0) <= kStochasticTol, Errc::NonStochastic,
            "conditional row " + std::to_string(c) + " sums to " + std::to_string(s));
  }

  marginal_ = conditional_.transpose() * prior_;
  for (Eigen::Index x = 0; x < marginal_.size(); ++x)
    require(marginal_[x] > 0.0, Errc::ZeroMarginal, "sample " + std::to_string(x) + " has P(x) = 0");

  posterior_.resize(conditional_.cols(), m);
  for (Eigen::Index x = 0; x < conditional_.cols(); ++x)
    for (Eigen::Index c = 0; c < m; ++c) posterior_(x, c) = prior_[c] * conditional_(c, x) / marginal_[x];
}

LatentClassModel build_model(const ModelSpec& spec) {
  require(spec.num_classes >= 1 && spec.num_samples >= 1, Errc::DimensionMismatch,
          "m and n_samples must be positive");
  Rng rng(spec.seed);
  if (spec.preset == "explicit") {
    require(spec.conditional.rows() == spec.num_classes && spec.conditional.cols() == spec.num_samples,
            Errc::DimensionMismatch, "explicit conditional must be m x n_samples");
    return LatentClassModel(make_prior(spec, rng), spec.conditional);
  }
  const Vector prior = make_prior(spec, rng);
  if (spec.preset == "one_hot") return LatentClassModel(prior, one_hot_conditional(spec.num_classes, spec.num_samples));
  if (spec.preset == "overlap") return build_overlap(spec, prior);
  if (spec.preset == "random") {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Matrix cond(spec.num_classes, spec.num_samples);
    for (Eigen::Index c = 0; c < cond.rows(); ++c) {
      for (Eigen::Index x = 0; x < cond.cols(); ++x) cond(c, x) = u(rng);
      cond.row(c) /= cond.row(c).sum();
    }
    return LatentClassModel(prior, cond);
  }
  fail(Errc::InvalidPreset, "unknown preset '" + spec.preset + "'");
}

CooccurrenceMatrix cooccurrence(const LatentClassModel& model) {
  CooccurrenceMatrix out;
  out.raw = kernels::parallel::cooccurrence(model.class_prior(), model.conditional());
  const Vector inv_sqrt = model.marginal().cwiseSqrt().cwiseInverse();
  out.normalized = inv_sqrt.asDiagonal() * out.raw * inv_sqrt.asDiagonal();
  // Symmetrize away the rounding of the two diagonal scalings.
  out.normalized = 0.5 * (out.normalized + out.normalized.transpose()).eval();
  return out;
}

LabelMap::LabelMap(std::vector<int> class_to_label, int label_count)
    : class_to_label_(std::move(class_to_label)), label_count_(label_count) {
  require(label_count_ >= 1, Errc::LabelMapMismatch, "label_count must be >= 1");
  std::vector<bool> used(static_cast<size_t>(label_count_), false);
  for (int y : class_to_label_) {
    require(y >= 0 && y < label_count_, Errc::LabelMapMismatch, "label id out of range");
    used[static_cast<size_t>(y)] = true;
  }
  require(std::all_of(used.begin(), used.end(), [](bool b) { return b; }), Errc::LabelMapMismatch,
          "every label must own at least one latent class");
}

LabelMap LabelMap::identity(int num_classes) {
  std::vector<int> map(static_cast<size_t>(num_classes));
  std::iota(map.begin(), map.end(), 0);
  return LabelMap(std::move(map), num_classes);
}

std::vector<int> identity_permutation(int m) {
  std::vector<int> p(static_cast<size_t>(m));
  std::iota(p.begin(), p.end(), 0);
  return p;
}

FeatureTable ground_truth_phi(const LatentClassModel& model, const std::vector<int>& permutation, int dims) {
  const int m = model.num_classes();
  check_permutation(permutation, m);
  if (dims < 0) dims = m;
  require(dims >= m, Errc::DimensionMismatch, "ground-truth features need dims >= m");
  Matrix phi = Matrix::Zero(model.num_samples(), dims);
  for (int j = 0; j < m; ++j) {
    const int c = permutation[static_cast<size_t>(j)];
    phi.col(j) = model.posterior().col(c) / std::sqrt(model.class_prior()[c]);
  }
  FeatureTable table(std::move(phi), true);
  table.weight_by(model.marginal());
  return table;
}

Matrix bayes_classifier_weights(const LatentClassModel& model, const LabelMap& labels,
                                const std::vector<int>& permutation, int dims) {
  const int m = model.num_classes();
  require(labels.num_classes() == m, Errc::LabelMapMismatch,
          "label map covers " + std::to_string(labels.num_classes()) + " classes, model has " +
              std::to_string(m));
  check_permutation(permutation, m);
  if (dims < 0) dims = m;
  require(dims >= m, Errc::DimensionMismatch, "classifier needs dims >= m");
  Matrix w = Matrix::Zero(dims, labels.label_count());
  for (int j = 0; j < m; ++j) {
    const int c = permutation[static_cast<size_t>(j)];
    w(j, labels.label_of(c)) = std::sqrt(model.class_prior()[c]);
  }
  return w;
}

Matrix label_posterior(const LatentClassModel& model, const LabelMap& labels) {
  require(labels.num_classes() == model.num_classes(), Errc::LabelMapMismatch,
          "label map does not match model classes");
  Matrix py = Matrix::Zero(model.num_samples(), labels.label_count());
  for (int c = 0; c < model.num_classes(); ++c) py.col(labels.label_of(c)) += model.posterior().col(c);
  return py;
}

std::vector<int> bayes_labels(const LatentClassModel& model, const LabelMap& labels) {
  const Matrix py = label_posterior(model, labels);
  std::vector<int> out(static_cast<size_t>(py.rows()));
  for (Eigen::Index x = 0; x < py.rows(); ++x) {
    const double best = py.row(x).maxCoeff();
    Eigen::Index y = 0;
    while (py(x, y) < best - 1e-12) ++y;
    out[static_cast<size_t>(x)] = static_cast<int>(y);
  }
  return out;
}

double class_overlap(const LatentClassModel& model) {
  const int m = model.num_classes();
  require(m >= 2, Errc::RequiresAtLeastTwoClasses, "class overlap needs m >= 2");
  const Matrix& post = model.posterior();
  const Vector& p = model.marginal();
  double best = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      double s = 0.0;
      for (Eigen::Index x = 0; x < post.rows(); ++x) s += p[x] * post(x, i) * post(x, j);
      best = std::max(best, s);
    }
  }
  return best;
}

namespace {

std::vector<double> make_cdf(const Eigen::Ref<const Vector>& probs) {
  std::vector<double> cdf(static_cast<size_t>(probs.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) cdf[static_cast<size_t>(i)] = (acc += probs[i]);
  return cdf;
}

}  // namespace

PairSampler::PairSampler(const LatentClassModel& model)
    : prior_cdf_(make_cdf(model.class_prior())), marginal_cdf_(make_cdf(model.marginal())) {
  for (int c = 0; c < model.num_classes(); ++c)
    conditional_cdf_.push_back(make_cdf(model.conditional().row(c).transpose()));
}

int PairSampler::draw(const std::vector<double>& cdf, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
}

std::pair<int, int> PairSampler::sample_pair(Rng& rng) const {
  const auto& cond = conditional_cdf_[static_cast<size_t>(draw(prior_cdf_, rng))];
  const int x = draw(cond, rng);
  const int x_pos = draw(cond, rng);
  return {x, x_pos};
}

int PairSampler::sample_negative(Rng& rng) const { return draw(marginal_cdf_, rng); }

TwoViewModel::TwoViewModel(Vector class_prior, Matrix visual_conditional, Matrix language_conditional)
    : visual_(class_prior, std::move(visual_conditional)),
      language_(std::move(class_prior), std::move(language_conditional)) {
  joint_ = kernels::parallel::cross_cooccurrence(visual_.class_prior(), visual_.conditional(),
                                                 language_.conditional());
  normalized_ = visual_.marginal().cwiseSqrt().cwiseInverse().asDiagonal() * joint_ *
                language_.marginal().cwiseSqrt().cwiseInverse().asDiagonal();
}

TwoViewModel build_one_hot_two_view(int num_classes, int per_class_visual, int per_class_language) {
  require(num_classes >= 1 && per_class_visual >= 1 && per_class_language >= 1, Errc::DimensionMismatch,
          "two-view model sizes must be positive");
  const Vector prior = Vector::Constant(num_classes, 1.0 / num_classes);
  return TwoViewModel(prior, one_hot_conditional(num_classes, num_classes * per_class_visual),
                      one_hot_conditional(num_classes, num_classes * per_class_language));
}

}  // namespace ncl
