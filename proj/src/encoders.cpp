#include "ncl/encoders.hpp"

#include "ncl/error.hpp"
#include "ncl/latent_model.hpp"

#include <cmath>
#include <numeric>
#include <random>

namespace ncl {

namespace {

std::vector<int> iota_indices(int n) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

FeatureTable Encoder::encode_all() {
  const auto idx = iota_indices(num_samples());
  return encode(idx);
}

FeatureTable Encoder::evaluate_all() const {
  const auto idx = iota_indices(num_samples());
  return evaluate(idx);
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

void Encoder::check_indices(std::span<const int> indices) const {
  const int n = num_samples();
  for (int i : indices)
    require(i >= 0 && i < n, Errc::IndexOutOfRange,
            "sample index " + std::to_string(i) + " outside 0.." + std::to_string(n - 1));
}

Matrix Encoder::apply_transform(const Matrix& z) const { return transform_ ? forward(*transform_, z) : z; }

Matrix Encoder::back_transform(const Matrix& z, const Matrix& upstream) const {
  return transform_ ? backward(*transform_, z, upstream) : upstream;
}

// ---- tabular ----------------------------------------------------------------

TabularEncoder::TabularEncoder(int num_samples, int dims, std::optional<NonNegTransform> transform,
                               std::uint64_t seed)
    : Encoder(transform, seed) {
  require(num_samples >= 1 && dims >= 1, Errc::ShapeMismatch, "tabular encoder needs N, k >= 1");
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dims));
  Matrix w(num_samples, dims);
  if (transform) {
    std::uniform_real_distribution<double> u(0.0, scale);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  } else {
    std::normal_distribution<double> g(0.0, scale);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = g(rng);
  }
  params_.push_back(std::move(w));
}

TabularEncoder::TabularEncoder(Matrix weights, std::optional<NonNegTransform> transform, std::uint64_t seed)
    : Encoder(transform, seed) {
  require(weights.rows() >= 1 && weights.cols() >= 1, Errc::ShapeMismatch, "empty tabular weights");
  params_.push_back(std::move(weights));
}

FeatureTable TabularEncoder::evaluate(std::span<const int> indices) const {
  check_indices(indices);
  Matrix z(static_cast<Eigen::Index>(indices.size()), output_dim());
  for (size_t r = 0; r < indices.size(); ++r) z.row(static_cast<Eigen::Index>(r)) = params_[0].row(indices[r]);
  return FeatureTable(apply_transform(z), transform_.has_value());
}

FeatureTable TabularEncoder::encode(std::span<const int> indices) {
  check_indices(indices);
  Cache c{std::vector<int>(indices.begin(), indices.end()), Matrix(static_cast<Eigen::Index>(indices.size()), output_dim()),
          version_};
  for (size_t r = 0; r < indices.size(); ++r) c.preact.row(static_cast<Eigen::Index>(r)) = params_[0].row(indices[r]);
  FeatureTable out(apply_transform(c.preact), transform_.has_value());
  cache_ = std::move(c);
  return out;
}

ParamBundle TabularEncoder::grad_params(const Matrix& upstream) const {
  require(cache_ && cache_->version == version_, Errc::StaleForwardState, "no forward state for current parameters");
  require(upstream.rows() == cache_->preact.rows() && upstream.cols() == cache_->preact.cols(),
          Errc::StaleForwardState, "upstream gradient does not match the cached batch");
  const Matrix g = back_transform(cache_->preact, upstream);
  Matrix out = Matrix::Zero(params_[0].rows(), params_[0].cols());
  for (size_t r = 0; r < cache_->indices.size(); ++r) out.row(cache_->indices[r]) += g.row(static_cast<Eigen::Index>(r));
  return {std::move(out)};
}

// ---- mlp --------------------------------------------------------------------

MlpEncoder::MlpEncoder(std::vector<int> layer_sizes, std::optional<NonNegTransform> transform, std::uint64_t seed,
                       std::optional<Matrix> embedding)
    : Encoder(transform, seed), sizes_(std::move(layer_sizes)), default_embedding_(!embedding) {
  require(sizes_.size() >= 2, Errc::ShapeMismatch, "MLP needs at least input and output sizes");
  for (int s : sizes_) require(s >= 1, Errc::ShapeMismatch, "layer sizes must be positive");
  if (embedding) {
    require(embedding->cols() == sizes_.front(), Errc::ShapeMismatch, "embedding width != d_in");
    embedding_ = std::move(*embedding);
  } else {
    embedding_ = Matrix::Identity(sizes_.front(), sizes_.front());
  }
  Rng rng(seed);
  for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
    std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(sizes_[l])));
    Matrix w(sizes_[l], sizes_[l + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = g(rng);
    params_.push_back(std::move(w));
    params_.push_back(Matrix::Zero(sizes_[l + 1], 1));
  }
}

Matrix MlpEncoder::gather(std::span<const int> indices) const {
  check_indices(indices);
  Matrix x(static_cast<Eigen::Index>(indices.size()), embedding_.cols());
  for (size_t r = 0; r < indices.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = embedding_.row(indices[r]);
  return x;
}

MlpEncoder::Forward MlpEncoder::run(const Matrix& inputs) const {
  require(inputs.cols() == sizes_.front(), Errc::ShapeMismatch,
          "coordinate width " + std::to_string(inputs.cols()) + " != d_in " + std::to_string(sizes_.front()));
  Forward f;
  Matrix h = inputs;
  const int layers = num_layers();
  for (int l = 0; l < layers; ++l) {
    const Matrix& w = params_[static_cast<size_t>(2 * l)];
    const Matrix& b = params_[static_cast<size_t>(2 * l + 1)];
    Matrix z = h * w;
    z.rowwise() += b.col(0).transpose();
    f.inputs.push_back(h);
    f.preacts.push_back(z);
    h = (l + 1 < layers) ? Matrix(z.unaryExpr([](double v) { return gelu(v); })) : z;
  }
  f.output = apply_transform(h);
  return f;
}

FeatureTable MlpEncoder::encode_coordinates(const Matrix& inputs) {
  Forward f = run(inputs);
  FeatureTable out(f.output, transform_.has_value());
  cache_ = std::move(f);
  cache_version_ = version_;
  return out;
}

FeatureTable MlpEncoder::evaluate_coordinates(const Matrix& inputs) const {
  return FeatureTable(run(inputs).output, transform_.has_value());
}

FeatureTable MlpEncoder::encode(std::span<const int> indices) { return encode_coordinates(gather(indices)); }

FeatureTable MlpEncoder::evaluate(std::span<const int> indices) const { return evaluate_coordinates(gather(indices)); }

Matrix MlpEncoder::pre_projector(std::span<const int> indices) const {
  return run(gather(indices)).inputs.back();
}

ParamBundle MlpEncoder::grad_params(const Matrix& upstream) const {
  require(cache_ && cache_version_ == version_, Errc::StaleForwardState, "no forward state for current parameters");
  require(upstream.rows() == cache_->output.rows() && upstream.cols() == cache_->output.cols(),
          Errc::StaleForwardState, "upstream gradient does not match the cached batch");
  const int layers = num_layers();
  ParamBundle grads(params_.size());
  Matrix g = back_transform(cache_->preacts.back(), upstream);
  for (int l = layers - 1; l >= 0; --l) {
    const auto li = static_cast<size_t>(l);
    grads[2 * li] = cache_->inputs[li].transpose() * g;
    grads[2 * li + 1] = g.colwise().sum().transpose();
    if (l > 0) {
      Matrix prev = g * params_[2 * li].transpose();
      g = prev.cwiseProduct(cache_->preacts[li - 1].unaryExpr([](double v) { return gelu_derivative(v); }));
    }
  }
  return grads;
}

int dead_dimensions(const Matrix& features, double threshold) {
  int dead = 0;
  for (Eigen::Index j = 0; j < features.cols(); ++j)
    if (features.rows() == 0 || features.col(j).cwiseAbs().maxCoeff() <= threshold) ++dead;
  return dead;
}

}  // namespace ncl
