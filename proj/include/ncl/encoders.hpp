#pragma once

#include "ncl/reparam.hpp"
#include "ncl/types.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ncl {

/// Parameter-shaped gradients (and the parameters themselves): one matrix per
/// block, biases stored as column vectors.
using ParamBundle = std::vector<Matrix>;

/// Feature map from sample indices to R^k, optionally followed by a
/// non-negative output transform.
///
/// `encode` caches the forward state of one batch; `grad_params` consumes it.
/// Any write through `mutable_params` invalidates the cache.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::string kind() const = 0;
  virtual int num_samples() const = 0;
  virtual int output_dim() const = 0;
  /// Layer widths; {N, k} for tabular encoders.
  virtual std::vector<int> layer_sizes() const = 0;

  virtual FeatureTable encode(std::span<const int> indices) = 0;
  /// Same output as encode, leaves the cache alone.
  virtual FeatureTable evaluate(std::span<const int> indices) const = 0;
  /// Reverse-mode gradient of sum(upstream .* output) for the cached batch.
  /// Throws StaleForwardState when no matching forward state exists.
  virtual ParamBundle grad_params(const Matrix& upstream) const = 0;
  virtual std::unique_ptr<Encoder> clone() const = 0;

  FeatureTable encode_all();
  FeatureTable evaluate_all() const;

  const ParamBundle& params() const { return params_; }
  ParamBundle& mutable_params() {
    ++version_;
    return params_;
  }
  std::size_t parameter_count() const;

  const std::optional<NonNegTransform>& transform() const { return transform_; }
  std::uint64_t seed() const { return seed_; }

 protected:
  Encoder(std::optional<NonNegTransform> transform, std::uint64_t seed)
      : transform_(transform), seed_(seed) {}

  void check_indices(std::span<const int> indices) const;
  Matrix apply_transform(const Matrix& z) const;
  Matrix back_transform(const Matrix& z, const Matrix& upstream) const;

  ParamBundle params_;
  std::uint64_t version_ = 0;
  std::optional<NonNegTransform> transform_;
  std::uint64_t seed_;
};

/// One learnable row per sample: f(x) = sigma(W[x]).
class TabularEncoder final : public Encoder {
 public:
  /// Weights ~ U(0, 1/sqrt(k)) with a transform, N(0, 1/sqrt(k)) without.
  TabularEncoder(int num_samples, int dims, std::optional<NonNegTransform> transform, std::uint64_t seed);
  TabularEncoder(Matrix weights, std::optional<NonNegTransform> transform, std::uint64_t seed = 0);

  std::string kind() const override { return "tabular"; }
  int num_samples() const override { return static_cast<int>(params_[0].rows()); }
  int output_dim() const override { return static_cast<int>(params_[0].cols()); }
  std::vector<int> layer_sizes() const override { return {num_samples(), output_dim()}; }

  FeatureTable encode(std::span<const int> indices) override;
  FeatureTable evaluate(std::span<const int> indices) const override;
  ParamBundle grad_params(const Matrix& upstream) const override;
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<TabularEncoder>(*this); }

  const Matrix& weights() const { return params_[0]; }

 private:
  struct Cache {
    std::vector<int> indices;
    Matrix preact;
    std::uint64_t version;
  };
  std::optional<Cache> cache_;
};

/// Fully connected GELU network over a per-sample coordinate embedding
/// (one-hot of the index by default). The last layer is the projector; its
/// input is exposed as the pre-projector tap.
class MlpEncoder final : public Encoder {
 public:
  /// layer_sizes = {d_in, h_1, ..., k}; weights ~ N(0, 1/fan_in).
  MlpEncoder(std::vector<int> layer_sizes, std::optional<NonNegTransform> transform, std::uint64_t seed,
             std::optional<Matrix> embedding = std::nullopt);

  std::string kind() const override { return "mlp"; }
  int num_samples() const override { return static_cast<int>(embedding_.rows()); }
  int output_dim() const override { return sizes_.back(); }
  std::vector<int> layer_sizes() const override { return sizes_; }

  FeatureTable encode(std::span<const int> indices) override;
  FeatureTable evaluate(std::span<const int> indices) const override;
  ParamBundle grad_params(const Matrix& upstream) const override;
  std::unique_ptr<Encoder> clone() const override { return std::make_unique<MlpEncoder>(*this); }

  /// Encodes raw coordinates (B x d_in) and caches the forward state.
  FeatureTable encode_coordinates(const Matrix& inputs);
  FeatureTable evaluate_coordinates(const Matrix& inputs) const;
  /// Activations feeding the final layer.
  Matrix pre_projector(std::span<const int> indices) const;

  const Matrix& embedding() const { return embedding_; }
  bool default_embedding() const { return default_embedding_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }

 private:
  struct Forward {
    std::vector<Matrix> inputs;   // input of each layer
    std::vector<Matrix> preacts;  // pre-activation of each layer
    Matrix output;
  };
  Forward run(const Matrix& inputs) const;
  Matrix gather(std::span<const int> indices) const;

  std::vector<int> sizes_;
  Matrix embedding_;
  bool default_embedding_;
  std::optional<Forward> cache_;
  std::uint64_t cache_version_ = 0;
};

/// Number of dimensions whose magnitude stays <= `threshold` on every row.
int dead_dimensions(const Matrix& features, double threshold = 1e-5);

}  // namespace ncl
