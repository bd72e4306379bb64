#pragma once

#include <array>
#include <memory>
#include <span>
#include <vector>

#include "sfk/model/config.hpp"
#include "sfk/model/layers.hpp"

namespace sfk::model {

/// One preprocessed clip laid out as (channels=3, time, height, width).
class ClipTensor {
 public:
  ClipTensor() = default;
  ClipTensor(std::int64_t time, std::int64_t height, std::int64_t width);
  explicit ClipTensor(Tensor data);

  std::int64_t time() const { return data_.dim(1); }
  std::int64_t height() const { return data_.dim(2); }
  std::int64_t width() const { return data_.dim(3); }
  Real& at(std::int64_t c, std::int64_t t, std::int64_t h, std::int64_t w) {
    return data_[((c * time() + t) * height() + h) * width() + w];
  }
  Real at(std::int64_t c, std::int64_t t, std::int64_t h, std::int64_t w) const {
    return data_[((c * time() + t) * height() + h) * width() + w];
  }
  const Tensor& tensor() const { return data_; }
  Tensor& tensor() { return data_; }

 private:
  Tensor data_;
};

/// Stacks clips into a (N, 3, T, H, W) batch.
Tensor stack_clips(std::span<const ClipTensor> clips);

/// Frames offset, offset+stride, ... of a clip. Rejects strides that do not divide the clip length.
ClipTensor sample_pathway_frames(const ClipTensor& clip, int stride, int offset);
/// Batched form over dimension 2 of a (N, C, T, H, W) tensor.
Tensor sample_frames(const Tensor& batch, int stride, int offset);

struct LogitVector {
  std::vector<Real> scores;
  bool normalized = false;
};

std::vector<Real> softmax(std::span<const Real> logits);

struct LossResult {
  Real loss = 0;
  /// d(mean loss)/d(logits), same shape as the logits.
  Tensor grad;
};

/// Mean softmax cross-entropy over the batch.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Fast-to-slow fusion: temporal convolution (kernel k x1x1, temporal stride
/// alpha) + BN + ReLU on the fast features, then concatenation with or
/// addition to the slow features.
class LateralConnection {
 public:
  LateralConnection(const std::string& name, int fast_channels, int out_channels, int alpha, int temporal_kernel,
                    FusionKind kind, Rng& rng);

  /// Lateral transform for fusion point `stage` (0 = after the stem) of `config`.
  static LateralConnection for_stage(const SlowFastConfig& config, std::size_t stage, Rng& rng);

  Tensor fuse(const Tensor& fast, const Tensor& slow) const;
  Tensor forward(const Tensor& fast, const Tensor& slow, bool training);
  /// Returns (grad wrt fast, grad wrt slow).
  std::pair<Tensor, Tensor> backward(const Tensor& grad_fused);

  void zero_init() { conv_.zero_init(); }
  void collect(std::vector<Parameter*>& out);
  void release_cache();
  int out_channels() const { return conv_.out_channels(); }
  FusionKind kind() const { return kind_; }

 private:
  void check(const Tensor& fast, const Tensor& slow) const;

  Conv3d conv_;
  BatchNorm3d bn_;
  ReLU relu_;
  int alpha_;
  FusionKind kind_;
  std::int64_t slow_channels_ = 0;
};

/// Final pre-pool features and pathway inputs of one inference pass.
struct ForwardTrace {
  Shape slow_input;
  Shape fast_input;
  Tensor slow_features;
  Tensor fast_features;
  Tensor logits;
};

class SlowFastNetwork {
 public:
  SlowFastNetwork(const SlowFastConfig& config, std::uint64_t seed);

  const SlowFastConfig& config() const { return config_; }

  /// Raw logits (N, K) for a (N, 3, T, H, W) batch; no state is touched.
  Tensor infer(const Tensor& clips) const;
  ForwardTrace trace(const Tensor& clips) const;
  LogitVector predict(const ClipTensor& clip, bool normalized = true) const;

  /// Training-path forward; keeps activations for `backward`.
  Tensor forward(const Tensor& clips, bool training);
  /// Accumulates parameter gradients and returns the gradient wrt the input clips.
  Tensor backward(const Tensor& grad_logits);

  std::vector<Parameter*> parameters();
  Parameter* find_parameter(const std::string& name);
  void zero_grad();
  void release_cache();

  void set_dropout_rate(double rate) { dropout_.set_rate(rate); }
  double dropout_rate() const { return dropout_.rate(); }
  void reseed_dropout(std::uint64_t seed) { dropout_.reseed(seed); }

  LateralConnection& lateral(std::size_t i) { return *laterals_.at(i); }

 private:
  void check_geometry(const Tensor& clips) const;

  SlowFastConfig config_;
  Sequential slow_stem_;
  Sequential fast_stem_;
  std::array<Sequential, kResidualStageCount> slow_stages_;
  std::array<Sequential, kResidualStageCount> fast_stages_;
  std::vector<std::unique_ptr<LateralConnection>> laterals_;
  GlobalAvgPool slow_pool_;
  GlobalAvgPool fast_pool_;
  Dropout dropout_;
  std::unique_ptr<Linear> head_;
  std::int64_t slow_pooled_channels_ = 0;
  Shape input_shape_;
};

/// Validates the config and builds a freshly initialized network.
std::unique_ptr<SlowFastNetwork> build_slowfast(const SlowFastConfig& config, std::uint64_t seed);

}  // namespace sfk::model
