#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "sfk/rng.hpp"
#include "sfk/tensor.hpp"

namespace sfk::model {

/// Learnable weight or persistent buffer. Buffers (running statistics) are
/// checkpointed but never updated by the optimizer.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;
  bool decay = true;
};

/// Layers keep the activations of the most recent `forward` for `backward`;
/// `infer` is const and touches no state, so it may run concurrently.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor infer(const Tensor& x) const = 0;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect(std::vector<Parameter*>& out) { (void)out; }
  virtual void release_cache() {}
};

struct Extent3 {
  int t = 1;
  int h = 1;
  int w = 1;
};

class Conv3d final : public Layer {
 public:
  Conv3d(std::string name, int in_channels, int out_channels, Extent3 kernel, Extent3 stride, Extent3 padding,
         bool bias = false);

  /// Kaiming-normal with fan-out = out_channels * kernel volume.
  void init_fan_out(Rng& rng);
  void zero_init();

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  void release_cache() override { input_ = Tensor(); }

  Shape output_shape(const Shape& in) const;
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter& weight() { return weight_; }

 private:
  int in_;
  int out_;
  Extent3 k_;
  Extent3 s_;
  Extent3 p_;
  bool has_bias_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

class BatchNorm3d final : public Layer {
 public:
  BatchNorm3d(std::string name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  void release_cache() override { normalized_ = Tensor(); }

  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Parameter& running_mean() { return running_mean_; }
  Parameter& running_var() { return running_var_; }

 private:
  int channels_;
  double momentum_;
  double eps_;
  Parameter gamma_;
  Parameter beta_;
  Parameter running_mean_;
  Parameter running_var_;
  Tensor normalized_;
  std::vector<Real> inv_std_;
  bool batch_stats_ = false;
};

class ReLU final : public Layer {
 public:
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void release_cache() override { output_ = Tensor(); }

 private:
  Tensor output_;
};

/// Spatial max pooling, kernel (1,3,3), stride (1,2,2), padding (0,1,1).
class MaxPool3d final : public Layer {
 public:
  MaxPool3d(Extent3 kernel, Extent3 stride, Extent3 padding);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void release_cache() override { argmax_.clear(); }

 private:
  Tensor pool(const Tensor& x, std::vector<std::int64_t>* argmax) const;

  Extent3 k_;
  Extent3 s_;
  Extent3 p_;
  Shape input_shape_;
  std::vector<std::int64_t> argmax_;
};

/// Ordered chain of layers.
class Sequential final : public Layer {
 public:
  Sequential() = default;
  template <typename L>
  L& add(std::unique_ptr<L> layer) {
    auto& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  void release_cache() override;

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Inflated ResNet bottleneck: (kt x1x1) -> (1x3x3, spatial stride) -> (1x1x1), identity or projection shortcut.
class Bottleneck final : public Layer {
 public:
  Bottleneck(const std::string& name, int in_channels, int inner_channels, int out_channels, int temporal_kernel,
             int spatial_stride, Rng& rng);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  void release_cache() override;

 private:
  Sequential branch_;
  std::unique_ptr<Sequential> shortcut_;
  ReLU out_relu_;
};

/// Mean over (T, H, W): (N, C, T, H, W) -> (N, C).
class GlobalAvgPool final : public Layer {
 public:
  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Shape input_shape_;
};

/// Inverted dropout on (N, F); identity outside training.
class Dropout final : public Layer {
 public:
  Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {}
  void set_rate(double rate);
  double rate() const { return rate_; }
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

  Tensor infer(const Tensor& x) const override { return x; }
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  double rate_;
  Rng rng_;
  std::vector<Real> mask_;
};

/// (N, F) -> (N, K).
class Linear final : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features);
  void init_normal(Rng& rng, double stddev);

  Tensor infer(const Tensor& x) const override;
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect(std::vector<Parameter*>& out) override;
  void release_cache() override { input_ = Tensor(); }

 private:
  int in_;
  int out_;
  Parameter weight_;
  Parameter bias_;
  Tensor input_;
};

/// Concatenates two (N, C_i, T, H, W) tensors along channels.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits a gradient produced for `concat_channels` back into its two parts.
std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::int64_t first_channels);

}  // namespace sfk::model
