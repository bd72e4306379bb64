#include "sfk/model/slowfast.hpp"

#include <algorithm>
#include <cmath>

#include "sfk/error.hpp"

namespace sfk::model {

ClipTensor::ClipTensor(std::int64_t time, std::int64_t height, std::int64_t width) : data_({3, time, height, width}) {}

ClipTensor::ClipTensor(Tensor data) : data_(std::move(data)) {
  if (data_.rank() != 4 || data_.dim(0) != 3) {
    throw StructuralError("clip tensor must be (3, T, H, W), got " + shape_string(data_.shape()));
  }
}

Tensor stack_clips(std::span<const ClipTensor> clips) {
  if (clips.empty()) throw StructuralError("cannot stack an empty clip list");
  const Shape& first = clips.front().tensor().shape();
  Shape shape{static_cast<std::int64_t>(clips.size())};
  shape.insert(shape.end(), first.begin(), first.end());
  Tensor out(shape);
  const std::int64_t per = clips.front().tensor().numel();
  for (std::size_t i = 0; i < clips.size(); ++i) {
    if (clips[i].tensor().shape() != first) {
      throw StructuralError("clip " + std::to_string(i) + " has shape " + shape_string(clips[i].tensor().shape()) +
                            ", expected " + shape_string(first));
    }
    std::copy_n(clips[i].tensor().data(), per, out.data() + static_cast<std::int64_t>(i) * per);
  }
  return out;
}

namespace {

void check_sampling(std::int64_t time, int stride, int offset) {
  if (stride < 1) throw StructuralError("temporal stride must be >= 1, got " + std::to_string(stride));
  if (offset < 0 || offset >= stride) {
    throw StructuralError("frame offset " + std::to_string(offset) + " must lie in [0, " + std::to_string(stride) + ")");
  }
  if (time % stride != 0) {
    throw StructuralError("temporal stride " + std::to_string(stride) + " does not divide clip length " +
                          std::to_string(time));
  }
}

// Copies frames t = offset + k*stride along dimension `time_dim`.
Tensor gather_frames(const Tensor& x, std::size_t time_dim, int stride, int offset) {
  const std::int64_t time = x.dim(time_dim);
  check_sampling(time, stride, offset);
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < time_dim; ++i) outer *= x.dim(i);
  std::int64_t inner = 1;
  for (std::size_t i = time_dim + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t out_time = time / stride;
  Shape shape = x.shape();
  shape[time_dim] = out_time;
  Tensor out(shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t k = 0; k < out_time; ++k) {
      const std::int64_t t = offset + k * stride;
      std::copy_n(x.data() + (o * time + t) * inner, inner, out.data() + (o * out_time + k) * inner);
    }
  }
  return out;
}

void scatter_frames_add(const Tensor& grad, int stride, int offset, Tensor& dx) {
  const std::int64_t time = dx.dim(2);
  const std::int64_t out_time = grad.dim(2);
  const std::int64_t outer = dx.dim(0) * dx.dim(1);
  const std::int64_t inner = dx.dim(3) * dx.dim(4);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t k = 0; k < out_time; ++k) {
      const Real* src = grad.data() + (o * out_time + k) * inner;
      Real* dst = dx.data() + (o * time + offset + k * stride) * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
}

}  // namespace

ClipTensor sample_pathway_frames(const ClipTensor& clip, int stride, int offset) {
  return ClipTensor(gather_frames(clip.tensor(), 1, stride, offset));
}

Tensor sample_frames(const Tensor& batch, int stride, int offset) {
  require_rank(batch, 5, "sample_frames");
  return gather_frames(batch, 2, stride, offset);
}

std::vector<Real> softmax(std::span<const Real> logits) {
  std::vector<Real> out(logits.begin(), logits.end());
  if (out.empty()) return out;
  const Real max = *std::max_element(out.begin(), out.end());
  Real sum = 0;
  for (auto& v : out) {
    v = std::exp(v - max);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::int64_t batch = logits.dim(0);
  const std::int64_t classes = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != batch) {
    throw StructuralError("cross entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                          std::to_string(batch));
  }
  LossResult r;
  r.grad = Tensor(logits.shape());
  for (std::int64_t n = 0; n < batch; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= classes) throw StructuralError("cross entropy: label " + std::to_string(label) + " out of range");
    const auto p = softmax(std::span<const Real>(logits.data() + n * classes, static_cast<std::size_t>(classes)));
    r.loss -= std::log(std::max(p[static_cast<std::size_t>(label)], 1e-300));
    for (std::int64_t k = 0; k < classes; ++k) {
      r.grad[n * classes + k] = (p[static_cast<std::size_t>(k)] - (k == label ? 1.0 : 0.0)) / static_cast<Real>(batch);
    }
  }
  r.loss /= static_cast<Real>(batch);
  return r;
}

// ---------------------------------------------------------------------------
// LateralConnection

LateralConnection::LateralConnection(const std::string& name, int fast_channels, int out_channels, int alpha,
                                     int temporal_kernel, FusionKind kind, Rng& rng)
    : conv_(name + ".conv", fast_channels, out_channels, Extent3{temporal_kernel, 1, 1}, Extent3{alpha, 1, 1},
            Extent3{temporal_kernel / 2, 0, 0}),
      bn_(name + ".bn", out_channels),
      alpha_(alpha),
      kind_(kind) {
  conv_.init_fan_out(rng);
}

LateralConnection LateralConnection::for_stage(const SlowFastConfig& config, std::size_t stage, Rng& rng) {
  const auto plan = config.channel_plan();
  if (stage + 1 >= kStageCount) throw ConfigError("no lateral connection follows stage " + std::to_string(stage));
  return LateralConnection("lateral" + std::to_string(stage), plan[stage].fast_out, plan[stage].lateral_out,
                           config.alpha, config.fusion_temporal_kernel, config.fusion_kind, rng);
}

void LateralConnection::check(const Tensor& fast, const Tensor& slow) const {
  require_rank(fast, 5, "lateral fast input");
  require_rank(slow, 5, "lateral slow input");
  if (fast.dim(0) != slow.dim(0)) throw StructuralError("lateral: batch sizes differ");
  if (fast.dim(2) != alpha_ * slow.dim(2)) {
    throw StructuralError("lateral: fast time " + std::to_string(fast.dim(2)) + " != alpha (" + std::to_string(alpha_) +
                          ") x slow time " + std::to_string(slow.dim(2)));
  }
  if (fast.dim(3) != slow.dim(3) || fast.dim(4) != slow.dim(4)) {
    throw StructuralError("lateral: spatial extents differ, fast " + shape_string(fast.shape()) + " vs slow " +
                          shape_string(slow.shape()));
  }
  if (fast.dim(1) != conv_.in_channels()) {
    throw StructuralError("lateral: expected " + std::to_string(conv_.in_channels()) + " fast channels, got " +
                          std::to_string(fast.dim(1)));
  }
  if (kind_ == FusionKind::kSum && slow.dim(1) != conv_.out_channels()) {
    throw StructuralError("lateral: sum fusion needs " + std::to_string(conv_.out_channels()) + " slow channels, got " +
                          std::to_string(slow.dim(1)));
  }
}

Tensor LateralConnection::fuse(const Tensor& fast, const Tensor& slow) const {
  check(fast, slow);
  Tensor t = relu_.infer(bn_.infer(conv_.infer(fast)));
  if (kind_ == FusionKind::kConcatenate) return concat_channels(slow, t);
  t.add_(slow);
  return t;
}

Tensor LateralConnection::forward(const Tensor& fast, const Tensor& slow, bool training) {
  check(fast, slow);
  slow_channels_ = slow.dim(1);
  Tensor t = relu_.forward(bn_.forward(conv_.forward(fast, training), training), training);
  if (kind_ == FusionKind::kConcatenate) return concat_channels(slow, t);
  t.add_(slow);
  return t;
}

std::pair<Tensor, Tensor> LateralConnection::backward(const Tensor& grad_fused) {
  Tensor grad_slow;
  Tensor grad_t;
  if (kind_ == FusionKind::kConcatenate) {
    std::tie(grad_slow, grad_t) = split_channels(grad_fused, slow_channels_);
  } else {
    grad_slow = grad_fused;
    grad_t = grad_fused;
  }
  Tensor grad_fast = conv_.backward(bn_.backward(relu_.backward(grad_t)));
  return {std::move(grad_fast), std::move(grad_slow)};
}

void LateralConnection::collect(std::vector<Parameter*>& out) {
  conv_.collect(out);
  bn_.collect(out);
}

void LateralConnection::release_cache() {
  conv_.release_cache();
  bn_.release_cache();
  relu_.release_cache();
}

// ---------------------------------------------------------------------------
// SlowFastNetwork

namespace {

void build_stem(Sequential& stem, const std::string& name, int out_channels, bool temporal, Rng& rng) {
  const int kt = temporal ? 5 : 1;
  auto& conv = stem.add(std::make_unique<Conv3d>(name + ".conv", 3, out_channels, Extent3{kt, 7, 7}, Extent3{1, 2, 2},
                                                 Extent3{kt / 2, 3, 3}));
  conv.init_fan_out(rng);
  stem.add(std::make_unique<BatchNorm3d>(name + ".bn", out_channels));
  stem.add(std::make_unique<ReLU>());
  stem.add(std::make_unique<MaxPool3d>(Extent3{1, 3, 3}, Extent3{1, 2, 2}, Extent3{0, 1, 1}));
}

void build_stage(Sequential& stage, const std::string& name, int blocks, int in, int inner, int out, bool temporal,
                 int spatial_stride, Rng& rng) {
  const int kt = temporal ? 3 : 1;
  for (int b = 0; b < blocks; ++b) {
    stage.add(std::make_unique<Bottleneck>(name + "." + std::to_string(b), b == 0 ? in : out, inner, out, kt,
                                           b == 0 ? spatial_stride : 1, rng));
  }
}

}  // namespace

SlowFastNetwork::SlowFastNetwork(const SlowFastConfig& config, std::uint64_t seed)
    : config_(config), dropout_(0.5, mix_seed(seed, 0xD80F)) {
  config_.validate();
  Rng rng(seed);
  const auto plan = config_.channel_plan();
  build_stem(slow_stem_, "slow.stem", plan[0].slow_out, config_.slow.temporal_kernel_plan[0], rng);
  build_stem(fast_stem_, "fast.stem", plan[0].fast_out, config_.fast.temporal_kernel_plan[0], rng);
  constexpr std::array<int, kResidualStageCount> kSpatialStride{1, 2, 2, 2};
  for (std::size_t s = 0; s + 1 < kStageCount; ++s) {
    laterals_.push_back(std::make_unique<LateralConnection>(LateralConnection::for_stage(config_, s, rng)));
  }
  for (std::size_t i = 0; i < kResidualStageCount; ++i) {
    const auto& st = plan[i + 1];
    build_stage(slow_stages_[i], "slow.res" + std::to_string(i + 2), config_.backbone_depth[i], st.slow_in,
                st.slow_inner, st.slow_out, config_.slow.temporal_kernel_plan[i + 1], kSpatialStride[i], rng);
    build_stage(fast_stages_[i], "fast.res" + std::to_string(i + 2), config_.backbone_depth[i], st.fast_in,
                st.fast_inner, st.fast_out, config_.fast.temporal_kernel_plan[i + 1], kSpatialStride[i], rng);
  }
  slow_pooled_channels_ = plan[kStageCount - 1].slow_out;
  head_ = std::make_unique<Linear>("head.fc", config_.head_features(), config_.num_classes);
  head_->init_normal(rng, 0.01);
}

void SlowFastNetwork::check_geometry(const Tensor& clips) const {
  const Shape expected{clips.rank() == 5 ? clips.dim(0) : 1, 3, config_.clip_len, config_.crop_size, config_.crop_size};
  if (clips.rank() != 5 || clips.shape() != expected) {
    throw StructuralError("network expects clips of shape (N,3," + std::to_string(config_.clip_len) + "," +
                          std::to_string(config_.crop_size) + "," + std::to_string(config_.crop_size) + "), got " +
                          shape_string(clips.shape()));
  }
}

ForwardTrace SlowFastNetwork::trace(const Tensor& clips) const {
  check_geometry(clips);
  ForwardTrace tr;
  const Tensor xs = sample_frames(clips, config_.slow.temporal_stride, 0);
  const Tensor xf = sample_frames(clips, config_.fast.temporal_stride, 0);
  tr.slow_input = xs.shape();
  tr.fast_input = xf.shape();
  Tensor s = slow_stem_.infer(xs);
  Tensor f = fast_stem_.infer(xf);
  s = laterals_[0]->fuse(f, s);
  for (std::size_t i = 0; i < kResidualStageCount; ++i) {
    s = slow_stages_[i].infer(s);
    f = fast_stages_[i].infer(f);
    if (i + 1 < kResidualStageCount) s = laterals_[i + 1]->fuse(f, s);
  }
  const Tensor pooled = concat_channels(slow_pool_.infer(s), fast_pool_.infer(f));
  tr.logits = head_->infer(dropout_.infer(pooled));
  tr.slow_features = std::move(s);
  tr.fast_features = std::move(f);
  return tr;
}

Tensor SlowFastNetwork::infer(const Tensor& clips) const { return trace(clips).logits; }

LogitVector SlowFastNetwork::predict(const ClipTensor& clip, bool normalized) const {
  const Tensor logits = infer(stack_clips(std::span<const ClipTensor>(&clip, 1)));
  LogitVector out;
  out.scores.assign(logits.values().begin(), logits.values().end());
  if (normalized) out.scores = softmax(out.scores);
  out.normalized = normalized;
  return out;
}

Tensor SlowFastNetwork::forward(const Tensor& clips, bool training) {
  check_geometry(clips);
  input_shape_ = clips.shape();
  Tensor s = slow_stem_.forward(sample_frames(clips, config_.slow.temporal_stride, 0), training);
  Tensor f = fast_stem_.forward(sample_frames(clips, config_.fast.temporal_stride, 0), training);
  s = laterals_[0]->forward(f, s, training);
  for (std::size_t i = 0; i < kResidualStageCount; ++i) {
    s = slow_stages_[i].forward(s, training);
    f = fast_stages_[i].forward(f, training);
    if (i + 1 < kResidualStageCount) s = laterals_[i + 1]->forward(f, s, training);
  }
  Tensor pooled = concat_channels(slow_pool_.forward(s, training), fast_pool_.forward(f, training));
  return head_->forward(dropout_.forward(pooled, training), training);
}

Tensor SlowFastNetwork::backward(const Tensor& grad_logits) {
  if (input_shape_.empty()) throw StructuralError("backward called before forward");
  const Tensor g = dropout_.backward(head_->backward(grad_logits));
  auto [g_slow_pooled, g_fast_pooled] = split_channels(g, slow_pooled_channels_);
  Tensor gs = slow_pool_.backward(g_slow_pooled);
  Tensor gf = fast_pool_.backward(g_fast_pooled);
  for (std::size_t i = kResidualStageCount; i-- > 0;) {
    if (i + 1 < kResidualStageCount) {
      auto [gf_lateral, gs_prev] = laterals_[i + 1]->backward(gs);
      gf.add_(gf_lateral);
      gs = std::move(gs_prev);
    }
    gs = slow_stages_[i].backward(gs);
    gf = fast_stages_[i].backward(gf);
  }
  auto [gf_lateral, gs_stem] = laterals_[0]->backward(gs);
  gf.add_(gf_lateral);
  const Tensor gxs = slow_stem_.backward(gs_stem);
  const Tensor gxf = fast_stem_.backward(gf);
  Tensor dx(input_shape_, 0.0);
  scatter_frames_add(gxs, config_.slow.temporal_stride, 0, dx);
  scatter_frames_add(gxf, config_.fast.temporal_stride, 0, dx);
  return dx;
}

std::vector<Parameter*> SlowFastNetwork::parameters() {
  std::vector<Parameter*> out;
  slow_stem_.collect(out);
  fast_stem_.collect(out);
  for (auto& l : laterals_) l->collect(out);
  for (auto& s : slow_stages_) s.collect(out);
  for (auto& s : fast_stages_) s.collect(out);
  head_->collect(out);
  return out;
}

Parameter* SlowFastNetwork::find_parameter(const std::string& name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void SlowFastNetwork::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(0.0);
}

void SlowFastNetwork::release_cache() {
  slow_stem_.release_cache();
  fast_stem_.release_cache();
  for (auto& l : laterals_) l->release_cache();
  for (auto& s : slow_stages_) s.release_cache();
  for (auto& s : fast_stages_) s.release_cache();
  head_->release_cache();
}

std::unique_ptr<SlowFastNetwork> build_slowfast(const SlowFastConfig& config, std::uint64_t seed) {
  config.validate();
  return std::make_unique<SlowFastNetwork>(config, seed);
}

}  // namespace sfk::model
