#include "sfk/model/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "sfk/error.hpp"

namespace sfk::model {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

Parameter make_param(std::string name, Shape shape, Real fill, bool trainable, bool decay) {
  Parameter p;
  p.name = std::move(name);
  p.value = Tensor(shape, fill);
  p.grad = Tensor(std::move(shape), 0.0);
  p.trainable = trainable;
  p.decay = decay;
  return p;
}

struct ConvDims {
  std::int64_t n, cin, t, h, w;
  std::int64_t cout, to, ho, wo;
};

// Writes the receptive fields of output frame `to` into columns
// [col_offset, col_offset + ho*wo) of a row-major (cin*kt*kh*kw) x ld matrix.
void im2col(const Real* x, const ConvDims& d, const Extent3& k, const Extent3& s, const Extent3& p, std::int64_t to,
            Real* cols, std::int64_t ld, std::int64_t col_offset) {
  const std::int64_t plane = d.h * d.w;
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < d.cin; ++ci) {
    for (int dt = 0; dt < k.t; ++dt) {
      const std::int64_t ti = to * s.t - p.t + dt;
      for (int dy = 0; dy < k.h; ++dy) {
        for (int dx = 0; dx < k.w; ++dx, ++row) {
          Real* dst = cols + row * ld + col_offset;
          if (ti < 0 || ti >= d.t) {
            std::fill(dst, dst + d.ho * d.wo, 0.0);
            continue;
          }
          const Real* src = x + (ci * d.t + ti) * plane;
          for (std::int64_t oh = 0; oh < d.ho; ++oh) {
            const std::int64_t hi = oh * s.h - p.h + dy;
            Real* out = dst + oh * d.wo;
            if (hi < 0 || hi >= d.h) {
              std::fill(out, out + d.wo, 0.0);
              continue;
            }
            const Real* line = src + hi * d.w;
            for (std::int64_t ow = 0; ow < d.wo; ++ow) {
              const std::int64_t wi = ow * s.w - p.w + dx;
              out[ow] = (wi >= 0 && wi < d.w) ? line[wi] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im(const Real* cols, const ConvDims& d, const Extent3& k, const Extent3& s, const Extent3& p, std::int64_t to,
            std::int64_t ld, std::int64_t col_offset, Real* dx_out) {
  const std::int64_t plane = d.h * d.w;
  std::int64_t row = 0;
  for (std::int64_t ci = 0; ci < d.cin; ++ci) {
    for (int dt = 0; dt < k.t; ++dt) {
      const std::int64_t ti = to * s.t - p.t + dt;
      for (int dy = 0; dy < k.h; ++dy) {
        for (int dx = 0; dx < k.w; ++dx, ++row) {
          if (ti < 0 || ti >= d.t) continue;
          const Real* src = cols + row * ld + col_offset;
          Real* dst = dx_out + (ci * d.t + ti) * plane;
          for (std::int64_t oh = 0; oh < d.ho; ++oh) {
            const std::int64_t hi = oh * s.h - p.h + dy;
            if (hi < 0 || hi >= d.h) continue;
            const Real* in = src + oh * d.wo;
            Real* line = dst + hi * d.w;
            for (std::int64_t ow = 0; ow < d.wo; ++ow) {
              const std::int64_t wi = ow * s.w - p.w + dx;
              if (wi >= 0 && wi < d.w) line[wi] += in[ow];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv3d

Conv3d::Conv3d(std::string name, int in_channels, int out_channels, Extent3 kernel, Extent3 stride, Extent3 padding,
               bool bias)
    : in_(in_channels), out_(out_channels), k_(kernel), s_(stride), p_(padding), has_bias_(bias) {
  weight_ = make_param(name + ".weight", {out_, in_, k_.t, k_.h, k_.w}, 0.0, true, true);
  if (has_bias_) bias_ = make_param(name + ".bias", {out_}, 0.0, true, false);
}

void Conv3d::init_fan_out(Rng& rng) {
  const double fan_out = static_cast<double>(out_) * k_.t * k_.h * k_.w;
  const double stddev = std::sqrt(2.0 / fan_out);
  for (auto& v : weight_.value.values()) v = rng.normal(0.0, stddev);
  if (has_bias_) bias_.value.fill(0.0);
}

void Conv3d::zero_init() {
  weight_.value.fill(0.0);
  if (has_bias_) bias_.value.fill(0.0);
}

Shape Conv3d::output_shape(const Shape& in) const {
  if (in.size() != 5 || in[1] != in_) {
    throw StructuralError(weight_.name + ": expected input (N," + std::to_string(in_) + ",T,H,W), got " +
                          shape_string(in));
  }
  const auto out_extent = [](std::int64_t n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
  Shape out{in[0], out_, out_extent(in[2], k_.t, s_.t, p_.t), out_extent(in[3], k_.h, s_.h, p_.h),
            out_extent(in[4], k_.w, s_.w, p_.w)};
  for (std::size_t i = 2; i < 5; ++i) {
    if (out[i] < 1) throw StructuralError(weight_.name + ": input " + shape_string(in) + " too small for the kernel");
  }
  return out;
}

Tensor Conv3d::infer(const Tensor& x) const {
  const Shape out_shape = output_shape(x.shape());
  Tensor y(out_shape);
  const ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4), out_shape[1], out_shape[2], out_shape[3],
                   out_shape[4]};
  const std::int64_t in_vol = d.cin * d.t * d.h * d.w;
  const std::int64_t out_plane = d.ho * d.wo;
  const std::int64_t out_vol = d.cout * d.to * out_plane;
  const std::int64_t kdim = static_cast<std::int64_t>(in_) * k_.t * k_.h * k_.w;
  CMapMat w(weight_.value.data(), out_, kdim);

  const bool pointwise = k_.t == 1 && k_.h == 1 && k_.w == 1 && s_.t == 1 && s_.h == 1 && s_.w == 1 &&
                         p_.t == 0 && p_.h == 0 && p_.w == 0;
  // Without temporal extent every output frame can share one GEMM.
  const bool batched_frames = k_.t == 1 && s_.t == 1 && p_.t == 0;

  std::vector<Real> cols;
  for (std::int64_t n = 0; n < d.n; ++n) {
    const Real* xn = x.data() + n * in_vol;
    Real* yn = y.data() + n * out_vol;
    if (pointwise) {
      MapMat(yn, d.cout, d.to * out_plane).noalias() = w * CMapMat(xn, d.cin, d.t * d.h * d.w);
    } else if (batched_frames) {
      const std::int64_t ld = d.to * out_plane;
      cols.resize(static_cast<std::size_t>(kdim * ld));
      for (std::int64_t to = 0; to < d.to; ++to) im2col(xn, d, k_, s_, p_, to, cols.data(), ld, to * out_plane);
      MapMat(yn, d.cout, ld).noalias() = w * CMapMat(cols.data(), kdim, ld);
    } else {
      cols.resize(static_cast<std::size_t>(kdim * out_plane));
      for (std::int64_t to = 0; to < d.to; ++to) {
        im2col(xn, d, k_, s_, p_, to, cols.data(), out_plane, 0);
        StridedMap(yn + to * out_plane, d.cout, out_plane, Eigen::OuterStride<>(d.to * out_plane)).noalias() =
            w * CMapMat(cols.data(), kdim, out_plane);
      }
    }
    if (has_bias_) {
      for (std::int64_t c = 0; c < d.cout; ++c) {
        Real* row = yn + c * d.to * out_plane;
        const Real b = bias_.value[c];
        for (std::int64_t i = 0; i < d.to * out_plane; ++i) row[i] += b;
      }
    }
  }
  return y;
}

Tensor Conv3d::forward(const Tensor& x, bool /*training*/) {
  input_ = x;
  return infer(x);
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  if (input_.empty()) throw StructuralError(weight_.name + ": backward without forward");
  const Shape out_shape = output_shape(input_.shape());
  if (grad_out.shape() != out_shape) {
    throw StructuralError(weight_.name + ": gradient shape " + shape_string(grad_out.shape()) + " vs output " +
                          shape_string(out_shape));
  }
  const Tensor& x = input_;
  Tensor dx(x.shape(), 0.0);
  const ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), x.dim(4), out_shape[1], out_shape[2], out_shape[3],
                   out_shape[4]};
  const std::int64_t in_vol = d.cin * d.t * d.h * d.w;
  const std::int64_t out_plane = d.ho * d.wo;
  const std::int64_t out_vol = d.cout * d.to * out_plane;
  const std::int64_t kdim = static_cast<std::int64_t>(in_) * k_.t * k_.h * k_.w;
  CMapMat w(weight_.value.data(), out_, kdim);
  MapMat dw(weight_.grad.data(), out_, kdim);

  const bool pointwise = k_.t == 1 && k_.h == 1 && k_.w == 1 && s_.t == 1 && s_.h == 1 && s_.w == 1 &&
                         p_.t == 0 && p_.h == 0 && p_.w == 0;
  const bool batched_frames = k_.t == 1 && s_.t == 1 && p_.t == 0;

  std::vector<Real> cols;
  std::vector<Real> dcols;
  for (std::int64_t n = 0; n < d.n; ++n) {
    const Real* xn = x.data() + n * in_vol;
    const Real* gn = grad_out.data() + n * out_vol;
    Real* dxn = dx.data() + n * in_vol;
    if (pointwise) {
      const std::int64_t cols_n = d.t * d.h * d.w;
      CMapMat g(gn, d.cout, cols_n);
      dw.noalias() += g * CMapMat(xn, d.cin, cols_n).transpose();
      MapMat(dxn, d.cin, cols_n).noalias() = w.transpose() * g;
    } else if (batched_frames) {
      const std::int64_t ld = d.to * out_plane;
      cols.resize(static_cast<std::size_t>(kdim * ld));
      dcols.resize(cols.size());
      for (std::int64_t to = 0; to < d.to; ++to) im2col(xn, d, k_, s_, p_, to, cols.data(), ld, to * out_plane);
      CMapMat g(gn, d.cout, ld);
      dw.noalias() += g * CMapMat(cols.data(), kdim, ld).transpose();
      MapMat(dcols.data(), kdim, ld).noalias() = w.transpose() * g;
      for (std::int64_t to = 0; to < d.to; ++to) col2im(dcols.data(), d, k_, s_, p_, to, ld, to * out_plane, dxn);
    } else {
      cols.resize(static_cast<std::size_t>(kdim * out_plane));
      dcols.resize(cols.size());
      for (std::int64_t to = 0; to < d.to; ++to) {
        im2col(xn, d, k_, s_, p_, to, cols.data(), out_plane, 0);
        CStridedMap g(gn + to * out_plane, d.cout, out_plane, Eigen::OuterStride<>(d.to * out_plane));
        dw.noalias() += g * CMapMat(cols.data(), kdim, out_plane).transpose();
        MapMat(dcols.data(), kdim, out_plane).noalias() = w.transpose() * g;
        col2im(dcols.data(), d, k_, s_, p_, to, out_plane, 0, dxn);
      }
    }
    if (has_bias_) {
      for (std::int64_t c = 0; c < d.cout; ++c) {
        const Real* row = gn + c * d.to * out_plane;
        Real acc = 0;
        for (std::int64_t i = 0; i < d.to * out_plane; ++i) acc += row[i];
        bias_.grad[c] += acc;
      }
    }
  }
  return dx;
}

void Conv3d::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ---------------------------------------------------------------------------
// BatchNorm3d

BatchNorm3d::BatchNorm3d(std::string name, int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  gamma_ = make_param(name + ".weight", {channels}, 1.0, true, false);
  beta_ = make_param(name + ".bias", {channels}, 0.0, true, false);
  running_mean_ = make_param(name + ".running_mean", {channels}, 0.0, false, false);
  running_var_ = make_param(name + ".running_var", {channels}, 1.0, false, false);
}

namespace {
void check_bn_input(const Tensor& x, int channels) {
  if (x.rank() != 5 || x.dim(1) != channels) {
    throw StructuralError("batch norm: expected (N," + std::to_string(channels) + ",T,H,W), got " +
                          shape_string(x.shape()));
  }
}
}  // namespace

Tensor BatchNorm3d::infer(const Tensor& x) const {
  check_bn_input(x, channels_);
  Tensor y(x.shape());
  const std::int64_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
  for (std::int64_t n = 0; n < x.dim(0); ++n) {
    for (int c = 0; c < channels_; ++c) {
      const Real scale = gamma_.value[c] / std::sqrt(running_var_.value[c] + eps_);
      const Real shift = beta_.value[c] - running_mean_.value[c] * scale;
      const Real* src = x.data() + (n * channels_ + c) * spatial;
      Real* dst = y.data() + (n * channels_ + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm3d::forward(const Tensor& x, bool training) {
  check_bn_input(x, channels_);
  const std::int64_t batch = x.dim(0);
  const std::int64_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
  const auto count = static_cast<Real>(batch * spatial);
  normalized_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  // A single value per channel carries no batch statistics.
  batch_stats_ = training && batch * spatial > 1;
  Tensor y(x.shape());
  for (int c = 0; c < channels_; ++c) {
    Real mean = running_mean_.value[c];
    Real var = running_var_.value[c];
    if (batch_stats_) {
      Real sum = 0;
      for (std::int64_t n = 0; n < batch; ++n) {
        const Real* src = x.data() + (n * channels_ + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) sum += src[i];
      }
      mean = sum / count;
      Real sq = 0;
      for (std::int64_t n = 0; n < batch; ++n) {
        const Real* src = x.data() + (n * channels_ + c) * spatial;
        for (std::int64_t i = 0; i < spatial; ++i) sq += (src[i] - mean) * (src[i] - mean);
      }
      var = sq / count;
      running_mean_.value[c] = (1 - momentum_) * running_mean_.value[c] + momentum_ * mean;
      running_var_.value[c] = (1 - momentum_) * running_var_.value[c] + momentum_ * var * count / (count - 1);
    }
    const Real inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(c)] = inv_std;
    const Real g = gamma_.value[c];
    const Real b = beta_.value[c];
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * channels_ + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        const Real xhat = (x[off + i] - mean) * inv_std;
        normalized_[off + i] = xhat;
        y[off + i] = g * xhat + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm3d::backward(const Tensor& grad_out) {
  if (grad_out.shape() != normalized_.shape()) throw StructuralError("batch norm: backward shape mismatch");
  const std::int64_t batch = grad_out.dim(0);
  const std::int64_t spatial = grad_out.dim(2) * grad_out.dim(3) * grad_out.dim(4);
  const auto count = static_cast<Real>(batch * spatial);
  Tensor dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    Real sum_g = 0;
    Real sum_gx = 0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * channels_ + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        sum_g += grad_out[off + i];
        sum_gx += grad_out[off + i] * normalized_[off + i];
      }
    }
    gamma_.grad[c] += sum_gx;
    beta_.grad[c] += sum_g;
    const Real scale = gamma_.value[c] * inv_std_[static_cast<std::size_t>(c)];
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::int64_t off = (n * channels_ + c) * spatial;
      for (std::int64_t i = 0; i < spatial; ++i) {
        if (batch_stats_) {
          dx[off + i] = scale / count * (count * grad_out[off + i] - sum_g - normalized_[off + i] * sum_gx);
        } else {
          dx[off + i] = scale * grad_out[off + i];
        }
      }
    }
  }
  return dx;
}

void BatchNorm3d::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::infer(const Tensor& x) const {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0 ? v : 0;
  return y;
}

Tensor ReLU::forward(const Tensor& x, bool /*training*/) {
  output_ = infer(x);
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  if (grad_out.shape() != output_.shape()) throw StructuralError("relu: backward shape mismatch");
  Tensor dx = grad_out;
  for (std::int64_t i = 0; i < dx.numel(); ++i) {
    if (output_[i] <= 0) dx[i] = 0;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool3d

MaxPool3d::MaxPool3d(Extent3 kernel, Extent3 stride, Extent3 padding) : k_(kernel), s_(stride), p_(padding) {}

Tensor MaxPool3d::pool(const Tensor& x, std::vector<std::int64_t>* argmax) const {
  require_rank(x, 5, "max pool");
  const auto extent = [](std::int64_t n, int k, int s, int p) { return (n + 2 * p - k) / s + 1; };
  const std::int64_t to = extent(x.dim(2), k_.t, s_.t, p_.t);
  const std::int64_t ho = extent(x.dim(3), k_.h, s_.h, p_.h);
  const std::int64_t wo = extent(x.dim(4), k_.w, s_.w, p_.w);
  if (to < 1 || ho < 1 || wo < 1) throw StructuralError("max pool: input " + shape_string(x.shape()) + " too small");
  Tensor y({x.dim(0), x.dim(1), to, ho, wo});
  if (argmax) argmax->assign(static_cast<std::size_t>(y.numel()), -1);
  const std::int64_t T = x.dim(2), H = x.dim(3), W = x.dim(4);
  std::int64_t o = 0;
  for (std::int64_t nc = 0; nc < x.dim(0) * x.dim(1); ++nc) {
    const std::int64_t base = nc * T * H * W;
    for (std::int64_t t = 0; t < to; ++t) {
      for (std::int64_t h = 0; h < ho; ++h) {
        for (std::int64_t w = 0; w < wo; ++w, ++o) {
          Real best = -std::numeric_limits<Real>::infinity();
          std::int64_t best_idx = -1;
          for (int dt = 0; dt < k_.t; ++dt) {
            const std::int64_t ti = t * s_.t - p_.t + dt;
            if (ti < 0 || ti >= T) continue;
            for (int dy = 0; dy < k_.h; ++dy) {
              const std::int64_t hi = h * s_.h - p_.h + dy;
              if (hi < 0 || hi >= H) continue;
              for (int dx = 0; dx < k_.w; ++dx) {
                const std::int64_t wi = w * s_.w - p_.w + dx;
                if (wi < 0 || wi >= W) continue;
                const std::int64_t idx = base + (ti * H + hi) * W + wi;
                if (x[idx] > best) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
          }
          y[o] = best;
          if (argmax) (*argmax)[static_cast<std::size_t>(o)] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool3d::infer(const Tensor& x) const { return pool(x, nullptr); }

Tensor MaxPool3d::forward(const Tensor& x, bool /*training*/) {
  input_shape_ = x.shape();
  return pool(x, &argmax_);
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  if (static_cast<std::size_t>(grad_out.numel()) != argmax_.size()) throw StructuralError("max pool: backward mismatch");
  Tensor dx(input_shape_, 0.0);
  for (std::size_t i = 0; i < argmax_.size(); ++i) {
    if (argmax_[i] >= 0) dx[argmax_[i]] += grad_out[static_cast<std::int64_t>(i)];
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Tensor Sequential::infer(const Tensor& x) const {
  Tensor cur = x;
  for (const auto& layer : layers_) cur = layer->infer(cur);
  return cur;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor cur = x;
  for (auto& layer : layers_) cur = layer->forward(cur, training);
  return cur;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer->collect(out);
}

void Sequential::release_cache() {
  for (auto& layer : layers_) layer->release_cache();
}

// ---------------------------------------------------------------------------
// Bottleneck

Bottleneck::Bottleneck(const std::string& name, int in_channels, int inner_channels, int out_channels,
                       int temporal_kernel, int spatial_stride, Rng& rng) {
  auto& a = branch_.add(std::make_unique<Conv3d>(name + ".a", in_channels, inner_channels, Extent3{temporal_kernel, 1, 1},
                                                 Extent3{1, 1, 1}, Extent3{temporal_kernel / 2, 0, 0}));
  a.init_fan_out(rng);
  branch_.add(std::make_unique<BatchNorm3d>(name + ".a_bn", inner_channels));
  branch_.add(std::make_unique<ReLU>());
  auto& b = branch_.add(std::make_unique<Conv3d>(name + ".b", inner_channels, inner_channels, Extent3{1, 3, 3},
                                                 Extent3{1, spatial_stride, spatial_stride}, Extent3{0, 1, 1}));
  b.init_fan_out(rng);
  branch_.add(std::make_unique<BatchNorm3d>(name + ".b_bn", inner_channels));
  branch_.add(std::make_unique<ReLU>());
  auto& c = branch_.add(std::make_unique<Conv3d>(name + ".c", inner_channels, out_channels, Extent3{1, 1, 1},
                                                 Extent3{1, 1, 1}, Extent3{0, 0, 0}));
  c.init_fan_out(rng);
  // Zero-initialized final scale: every block starts as its shortcut.
  auto& c_bn = branch_.add(std::make_unique<BatchNorm3d>(name + ".c_bn", out_channels));
  c_bn.gamma().value.fill(0.0);

  if (in_channels != out_channels || spatial_stride != 1) {
    shortcut_ = std::make_unique<Sequential>();
    auto& proj = shortcut_->add(std::make_unique<Conv3d>(name + ".shortcut", in_channels, out_channels, Extent3{1, 1, 1},
                                                         Extent3{1, spatial_stride, spatial_stride}, Extent3{0, 0, 0}));
    proj.init_fan_out(rng);
    shortcut_->add(std::make_unique<BatchNorm3d>(name + ".shortcut_bn", out_channels));
  }
}

Tensor Bottleneck::infer(const Tensor& x) const {
  Tensor y = branch_.infer(x);
  y.add_(shortcut_ ? shortcut_->infer(x) : x);
  return out_relu_.infer(y);
}

Tensor Bottleneck::forward(const Tensor& x, bool training) {
  Tensor y = branch_.forward(x, training);
  y.add_(shortcut_ ? shortcut_->forward(x, training) : x);
  return out_relu_.forward(y, training);
}

Tensor Bottleneck::backward(const Tensor& grad_out) {
  const Tensor g = out_relu_.backward(grad_out);
  Tensor dx = branch_.backward(g);
  dx.add_(shortcut_ ? shortcut_->backward(g) : g);
  return dx;
}

void Bottleneck::collect(std::vector<Parameter*>& out) {
  branch_.collect(out);
  if (shortcut_) shortcut_->collect(out);
}

void Bottleneck::release_cache() {
  branch_.release_cache();
  if (shortcut_) shortcut_->release_cache();
  out_relu_.release_cache();
}

// ---------------------------------------------------------------------------
// GlobalAvgPool

Tensor GlobalAvgPool::infer(const Tensor& x) const {
  require_rank(x, 5, "global average pool");
  const std::int64_t nc = x.dim(0) * x.dim(1);
  const std::int64_t spatial = x.dim(2) * x.dim(3) * x.dim(4);
  Tensor y({x.dim(0), x.dim(1)});
  for (std::int64_t i = 0; i < nc; ++i) {
    Real s = 0;
    const Real* src = x.data() + i * spatial;
    for (std::int64_t j = 0; j < spatial; ++j) s += src[j];
    y[i] = s / static_cast<Real>(spatial);
  }
  return y;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool /*training*/) {
  input_shape_ = x.shape();
  return infer(x);
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(input_shape_);
  const std::int64_t spatial = input_shape_[2] * input_shape_[3] * input_shape_[4];
  for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
    const Real g = grad_out[i] / static_cast<Real>(spatial);
    std::fill(dx.data() + i * spatial, dx.data() + (i + 1) * spatial, g);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

void Dropout::set_rate(double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  rate_ = rate;
}

Tensor Dropout::forward(const Tensor& x, bool training) {
  mask_.assign(static_cast<std::size_t>(x.numel()), 1.0);
  if (!training || rate_ == 0.0) return x;
  const Real keep = 1.0 - rate_;
  Tensor y = x;
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    const Real m = rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
    mask_[static_cast<std::size_t>(i)] = m;
    y[i] *= m;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] *= mask_[static_cast<std::size_t>(i)];
  return dx;
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::string name, int in_features, int out_features) : in_(in_features), out_(out_features) {
  weight_ = make_param(name + ".weight", {out_, in_}, 0.0, true, true);
  bias_ = make_param(name + ".bias", {out_}, 0.0, true, false);
}

void Linear::init_normal(Rng& rng, double stddev) {
  for (auto& v : weight_.value.values()) v = rng.normal(0.0, stddev);
  bias_.value.fill(0.0);
}

Tensor Linear::infer(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw StructuralError(weight_.name + ": expected (N," + std::to_string(in_) + "), got " + shape_string(x.shape()));
  }
  Tensor y({x.dim(0), out_});
  MapMat ym(y.data(), x.dim(0), out_);
  ym.noalias() = CMapMat(x.data(), x.dim(0), in_) * CMapMat(weight_.value.data(), out_, in_).transpose();
  for (std::int64_t n = 0; n < x.dim(0); ++n) {
    for (int k = 0; k < out_; ++k) ym(n, k) += bias_.value[k];
  }
  return y;
}

Tensor Linear::forward(const Tensor& x, bool /*training*/) {
  input_ = x;
  return infer(x);
}

Tensor Linear::backward(const Tensor& grad_out) {
  const std::int64_t batch = input_.dim(0);
  CMapMat g(grad_out.data(), batch, out_);
  MapMat(weight_.grad.data(), out_, in_).noalias() += g.transpose() * CMapMat(input_.data(), batch, in_);
  for (std::int64_t n = 0; n < batch; ++n) {
    for (int k = 0; k < out_; ++k) bias_.grad[k] += g(n, k);
  }
  Tensor dx({batch, in_});
  MapMat(dx.data(), batch, in_).noalias() = g * CMapMat(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw StructuralError("concat: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  for (std::size_t i = 2; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw StructuralError("concat: incompatible shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
  }
  Shape shape = a.shape();
  shape[1] = a.dim(1) + b.dim(1);
  Tensor out(shape);
  const std::int64_t per_a = a.numel() / a.dim(0);
  const std::int64_t per_b = b.numel() / b.dim(0);
  for (std::int64_t n = 0; n < a.dim(0); ++n) {
    std::copy_n(a.data() + n * per_a, per_a, out.data() + n * (per_a + per_b));
    std::copy_n(b.data() + n * per_b, per_b, out.data() + n * (per_a + per_b) + per_a);
  }
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::int64_t first_channels) {
  Shape sa = g.shape();
  Shape sb = g.shape();
  sa[1] = first_channels;
  sb[1] = g.dim(1) - first_channels;
  Tensor a(sa);
  Tensor b(sb);
  const std::int64_t per_a = a.numel() / g.dim(0);
  const std::int64_t per_b = b.numel() / g.dim(0);
  for (std::int64_t n = 0; n < g.dim(0); ++n) {
    std::copy_n(g.data() + n * (per_a + per_b), per_a, a.data() + n * per_a);
    std::copy_n(g.data() + n * (per_a + per_b) + per_a, per_b, b.data() + n * per_b);
  }
  return {std::move(a), std::move(b)};
}

}  // namespace sfk::model
