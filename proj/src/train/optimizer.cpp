#include "sfk/train/optimizer.hpp"

#include <cmath>

#include "sfk/error.hpp"

namespace sfk::train {
namespace {

void ensure_state(std::vector<Tensor>& state, const std::vector<model::Parameter*>& params) {
  if (state.empty()) {
    state.reserve(params.size());
    for (const auto* p : params) state.emplace_back(p->value.shape(), 0.0);
  } else if (state.size() != params.size()) {
    throw StructuralError("optimizer parameter list changed between steps");
  }
}

}  // namespace

void SgdMomentum::step(const std::vector<model::Parameter*>& params, double lr) {
  ensure_state(velocity_, params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (!p.trainable) continue;
    const double wd = p.decay ? weight_decay_ : 0.0;
    Real* w = p.value.data();
    const Real* g = p.grad.data();
    Real* v = velocity_[i].data();
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      v[j] = momentum_ * v[j] + g[j] + wd * w[j];
      w[j] -= lr * v[j];
    }
  }
}

void Adam::step(const std::vector<model::Parameter*>& params, double lr) {
  ensure_state(m_, params);
  ensure_state(v_, params);
  ++t_;
  const double c1 = 1 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = *params[i];
    if (!p.trainable) continue;
    const double wd = p.decay ? weight_decay_ : 0.0;
    Real* w = p.value.data();
    const Real* g = p.grad.data();
    Real* m = m_[i].data();
    Real* v = v_[i].data();
    for (std::int64_t j = 0; j < p.value.numel(); ++j) {
      const double gj = g[j] + wd * w[j];
      m[j] = beta1_ * m[j] + (1 - beta1_) * gj;
      v[j] = beta2_ * v[j] + (1 - beta2_) * gj * gj;
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config) {
  if (config.optimizer == OptimizerKind::kAdam) {
    return std::make_unique<Adam>(config.adam_beta1, config.adam_beta2, config.weight_decay);
  }
  return std::make_unique<SgdMomentum>(config.momentum, config.weight_decay);
}

}  // namespace sfk::train
