#pragma once

#include <memory>
#include <vector>

#include "sfk/model/layers.hpp"
#include "sfk/train/train_config.hpp"

namespace sfk::train {

/// Updates trainable parameters from their accumulated gradients. Weight
/// decay is added to the gradient (L2) of parameters flagged `decay` only.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<model::Parameter*>& params, double lr) = 0;
};

class SgdMomentum final : public Optimizer {
 public:
  SgdMomentum(double momentum, double weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}
  void step(const std::vector<model::Parameter*>& params, double lr) override;

 private:
  double momentum_;
  double weight_decay_;
  std::vector<Tensor> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(double beta1, double beta2, double weight_decay, double eps = 1e-8)
      : beta1_(beta1), beta2_(beta2), weight_decay_(weight_decay), eps_(eps) {}
  void step(const std::vector<model::Parameter*>& params, double lr) override;

 private:
  double beta1_;
  double beta2_;
  double weight_decay_;
  double eps_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& config);

}  // namespace sfk::train
