#pragma once

#include "mmft/parameters.hpp"

#include <vector>

namespace mmft {

struct AdamConfig {
  Scalar lr = 1e-3;
  Scalar weight_decay = 1e-5;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

/// Adam with bias correction and decoupled weight decay:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
class Adam {
 public:
  explicit Adam(const ParameterStore& params, AdamConfig cfg = {});

  /// Applies one update from Parameter::grad, then zeroes the gradients.
  void step(ParameterStore& params);

  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(Scalar lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t t_ = 0;
};

/// Single update at explicit step index `t` (1-based) with caller-held moments.
void adam_step(ParameterStore& params, std::vector<Matrix>& m, std::vector<Matrix>& v,
               const AdamConfig& cfg, std::size_t t);

}  // namespace mmft
