#include "mmft/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mmft {

Adam::Adam(const ParameterStore& params, AdamConfig cfg)
    : cfg_(cfg), m_(params.zero_like()), v_(params.zero_like()) {}

void Adam::step(ParameterStore& params) {
  ++t_;
  adam_step(params, m_, v_, cfg_, t_);
}

void adam_step(ParameterStore& params, std::vector<Matrix>& m, std::vector<Matrix>& v,
               const AdamConfig& cfg, std::size_t t) {
  if (t == 0) throw std::invalid_argument("adam_step: step index is 1-based");
  if (m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("adam_step: moment buffers do not match parameter set");
  }
  const Scalar bias1 = 1.0 - std::pow(cfg.beta1, static_cast<Scalar>(t));
  const Scalar bias2 = 1.0 - std::pow(cfg.beta2, static_cast<Scalar>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * p.grad;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    if (cfg.lr != 0.0) {
      auto update = (m[i].array() / bias1) / ((v[i].array() / bias2).sqrt() + cfg.eps) +
                    cfg.weight_decay * p.value.array();
      p.value.array() -= cfg.lr * update;
    }
    p.grad.setZero();
  }
}

}  // namespace mmft
