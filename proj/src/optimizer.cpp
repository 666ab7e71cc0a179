#include "moma/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace moma::nn {

void adamw_update(double& param, double grad, double& m, double& v,
                  std::int64_t step, const AdamWConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad;
  const double m_hat = m / (1.0 - std::pow(cfg.beta1, static_cast<double>(step)));
  const double v_hat = v / (1.0 - std::pow(cfg.beta2, static_cast<double>(step)));
  param -= cfg.learning_rate *
           (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * param);
}

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamW::step() {
  for (const Tensor& p : params_) {
    if (!p.has_grad()) {
      throw std::logic_error("adamw: parameter has no gradient; run backward first");
    }
  }
  ++step_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto& data = p.values();
    const auto& g = p.grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      adamw_update(data[j], g[j], m_[i][j], v_[i][j], step_, cfg_);
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

}  // namespace moma::nn
