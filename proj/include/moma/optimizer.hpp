#pragma once

#include <cstdint>
#include <vector>

#include "moma/tensor.hpp"

namespace moma::nn {

struct AdamWConfig {
  double learning_rate = 5e-6;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Single-element decoupled weight-decay update. Deterministic; the moments
// and the parameter are updated in place.
void adamw_update(double& param, double grad, double& m, double& v,
                  std::int64_t step, const AdamWConfig& cfg);

// AdamW over a fixed parameter list. step() requires every parameter to have
// a populated gradient buffer and applies updates in list order.
class AdamW {
 public:
  AdamW(std::vector<Tensor> params, AdamWConfig cfg);

  void step();
  void zero_grad();
  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
  AdamWConfig cfg_;
};

}  // namespace moma::nn
