#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "uqseg/error.hpp"

namespace uqseg {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double weight_decay = 0.01;
  double clip_norm = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Rescales grad in place so its L2 norm is at most max_norm. Returns the norm
/// before clipping.
inline double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / (norm + 1e-6);
    for (double& g : grad) g *= scale;
  }
  return norm;
}

/// Adam with decoupled weight decay over one flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t parameter_count, OptimizerConfig config)
      : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

  [[nodiscard]] const OptimizerConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t steps() const noexcept { return step_; }

  /// Clips grad (in place) to config.clip_norm, then updates params.
  void step(std::span<double> params, std::span<double> grad) {
    detail::require(params.size() == m_.size() && grad.size() == m_.size(), "AdamW::step: size mismatch");
    clip_grad_norm(grad, config_.clip_norm);
    ++step_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i] *= 1.0 - config_.learning_rate * config_.weight_decay;
      m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
      v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
      const double m_hat = m_[i] / bc1;
      const double v_hat = v_[i] / bc2;
      params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }

 private:
  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t step_ = 0;
};

}  // namespace uqseg
