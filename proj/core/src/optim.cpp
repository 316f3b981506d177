// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ptune/error.hpp"

namespace ptune::train {

void ScheduleConfig::validate() const {
  if (base_lr < 0) throw ConfigError("base_lr must be non-negative");
  if (warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ConfigError("schedule needs 0 <= warmup_steps < total_steps (warmup " +
                      std::to_string(warmup_steps) + ", total " + std::to_string(total_steps) + ")");
  }
  if (min_lr < 0 || min_lr > base_lr) throw ConfigError("min_lr must lie in [0, base_lr]");
}

double lr_at(const ScheduleConfig& s, std::int64_t step) {
  s.validate();
  if (step < 0 || step > s.total_steps) {
    throw ConfigError("step " + std::to_string(step) + " outside [0, " +
                      std::to_string(s.total_steps) + "]");
  }
  if (step < s.warmup_steps) {
    return s.base_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
Adam<T>::Adam(std::vector<ag::Tensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    for (T g : p.grad()) {
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in Adam step");
    }
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto data = params_[i].data();
    auto grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[k]);
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      data[k] = static_cast<T>(static_cast<double>(data[k]) -
                               lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
double clip_grad_norm(std::vector<ag::Tensor<T>>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (auto& p : params) {
      for (auto& g : p.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * f);
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(std::vector<ag::Tensor<float>>&, double);
template double clip_grad_norm(std::vector<ag::Tensor<double>>&, double);

}  // namespace ptune::train
