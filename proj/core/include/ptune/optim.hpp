// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "ptune/tensor.hpp"

namespace ptune::train {

struct ScheduleConfig {
  double base_lr = 1e-4;
  std::int64_t warmup_steps = 50;
  std::int64_t total_steps = 1000;
  double min_lr = 0.0;

  void validate() const;
};

// Linear warmup from 0 to base_lr, then cosine annealing down to min_lr.
double lr_at(const ScheduleConfig& schedule, std::int64_t step);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments are kept in
// double regardless of the parameter type.
template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<ag::Tensor<T>> params, AdamConfig config = {});

  // Applies one update using the gradients currently stored on the
  // parameters; a parameter without a gradient is treated as zero gradient.
  // Throws NumericError on a non-finite gradient.
  void step(double lr);
  void zero_grad();

  std::int64_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<ag::Tensor<T>> params_;
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Scales all gradients so their joint L2 norm is at most max_norm. Returns
// the norm measured before scaling.
template <typename T>
double clip_grad_norm(std::vector<ag::Tensor<T>>& params, double max_norm);

}  // namespace ptune::train
