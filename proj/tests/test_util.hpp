// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ptune/rng.hpp"
#include "ptune/tensor.hpp"

namespace ptune::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;
// Gradients smaller than this are compared in absolute terms.
inline constexpr double kFdFloor = 1e-4;

inline ag::Tensor<double> random_tensor(ag::Shape shape, Rng& rng, bool requires_grad,
                                        double scale = 1.0) {
  std::vector<double> v(ag::shape_size(shape));
  for (auto& x : v) x = rng.normal(0.0, scale);
  return ag::Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares the analytic gradient of loss_fn with respect to each input
// against central differences. loss_fn must rebuild its graph on every
// call. At most max_per_input entries of each input are probed, chosen
// with the given rng.
inline GradCheckResult grad_check(std::vector<ag::Tensor<double>> inputs,
                                  const std::function<ag::Tensor<double>()>& loss_fn,
                                  std::size_t max_per_input = 0, std::uint64_t probe_seed = 0) {
  for (auto& t : inputs) t.zero_grad();
  auto loss = loss_fn();
  ag::backward(loss);
  GradCheckResult result;
  Rng rng(probe_seed);
  for (auto& t : inputs) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    if (analytic.empty()) analytic.assign(t.size(), 0.0);
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (max_per_input > 0 && idx.size() > max_per_input) {
      for (std::size_t i = 0; i < max_per_input; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(max_per_input);
    }
    auto data = t.data();
    for (std::size_t i : idx) {
      const double saved = data[i];
      data[i] = saved + kFdStep;
      const double up = loss_fn().item();
      data[i] = saved - kFdStep;
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * kFdStep);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), kFdFloor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[i] - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

// Reduces a tensor to a scalar with fixed random weights so every output
// element carries a distinct adjoint.
inline ag::Tensor<double> project(const ag::Tensor<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  auto w = random_tensor(x.shape(), rng, false);
  return ag::sum(ag::mul(x, w));
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ptune_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ptune::testing
