#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cfie/numerics.hpp"

namespace cfie::num {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One adaptive-moment update over every parameter in `params`. Moments are
  /// created on first use and keyed by position, so the set must not change.
  void step(ParameterSet& params);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Array> first_;
  std::vector<Array> second_;
};

/// Worst relative error between `grad(point)` and central differences of `f`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6) per coordinate.
double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               const std::function<std::vector<double>(std::span<const double>)>& grad,
                               std::span<const double> point, double eps = 1e-5);

/// Tape flavour: `loss_fn` records a scalar loss on a fresh tape using the
/// given parameters; every coordinate of every parameter is perturbed.
double finite_difference_check(const std::function<Var(Tape&)>& loss_fn,
                               std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace cfie::num
