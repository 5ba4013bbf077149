#include "cfie/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cfie/errors.hpp"

namespace cfie::num {

void Adam::step(ParameterSet& params) {
  auto all = params.all();
  if (first_.empty()) {
    for (const Parameter* p : all) {
      first_.emplace_back(p->value.shape());
      second_.emplace_back(p->value.shape());
    }
  }
  if (first_.size() != all.size()) throw UsageError("parameter set changed under the optimizer");

  double clip = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const Parameter* p : all)
      for (double g : p->grad.data()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip = config_.clip_norm / norm;
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < all.size(); ++k) {
    Parameter& p = *all[k];
    if (p.grad.shape() != p.value.shape() || first_[k].shape() != p.value.shape())
      throw DimensionError("optimizer state shape mismatch for " + p.name);
    auto m = first_[k].data();
    auto v = second_[k].data();
    auto w = p.value.data();
    auto g = p.grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] * clip;
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

double finite_difference_check(const std::function<double(std::span<const double>)>& f,
                               const std::function<std::vector<double>(std::span<const double>)>& grad,
                               std::span<const double> point, double eps) {
  const std::vector<double> analytic = grad(point);
  if (analytic.size() != point.size())
    throw DimensionError("gradient has " + std::to_string(analytic.size()) + " entries for a point of " +
                         std::to_string(point.size()));
  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + eps;
    const double up = f(x);
    x[i] = orig - eps;
    const double down = f(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

double finite_difference_check(const std::function<Var(Tape&)>& loss_fn,
                               std::span<Parameter* const> params, double eps) {
  auto flatten = [&] {
    std::vector<double> x;
    for (const Parameter* p : params) x.insert(x.end(), p->value.data().begin(), p->value.data().end());
    return x;
  };
  auto assign = [&](std::span<const double> x) {
    std::size_t off = 0;
    for (Parameter* p : params) {
      auto w = p->value.data();
      std::copy(x.begin() + static_cast<std::ptrdiff_t>(off),
                x.begin() + static_cast<std::ptrdiff_t>(off + w.size()), w.begin());
      off += w.size();
    }
  };
  const std::vector<double> start = flatten();
  auto value = [&](std::span<const double> x) {
    assign(x);
    Tape tape(Tape::Mode::Inference);
    return loss_fn(tape).value()[0];
  };
  auto gradient = [&](std::span<const double> x) {
    assign(x);
    for (Parameter* p : params) {
      p->grad = Array(p->value.shape());
    }
    Tape tape;
    tape.backward(loss_fn(tape));
    std::vector<double> g;
    for (const Parameter* p : params) g.insert(g.end(), p->grad.data().begin(), p->grad.data().end());
    return g;
  };
  const double err = finite_difference_check(value, gradient, start, eps);
  assign(start);
  return err;
}

}  // namespace cfie::num
