#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mcevit/tensor.hpp"

namespace mcevit {

// Adam with bias correction. One state owns the moment accumulators for a
// fixed parameter list; the step counter is shared across parameters.
template <typename T>
struct AdamStateT {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void init(const std::vector<TensorT<T>>& params) {
    m.clear();
    v.clear();
    step = 0;
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
  }
};

using AdamState = AdamStateT<float>;

// Applies one update using each parameter's accumulated gradient (an empty
// gradient counts as zero). Does not clear gradients.
template <typename T>
void adam_step(std::vector<TensorT<T>>& params, AdamStateT<T>& state) {
  if (params.size() != state.m.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " params, got " + std::to_string(params.size()));
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].mutable_values();
    if (state.m[i].size() != value.size()) {
      throw ShapeError("adam_step: param " + std::to_string(i) + " has " +
                       std::to_string(value.size()) + " elements, state has " +
                       std::to_string(state.m[i].size()));
    }
    const auto& grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = grad.empty() ? 0.0 : static_cast<double>(grad[j]);
      m[j] = static_cast<T>(state.beta1 * m[j] + (1.0 - state.beta1) * g);
      v[j] = static_cast<T>(state.beta2 * v[j] + (1.0 - state.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      value[j] = static_cast<T>(value[j] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
    }
  }
}

}  // namespace mcevit
