#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "ched/nn/tensor.hpp"
#include "ched/rng.hpp"

namespace ched::nn {

// Named parameter store with Adam moment slots. Iteration is in name order,
// which keeps update sweeps and checkpoint layout deterministic.
template <class S>
class ParamSet {
 public:
  // Uniform init on [lo, hi).
  TensorPtr<S> create(const std::string& name, std::vector<int> shape,
                      Rng& rng, double lo = -0.08, double hi = 0.08) {
    if (params_.count(name) > 0) {
      throw std::invalid_argument("duplicate parameter name: " + name);
    }
    auto t = make_tensor<S>(std::move(shape), true);
    t->name = name;
    for (auto& x : t->v) x = static_cast<S>(rng.uniform(lo, hi));
    params_.emplace(name, t);
    moments_[name] = Moments{std::vector<S>(t->size(), S(0)),
                             std::vector<S>(t->size(), S(0))};
    return t;
  }

  TensorPtr<S> get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw std::out_of_range("no such parameter: " + name);
    }
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, TensorPtr<S>>& all() const { return params_; }

  std::size_t value_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t->size();
    return n;
  }

  void zero_grads() {
    for (auto& [_, t] : params_) t->zero_grad();
  }

  std::int64_t step() const { return step_; }

  void reset_optimizer() {
    step_ = 0;
    for (auto& [name, mom] : moments_) {
      std::fill(mom.m.begin(), mom.m.end(), S(0));
      std::fill(mom.v.begin(), mom.v.end(), S(0));
    }
  }

  // Bias-corrected Adam, applied in place; gradients are cleared.
  void adam_update(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8) {
    ++step_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [name, t] : params_) {
      if (!t->grads_finite()) {
        throw std::runtime_error("non-finite gradient in parameter " + name);
      }
      Moments& mom = moments_[name];
      for (std::size_t i = 0; i < t->size(); ++i) {
        const double g = static_cast<double>(t->g[i]);
        const double m = beta1 * static_cast<double>(mom.m[i]) +
                         (1.0 - beta1) * g;
        const double v = beta2 * static_cast<double>(mom.v[i]) +
                         (1.0 - beta2) * g * g;
        mom.m[i] = static_cast<S>(m);
        mom.v[i] = static_cast<S>(v);
        t->v[i] -= static_cast<S>(lr * (m / bc1) /
                                  (std::sqrt(v / bc2) + eps));
        t->g[i] = S(0);
      }
    }
  }

 private:
  struct Moments {
    std::vector<S> m, v;
  };
  std::map<std::string, TensorPtr<S>> params_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

}  // namespace ched::nn
