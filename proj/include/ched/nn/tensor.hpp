#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ched::nn {

// Dense tensor with an optional same-shape gradient buffer. The scalar type
// is a template parameter: float in production, double as the shadow type
// for finite-difference gradient checks.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> v;
  std::vector<S> g;  // allocated (zero-filled) iff requires_grad
  bool requires_grad = false;
  std::string name;  // non-empty for named parameters

  std::size_t size() const { return v.size(); }

  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  S& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols() + c]; }
  S at(int r, int c) const {
    return v[static_cast<std::size_t>(r) * cols() + c];
  }

  void zero_grad() { std::fill(g.begin(), g.end(), S(0)); }

  bool values_finite() const {
    for (S x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }
  bool grads_finite() const {
    for (S x : g) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }
};

template <class S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

inline std::size_t shape_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor extents must be positive");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <class S>
TensorPtr<S> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<S>>();
  std::size_t n = shape_size(shape);
  t->shape = std::move(shape);
  t->v.assign(n, S(0));
  t->requires_grad = requires_grad;
  if (requires_grad) t->g.assign(n, S(0));
  return t;
}

template <class S>
TensorPtr<S> make_vector(std::vector<S> values, bool requires_grad = false) {
  auto t = make_tensor<S>({static_cast<int>(values.size())}, requires_grad);
  t->v = std::move(values);
  return t;
}

}  // namespace ched::nn
