#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "ched/nn/tensor.hpp"

namespace ched::nn {

inline void check_shapes(bool ok, const char* what) {
  if (!ok) throw std::runtime_error(std::string("shape mismatch in ") + what);
}

// Reverse-mode tape. Operations append backward closures in forward order;
// backward() replays them in reverse, accumulating into .g buffers. A tape
// with recording=false computes values only (inference / finite-difference
// evaluation).
template <class S>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void push(std::function<void()> back) {
    if (recording_) ops_.push_back(std::move(back));
  }

  // Seeds d(loss)/d(loss) = seed and propagates. The tape is consumed.
  void backward(const TensorPtr<S>& loss, S seed = S(1)) {
    check_shapes(loss->size() == 1, "backward (loss must be scalar)");
    if (!loss->requires_grad) {
      ops_.clear();
      return;
    }
    loss->g[0] += seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  std::size_t size() const { return ops_.size(); }

 private:
  bool recording_;
  std::vector<std::function<void()>> ops_;
};

namespace detail {

template <class S>
TensorPtr<S> result(Tape<S>& tape, std::vector<int> shape, bool any_grad) {
  return make_tensor<S>(std::move(shape), tape.recording() && any_grad);
}

}  // namespace detail

// y = W x. W is [m x n], x is [n].
template <class S>
TensorPtr<S> matvec(Tape<S>& tape, const TensorPtr<S>& W,
                    const TensorPtr<S>& x) {
  check_shapes(W->shape.size() == 2 && x->shape.size() == 1 &&
                   W->cols() == x->rows(),
               "matvec");
  const int m = W->rows(), n = W->cols();
  auto y = detail::result(tape, {m}, W->requires_grad || x->requires_grad);
  for (int i = 0; i < m; ++i) {
    S acc = 0;
    const S* wrow = &W->v[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) acc += wrow[j] * x->v[j];
    y->v[i] = acc;
  }
  if (y->requires_grad) {
    tape.push([W, x, y, m, n] {
      for (int i = 0; i < m; ++i) {
        const S gy = y->g[i];
        if (gy == S(0)) continue;
        const S* wrow = &W->v[static_cast<std::size_t>(i) * n];
        if (W->requires_grad) {
          S* gw = &W->g[static_cast<std::size_t>(i) * n];
          for (int j = 0; j < n; ++j) gw[j] += gy * x->v[j];
        }
        if (x->requires_grad) {
          for (int j = 0; j < n; ++j) x->g[j] += gy * wrow[j];
        }
      }
    });
  }
  return y;
}

// y = W x + b.
template <class S>
TensorPtr<S> affine(Tape<S>& tape, const TensorPtr<S>& W,
                    const TensorPtr<S>& x, const TensorPtr<S>& b) {
  check_shapes(b->shape.size() == 1 && b->rows() == W->rows(), "affine");
  auto y = matvec(tape, W, x);
  for (int i = 0; i < W->rows(); ++i) y->v[i] += b->v[i];
  if (y->requires_grad && b->requires_grad) {
    tape.push([b, y] {
      for (std::size_t i = 0; i < b->size(); ++i) b->g[i] += y->g[i];
    });
  }
  return y;
}

template <class S>
TensorPtr<S> add(Tape<S>& tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  check_shapes(a->shape == b->shape, "add");
  auto y = detail::result(tape, a->shape,
                          a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < a->size(); ++i) y->v[i] = a->v[i] + b->v[i];
  if (y->requires_grad) {
    tape.push([a, b, y] {
      if (a->requires_grad) {
        for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += y->g[i];
      }
      if (b->requires_grad) {
        for (std::size_t i = 0; i < b->size(); ++i) b->g[i] += y->g[i];
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> mul(Tape<S>& tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  check_shapes(a->shape == b->shape, "mul");
  auto y = detail::result(tape, a->shape,
                          a->requires_grad || b->requires_grad);
  for (std::size_t i = 0; i < a->size(); ++i) y->v[i] = a->v[i] * b->v[i];
  if (y->requires_grad) {
    tape.push([a, b, y] {
      for (std::size_t i = 0; i < a->size(); ++i) {
        if (a->requires_grad) a->g[i] += y->g[i] * b->v[i];
        if (b->requires_grad) b->g[i] += y->g[i] * a->v[i];
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> scale(Tape<S>& tape, const TensorPtr<S>& a, S factor) {
  auto y = detail::result(tape, a->shape, a->requires_grad);
  for (std::size_t i = 0; i < a->size(); ++i) y->v[i] = factor * a->v[i];
  if (y->requires_grad) {
    tape.push([a, y, factor] {
      for (std::size_t i = 0; i < a->size(); ++i) a->g[i] += factor * y->g[i];
    });
  }
  return y;
}

template <class S>
TensorPtr<S> sigmoid(Tape<S>& tape, const TensorPtr<S>& a) {
  auto y = detail::result(tape, a->shape, a->requires_grad);
  for (std::size_t i = 0; i < a->size(); ++i) {
    const S x = a->v[i];
    y->v[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                        : std::exp(x) / (S(1) + std::exp(x));
  }
  if (y->requires_grad) {
    tape.push([a, y] {
      for (std::size_t i = 0; i < a->size(); ++i) {
        a->g[i] += y->g[i] * y->v[i] * (S(1) - y->v[i]);
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> tanh_op(Tape<S>& tape, const TensorPtr<S>& a) {
  auto y = detail::result(tape, a->shape, a->requires_grad);
  for (std::size_t i = 0; i < a->size(); ++i) y->v[i] = std::tanh(a->v[i]);
  if (y->requires_grad) {
    tape.push([a, y] {
      for (std::size_t i = 0; i < a->size(); ++i) {
        a->g[i] += y->g[i] * (S(1) - y->v[i] * y->v[i]);
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> concat(Tape<S>& tape, const TensorPtr<S>& a,
                    const TensorPtr<S>& b) {
  check_shapes(a->shape.size() == 1 && b->shape.size() == 1, "concat");
  const int na = a->rows(), nb = b->rows();
  auto y =
      detail::result(tape, {na + nb}, a->requires_grad || b->requires_grad);
  std::copy(a->v.begin(), a->v.end(), y->v.begin());
  std::copy(b->v.begin(), b->v.end(), y->v.begin() + na);
  if (y->requires_grad) {
    tape.push([a, b, y, na, nb] {
      if (a->requires_grad) {
        for (int i = 0; i < na; ++i) a->g[i] += y->g[i];
      }
      if (b->requires_grad) {
        for (int i = 0; i < nb; ++i) b->g[i] += y->g[na + i];
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> dot(Tape<S>& tape, const TensorPtr<S>& a, const TensorPtr<S>& b) {
  check_shapes(a->shape == b->shape && a->shape.size() == 1, "dot");
  auto y = detail::result(tape, {1}, a->requires_grad || b->requires_grad);
  S acc = 0;
  for (std::size_t i = 0; i < a->size(); ++i) acc += a->v[i] * b->v[i];
  y->v[0] = acc;
  if (y->requires_grad) {
    tape.push([a, b, y] {
      const S gy = y->g[0];
      for (std::size_t i = 0; i < a->size(); ++i) {
        if (a->requires_grad) a->g[i] += gy * b->v[i];
        if (b->requires_grad) b->g[i] += gy * a->v[i];
      }
    });
  }
  return y;
}

// Row lookup into a matrix (embedding fetch). Backward scatters.
template <class S>
TensorPtr<S> row(Tape<S>& tape, const TensorPtr<S>& M, int index) {
  check_shapes(M->shape.size() == 2 && index >= 0 && index < M->rows(),
               "row");
  const int n = M->cols();
  auto y = detail::result(tape, {n}, M->requires_grad);
  const S* src = &M->v[static_cast<std::size_t>(index) * n];
  std::copy(src, src + n, y->v.begin());
  if (y->requires_grad) {
    tape.push([M, y, index, n] {
      S* dst = &M->g[static_cast<std::size_t>(index) * n];
      for (int i = 0; i < n; ++i) dst[i] += y->g[i];
    });
  }
  return y;
}

// Softmax over a list of scalar scores, returned as one probability vector.
template <class S>
TensorPtr<S> softmax_scalars(Tape<S>& tape,
                             const std::vector<TensorPtr<S>>& scores) {
  check_shapes(!scores.empty(), "softmax_scalars");
  bool any_grad = false;
  S mx = scores[0]->v[0];
  for (const auto& s : scores) {
    check_shapes(s->size() == 1, "softmax_scalars (scalar scores)");
    any_grad = any_grad || s->requires_grad;
    mx = std::max(mx, s->v[0]);
  }
  const int n = static_cast<int>(scores.size());
  auto y = detail::result(tape, {n}, any_grad);
  S denom = 0;
  for (int i = 0; i < n; ++i) {
    y->v[i] = std::exp(scores[i]->v[0] - mx);
    denom += y->v[i];
  }
  for (int i = 0; i < n; ++i) y->v[i] /= denom;
  if (y->requires_grad) {
    tape.push([scores, y, n] {
      S inner = 0;
      for (int i = 0; i < n; ++i) inner += y->g[i] * y->v[i];
      for (int i = 0; i < n; ++i) {
        if (scores[i]->requires_grad) {
          scores[i]->g[0] += y->v[i] * (y->g[i] - inner);
        }
      }
    });
  }
  return y;
}

// y = sum_i weights[i] * keys[i].
template <class S>
TensorPtr<S> weighted_sum(Tape<S>& tape, const TensorPtr<S>& weights,
                          const std::vector<TensorPtr<S>>& keys) {
  check_shapes(!keys.empty() &&
                   weights->rows() == static_cast<int>(keys.size()),
               "weighted_sum");
  const int n = static_cast<int>(keys.size());
  const int k = keys[0]->rows();
  bool any_grad = weights->requires_grad;
  for (const auto& key : keys) {
    check_shapes(key->rows() == k, "weighted_sum (key extents)");
    any_grad = any_grad || key->requires_grad;
  }
  auto y = detail::result(tape, {k}, any_grad);
  for (int i = 0; i < n; ++i) {
    const S w = weights->v[i];
    for (int j = 0; j < k; ++j) y->v[j] += w * keys[i]->v[j];
  }
  if (y->requires_grad) {
    tape.push([weights, keys, y, n, k] {
      for (int i = 0; i < n; ++i) {
        if (weights->requires_grad) {
          S acc = 0;
          for (int j = 0; j < k; ++j) acc += keys[i]->v[j] * y->g[j];
          weights->g[i] += acc;
        }
        if (keys[i]->requires_grad) {
          const S w = weights->v[i];
          for (int j = 0; j < k; ++j) keys[i]->g[j] += w * y->g[j];
        }
      }
    });
  }
  return y;
}

// Softmax over a 1-D tensor.
template <class S>
TensorPtr<S> softmax_vec(Tape<S>& tape, const TensorPtr<S>& logits) {
  check_shapes(logits->shape.size() == 1, "softmax_vec");
  const int n = logits->rows();
  auto y = detail::result(tape, {n}, logits->requires_grad);
  S mx = logits->v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits->v[i]);
  S denom = 0;
  for (int i = 0; i < n; ++i) {
    y->v[i] = std::exp(logits->v[i] - mx);
    denom += y->v[i];
  }
  for (int i = 0; i < n; ++i) y->v[i] /= denom;
  if (y->requires_grad) {
    tape.push([logits, y, n] {
      S inner = 0;
      for (int i = 0; i < n; ++i) inner += y->g[i] * y->v[i];
      for (int i = 0; i < n; ++i) {
        logits->g[i] += y->v[i] * (y->g[i] - inner);
      }
    });
  }
  return y;
}

// -log softmax(logits)[target], fused for stability.
template <class S>
TensorPtr<S> cross_entropy(Tape<S>& tape, const TensorPtr<S>& logits,
                           int target) {
  check_shapes(logits->shape.size() == 1 && target >= 0 &&
                   target < logits->rows(),
               "cross_entropy");
  const int n = logits->rows();
  S mx = logits->v[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits->v[i]);
  S denom = 0;
  for (int i = 0; i < n; ++i) denom += std::exp(logits->v[i] - mx);
  const S lse = mx + std::log(denom);
  auto y = detail::result(tape, {1}, logits->requires_grad);
  y->v[0] = lse - logits->v[target];
  if (y->requires_grad) {
    tape.push([logits, y, target, mx, lse, n] {
      const S gy = y->g[0];
      for (int i = 0; i < n; ++i) {
        const S p = std::exp(logits->v[i] - lse);
        logits->g[i] += gy * (p - (i == target ? S(1) : S(0)));
      }
    });
  }
  return y;
}

template <class S>
TensorPtr<S> mean_scalars(Tape<S>& tape,
                          const std::vector<TensorPtr<S>>& xs) {
  check_shapes(!xs.empty(), "mean_scalars");
  bool any_grad = false;
  S acc = 0;
  for (const auto& x : xs) {
    check_shapes(x->size() == 1, "mean_scalars (scalar inputs)");
    any_grad = any_grad || x->requires_grad;
    acc += x->v[0];
  }
  const S inv = S(1) / static_cast<S>(xs.size());
  auto y = detail::result(tape, {1}, any_grad);
  y->v[0] = acc * inv;
  if (y->requires_grad) {
    tape.push([xs, y, inv] {
      for (const auto& x : xs) {
        if (x->requires_grad) x->g[0] += y->g[0] * inv;
      }
    });
  }
  return y;
}

// Mean over non-pad positions of -log softmax(logits_t)[target_t].
// exp(result) is the per-token perplexity. Throws when every position is pad.
template <class S>
TensorPtr<S> cross_entropy_loss(Tape<S>& tape,
                                const std::vector<TensorPtr<S>>& logits,
                                const std::vector<int>& targets, int pad_id) {
  check_shapes(logits.size() == targets.size(), "cross_entropy_loss");
  std::vector<TensorPtr<S>> terms;
  for (std::size_t t = 0; t < targets.size(); ++t) {
    if (targets[t] == pad_id) continue;
    terms.push_back(cross_entropy(tape, logits[t], targets[t]));
  }
  if (terms.empty()) {
    throw std::runtime_error("cross_entropy_loss: every position is pad");
  }
  return mean_scalars(tape, terms);
}

}  // namespace ched::nn
