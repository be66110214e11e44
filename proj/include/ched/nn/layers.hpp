#pragma once

#include <utility>
#include <vector>

#include "ched/nn/graph.hpp"

namespace ched::nn {

// Gate convention: z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
// cand = tanh(Wh x + Uh (r.h) + bh), h' = (1-z).h + z.cand.
template <class S>
struct GruParams {
  TensorPtr<S> Wz, Uz, bz;
  TensorPtr<S> Wr, Ur, br;
  TensorPtr<S> Wh, Uh, bh;

  int input_size() const { return Wz->cols(); }
  int hidden_size() const { return Wz->rows(); }

  bool any_grad() const {
    return Wz->requires_grad || Uz->requires_grad || bz->requires_grad ||
           Wr->requires_grad || Ur->requires_grad || br->requires_grad ||
           Wh->requires_grad || Uh->requires_grad || bh->requires_grad;
  }
};

template <class S>
struct BiGruParams {
  GruParams<S> fwd, bwd;
};

namespace detail {

template <class S>
void matvec_into(const Tensor<S>& W, const S* x, S* out, bool accumulate) {
  const int m = W.rows(), n = W.cols();
  for (int i = 0; i < m; ++i) {
    const S* wrow = &W.v[static_cast<std::size_t>(i) * n];
    S acc = accumulate ? out[i] : S(0);
    for (int j = 0; j < n; ++j) acc += wrow[j] * x[j];
    out[i] = acc;
  }
}

template <class S>
void add_outer(Tensor<S>& W, const std::vector<S>& dy, const S* x) {
  const int m = W.rows(), n = W.cols();
  for (int i = 0; i < m; ++i) {
    const S d = dy[i];
    if (d == S(0)) continue;
    S* grow = &W.g[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) grow[j] += d * x[j];
  }
}

template <class S>
void add_transposed_matvec(const Tensor<S>& W, const std::vector<S>& dy,
                           S* dx) {
  const int m = W.rows(), n = W.cols();
  for (int i = 0; i < m; ++i) {
    const S d = dy[i];
    if (d == S(0)) continue;
    const S* wrow = &W.v[static_cast<std::size_t>(i) * n];
    for (int j = 0; j < n; ++j) dx[j] += d * wrow[j];
  }
}

}  // namespace detail

// One fused GRU step; the backward closure hand-propagates through all
// three gates.
template <class S>
TensorPtr<S> gru_step(Tape<S>& tape, const TensorPtr<S>& x,
                      const TensorPtr<S>& h_prev, const GruParams<S>& p) {
  const int H = p.hidden_size();
  const int E = p.input_size();
  check_shapes(x->shape.size() == 1 && x->rows() == E, "gru_step (input)");
  check_shapes(h_prev->shape.size() == 1 && h_prev->rows() == H,
               "gru_step (hidden)");

  std::vector<S> az(H), ar(H), ac(H), z(H), r(H), rh(H), cand(H);
  detail::matvec_into(*p.Wz, x->v.data(), az.data(), false);
  detail::matvec_into(*p.Uz, h_prev->v.data(), az.data(), true);
  detail::matvec_into(*p.Wr, x->v.data(), ar.data(), false);
  detail::matvec_into(*p.Ur, h_prev->v.data(), ar.data(), true);
  for (int i = 0; i < H; ++i) {
    az[i] += p.bz->v[i];
    ar[i] += p.br->v[i];
    z[i] = az[i] >= S(0) ? S(1) / (S(1) + std::exp(-az[i]))
                         : std::exp(az[i]) / (S(1) + std::exp(az[i]));
    r[i] = ar[i] >= S(0) ? S(1) / (S(1) + std::exp(-ar[i]))
                         : std::exp(ar[i]) / (S(1) + std::exp(ar[i]));
    rh[i] = r[i] * h_prev->v[i];
  }
  detail::matvec_into(*p.Wh, x->v.data(), ac.data(), false);
  detail::matvec_into(*p.Uh, rh.data(), ac.data(), true);
  for (int i = 0; i < H; ++i) cand[i] = std::tanh(ac[i] + p.bh->v[i]);

  bool any_grad = p.any_grad() || x->requires_grad || h_prev->requires_grad;
  auto h = detail::result(tape, {H}, any_grad);
  for (int i = 0; i < H; ++i) {
    h->v[i] = (S(1) - z[i]) * h_prev->v[i] + z[i] * cand[i];
  }
  if (!h->requires_grad) return h;

  tape.push([x, h_prev, h, p, z = std::move(z), r = std::move(r),
             rh = std::move(rh), cand = std::move(cand), H, E] {
    std::vector<S> dz(H), dc(H), dac(H), drh(H), dar(H), daz(H);
    for (int i = 0; i < H; ++i) {
      const S gh = h->g[i];
      dz[i] = gh * (cand[i] - h_prev->v[i]);
      dc[i] = gh * z[i];
      if (h_prev->requires_grad) h_prev->g[i] += gh * (S(1) - z[i]);
      dac[i] = dc[i] * (S(1) - cand[i] * cand[i]);
      daz[i] = dz[i] * z[i] * (S(1) - z[i]);
    }
    if (p.Wh->requires_grad) detail::add_outer(*p.Wh, dac, x->v.data());
    if (p.Uh->requires_grad) detail::add_outer(*p.Uh, dac, rh.data());
    if (p.bh->requires_grad) {
      for (int i = 0; i < H; ++i) p.bh->g[i] += dac[i];
    }
    if (x->requires_grad) {
      detail::add_transposed_matvec(*p.Wh, dac, x->g.data());
    }
    detail::add_transposed_matvec(*p.Uh, dac,
                                  drh.data());  // drh starts at zero
    for (int i = 0; i < H; ++i) {
      const S dr = drh[i] * h_prev->v[i];
      if (h_prev->requires_grad) h_prev->g[i] += drh[i] * r[i];
      dar[i] = dr * r[i] * (S(1) - r[i]);
    }
    if (p.Wr->requires_grad) detail::add_outer(*p.Wr, dar, x->v.data());
    if (p.Ur->requires_grad) detail::add_outer(*p.Ur, dar, h_prev->v.data());
    if (p.br->requires_grad) {
      for (int i = 0; i < H; ++i) p.br->g[i] += dar[i];
    }
    if (x->requires_grad) {
      detail::add_transposed_matvec(*p.Wr, dar, x->g.data());
    }
    if (h_prev->requires_grad) {
      detail::add_transposed_matvec(*p.Ur, dar, h_prev->g.data());
    }
    if (p.Wz->requires_grad) detail::add_outer(*p.Wz, daz, x->v.data());
    if (p.Uz->requires_grad) detail::add_outer(*p.Uz, daz, h_prev->v.data());
    if (p.bz->requires_grad) {
      for (int i = 0; i < H; ++i) p.bz->g[i] += daz[i];
    }
    if (x->requires_grad) {
      detail::add_transposed_matvec(*p.Wz, daz, x->g.data());
    }
    if (h_prev->requires_grad) {
      detail::add_transposed_matvec(*p.Uz, daz, h_prev->g.data());
    }
  });
  return h;
}

template <class S>
struct EncodeResult {
  std::vector<TensorPtr<S>> states;
  TensorPtr<S> final;
};

// Unidirectional: states h_1..h_T from a zero initial state, final = h_T.
template <class S>
EncodeResult<S> encode_sequence(Tape<S>& tape,
                                const std::vector<TensorPtr<S>>& xs,
                                const GruParams<S>& p) {
  if (xs.empty()) {
    throw std::runtime_error("encode_sequence: empty input sequence");
  }
  EncodeResult<S> out;
  TensorPtr<S> h = make_tensor<S>({p.hidden_size()});
  for (const auto& x : xs) {
    h = gru_step(tape, x, h, p);
    out.states.push_back(h);
  }
  out.final = h;
  return out;
}

// Bidirectional: per-position concatenation of the two runs, final is
// forward h_T joined with backward h_1.
template <class S>
EncodeResult<S> encode_sequence(Tape<S>& tape,
                                const std::vector<TensorPtr<S>>& xs,
                                const BiGruParams<S>& p) {
  if (xs.empty()) {
    throw std::runtime_error("encode_sequence: empty input sequence");
  }
  const std::size_t T = xs.size();
  EncodeResult<S> fwd = encode_sequence(tape, xs, p.fwd);
  std::vector<TensorPtr<S>> rev(xs.rbegin(), xs.rend());
  EncodeResult<S> bwd = encode_sequence(tape, rev, p.bwd);

  EncodeResult<S> out;
  for (std::size_t t = 0; t < T; ++t) {
    out.states.push_back(
        concat(tape, fwd.states[t], bwd.states[T - 1 - t]));
  }
  out.final = concat(tape, fwd.final, bwd.final);
  return out;
}

template <class S>
struct AttentionParams {
  TensorPtr<S> Wq, Wk, v;
};

template <class S>
struct AttendResult {
  TensorPtr<S> context;
  TensorPtr<S> weights;  // simplex vector over keys
};

// Key projections Wk*k_i are shared across decode steps; build them once.
template <class S>
struct AttendedKeys {
  std::vector<TensorPtr<S>> keys;
  std::vector<TensorPtr<S>> projected;
};

template <class S>
AttendedKeys<S> project_keys(Tape<S>& tape, const AttentionParams<S>& p,
                             const std::vector<TensorPtr<S>>& keys) {
  check_shapes(!keys.empty(), "project_keys");
  AttendedKeys<S> ak;
  ak.keys = keys;
  ak.projected.reserve(keys.size());
  for (const auto& k : keys) ak.projected.push_back(matvec(tape, p.Wk, k));
  return ak;
}

// Additive scoring: e_i = v . tanh(Wq q + Wk k_i).
template <class S>
AttendResult<S> attend(Tape<S>& tape, const AttentionParams<S>& p,
                       const AttendedKeys<S>& ak, const TensorPtr<S>& query) {
  auto q_proj = matvec(tape, p.Wq, query);
  std::vector<TensorPtr<S>> scores;
  scores.reserve(ak.keys.size());
  for (const auto& kp : ak.projected) {
    scores.push_back(dot(tape, p.v, tanh_op(tape, add(tape, q_proj, kp))));
  }
  AttendResult<S> out;
  out.weights = softmax_scalars(tape, scores);
  out.context = weighted_sum(tape, out.weights, ak.keys);
  return out;
}

template <class S>
AttendResult<S> attend(Tape<S>& tape, const AttentionParams<S>& p,
                       const std::vector<TensorPtr<S>>& keys,
                       const TensorPtr<S>& query) {
  return attend(tape, p, project_keys(tape, p, keys), query);
}

template <class S>
struct MlpParams {
  TensorPtr<S> W1, b1, W2, b2;
};

// tanh(W2 tanh(W1 x + b1) + b2); the outer tanh keeps the output inside the
// GRU state range so it can serve as an initial hidden state.
template <class S>
TensorPtr<S> mlp_bridge(Tape<S>& tape, const MlpParams<S>& p,
                        const TensorPtr<S>& input) {
  auto hidden = tanh_op(tape, affine(tape, p.W1, input, p.b1));
  return tanh_op(tape, affine(tape, p.W2, hidden, p.b2));
}

}  // namespace ched::nn
