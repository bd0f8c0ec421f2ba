#pragma once

// Batched dense chains with SiLU hidden activations. Weights are borrowed
// through pointers so the same code runs over owned parameters and over
// generated weight vectors. Activations are features x samples.

#include <type_traits>
#include <vector>

#include "symnerf/common.hpp"

namespace symnerf {

template <class S>
struct DenseLayerRef {
  const S* weight = nullptr;  // fan_out x fan_in, row-major
  const S* bias = nullptr;    // fan_out
  S* weight_grad = nullptr;
  S* bias_grad = nullptr;
  int fan_in = 0;
  int fan_out = 0;
};

template <class S>
struct DenseChainCache {
  std::vector<MatrixX<S>> pre;     // per-layer pre-activations
  std::vector<MatrixX<S>> inputs;  // per-layer inputs (post-activation of the previous layer)
};

namespace detail {

template <class S>
MatrixX<S> silu_matrix(const MatrixX<S>& x) {
  return (x.array() / (S(1) + (-x.array()).exp())).matrix();
}

// d_out *= silu'(pre), vectorized
template <class S>
void apply_silu_grad(const MatrixX<S>& pre, MatrixX<S>& d_out) {
  const auto s = (S(1) + (-pre.array()).exp()).inverse();
  d_out.array() *= s * (S(1) + pre.array() * (S(1) - s));
}

}  // namespace detail

/// Runs the chain; hidden layers use SiLU, the last layer is SiLU only when
/// `activate_last`. Returns the final layer output.
template <class S>
MatrixX<S> dense_forward(const std::vector<DenseLayerRef<S>>& layers, const MatrixX<S>& input,
                         std::type_identity_t<DenseChainCache<S>>* cache, bool activate_last = false) {
  MatrixX<S> act = input;
  if (cache) {
    cache->pre.resize(layers.size());
    cache->inputs.resize(layers.size());
  }
  for (std::size_t j = 0; j < layers.size(); ++j) {
    const auto& l = layers[j];
    Eigen::Map<const RowMatrixX<S>> w(l.weight, l.fan_out, l.fan_in);
    Eigen::Map<const VectorX<S>> b(l.bias, l.fan_out);
    MatrixX<S> pre(l.fan_out, act.cols());
    pre.noalias() = w * act;
    pre.colwise() += b;
    const bool activate = j + 1 < layers.size() || activate_last;
    MatrixX<S> next = activate ? detail::silu_matrix(pre) : pre;
    if (cache) {
      cache->inputs[j] = std::move(act);
      cache->pre[j] = std::move(pre);
    }
    act = std::move(next);
  }
  return act;
}

/// Backpropagates dL/d(output); accumulates into the layers' gradient
/// pointers (when set) and returns dL/d(input) when `want_input_grad`.
template <class S>
MatrixX<S> dense_backward(const std::vector<DenseLayerRef<S>>& layers, const DenseChainCache<S>& cache,
                          MatrixX<S> d_out, bool want_input_grad, bool activate_last = false) {
  for (std::size_t jj = layers.size(); jj-- > 0;) {
    const auto& l = layers[jj];
    const bool activated = jj + 1 < layers.size() || activate_last;
    if (activated) detail::apply_silu_grad(cache.pre[jj], d_out);
    if (l.weight_grad) {
      Eigen::Map<RowMatrixX<S>> gw(l.weight_grad, l.fan_out, l.fan_in);
      gw.noalias() += d_out * cache.inputs[jj].transpose();
    }
    if (l.bias_grad) {
      Eigen::Map<VectorX<S>> gb(l.bias_grad, l.fan_out);
      gb += d_out.rowwise().sum();
    }
    if (jj == 0 && !want_input_grad) return {};
    Eigen::Map<const RowMatrixX<S>> w(l.weight, l.fan_out, l.fan_in);
    MatrixX<S> d_in(l.fan_in, d_out.cols());
    d_in.noalias() = w.transpose() * d_out;
    d_out = std::move(d_in);
  }
  return d_out;
}

}  // namespace symnerf
