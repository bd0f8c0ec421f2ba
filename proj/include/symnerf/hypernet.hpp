#pragma once

// Hypernetwork: latent code -> flat field parameter vector. A shared SiLU
// trunk feeds one linear head per field layer.

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "symnerf/common.hpp"
#include "symnerf/field.hpp"
#include "symnerf/mlp.hpp"

namespace symnerf {

/// Counts generate calls process-wide; used to check ablation wiring.
inline std::atomic<std::uint64_t>& hypernet_invocations() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

struct HypernetConfig {
  int latent_dim = 128;
  int hidden = 256;
  int trunk_layers = 2;
};

template <class S>
struct HypernetCache {
  DenseChainCache<S> trunk;
  VectorX<S> hidden;
};

template <class S>
class Hypernet {
 public:
  Hypernet() = default;

  Hypernet(HypernetConfig cfg, FieldLayout layout, std::uint64_t seed) : cfg_(cfg), layout_(std::move(layout)) {
    if (cfg_.latent_dim < 1 || cfg_.hidden < 1 || cfg_.trunk_layers < 1)
      throw std::invalid_argument("HypernetConfig: sizes must be positive");
    build();
    initialize(seed);
  }

  const HypernetConfig& config() const { return cfg_; }
  const FieldLayout& layout() const { return layout_; }
  std::vector<Param<S>>& params() { return params_; }
  const std::vector<Param<S>>& params() const { return params_; }
  ParameterList<S> parameter_list() {
    ParameterList<S> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    int in = cfg_.latent_dim;
    for (int j = 0; j < cfg_.trunk_layers; ++j) {
      fill_uniform(params_[2 * j].value, rng, std::sqrt(6.0 / in));
      std::fill(params_[2 * j + 1].value.begin(), params_[2 * j + 1].value.end(), S(0));
      in = cfg_.hidden;
    }
    // Heads start near a standard fan-in initialization of the target layer:
    // the bias carries a random weight draw and the weight adds a
    // latent-dependent perturbation of the same scale.
    for (std::size_t j = 0; j < layout_.num_layers(); ++j) {
      const double target_scale = 1.0 / std::sqrt(static_cast<double>(layout_.layers()[j].fan_in));
      auto& w = head_weight(j);
      auto& b = head_bias(j);
      fill_uniform(w.value, rng, std::sqrt(3.0 / cfg_.hidden) * target_scale);
      const std::size_t weights = layout_.weight_count(j);
      for (std::size_t i = 0; i < b.size(); ++i)
        b.value[i] = i < weights ? static_cast<S>(rng.uniform(-1.0, 1.0) * std::sqrt(3.0) * target_scale) : S(0);
    }
  }

  FieldParameters<S> generate(const VectorX<S>& z) const {
    HypernetCache<S> cache;
    return forward(z, cache);
  }

  FieldParameters<S> forward(const VectorX<S>& z, HypernetCache<S>& cache) const {
    if (z.size() != cfg_.latent_dim)
      throw std::invalid_argument("generate_field_params: latent dimension " + std::to_string(z.size()) +
                                  " does not match configured " + std::to_string(cfg_.latent_dim));
    hypernet_invocations().fetch_add(1, std::memory_order_relaxed);
    const MatrixX<S> h = dense_forward(trunk_refs(), MatrixX<S>(z), &cache.trunk, /*activate_last=*/true);
    cache.hidden = h.col(0);
    FieldParameters<S> out;
    out.layout = layout_;
    out.values.resize(static_cast<Eigen::Index>(layout_.total()));
    for (std::size_t j = 0; j < layout_.num_layers(); ++j) {
      const auto& w = head_weight(j);
      const auto& b = head_bias(j);
      const auto rows = static_cast<Eigen::Index>(b.size());
      Eigen::Map<const RowMatrixX<S>> wm(w.value.data(), rows, cfg_.hidden);
      Eigen::Map<const VectorX<S>> bm(b.value.data(), rows);
      out.values.segment(static_cast<Eigen::Index>(layout_.offset(j)), rows).noalias() = wm * cache.hidden + bm;
    }
    return out;
  }

  /// Accumulates parameter gradients from dL/dtheta; returns dL/dz.
  VectorX<S> backward(const HypernetCache<S>& cache, const VectorX<S>& d_theta) {
    if (static_cast<std::size_t>(d_theta.size()) != layout_.total())
      throw std::invalid_argument("Hypernet::backward: gradient length mismatch");
    VectorX<S> d_hidden = VectorX<S>::Zero(cfg_.hidden);
    for (std::size_t j = 0; j < layout_.num_layers(); ++j) {
      auto& w = head_weight(j);
      auto& b = head_bias(j);
      const auto rows = static_cast<Eigen::Index>(b.size());
      const auto g = d_theta.segment(static_cast<Eigen::Index>(layout_.offset(j)), rows);
      Eigen::Map<const RowMatrixX<S>> wm(w.value.data(), rows, cfg_.hidden);
      Eigen::Map<RowMatrixX<S>> gw(w.grad.data(), rows, cfg_.hidden);
      Eigen::Map<VectorX<S>> gb(b.grad.data(), rows);
      gw.noalias() += g * cache.hidden.transpose();
      gb += g;
      d_hidden.noalias() += wm.transpose() * g;
    }
    const MatrixX<S> dz = dense_backward(trunk_refs_mut(), cache.trunk, MatrixX<S>(d_hidden), true, true);
    return dz.col(0);
  }

 private:
  void build() {
    params_.clear();
    std::size_t in = static_cast<std::size_t>(cfg_.latent_dim);
    const auto hidden = static_cast<std::size_t>(cfg_.hidden);
    for (int j = 0; j < cfg_.trunk_layers; ++j) {
      params_.emplace_back("hypernet.trunk" + std::to_string(j) + ".weight", std::vector<std::size_t>{hidden, in});
      params_.emplace_back("hypernet.trunk" + std::to_string(j) + ".bias", std::vector<std::size_t>{hidden});
      in = hidden;
    }
    for (std::size_t j = 0; j < layout_.num_layers(); ++j) {
      const std::size_t rows = layout_.weight_count(j) + static_cast<std::size_t>(layout_.layers()[j].fan_out);
      params_.emplace_back("hypernet.head" + std::to_string(j) + ".weight", std::vector<std::size_t>{rows, hidden});
      params_.emplace_back("hypernet.head" + std::to_string(j) + ".bias", std::vector<std::size_t>{rows});
    }
  }

  Param<S>& head_weight(std::size_t j) { return params_[2 * (cfg_.trunk_layers + j)]; }
  Param<S>& head_bias(std::size_t j) { return params_[2 * (cfg_.trunk_layers + j) + 1]; }
  const Param<S>& head_weight(std::size_t j) const { return params_[2 * (cfg_.trunk_layers + j)]; }
  const Param<S>& head_bias(std::size_t j) const { return params_[2 * (cfg_.trunk_layers + j) + 1]; }

  std::vector<DenseLayerRef<S>> trunk_refs() const {
    std::vector<DenseLayerRef<S>> refs;
    int in = cfg_.latent_dim;
    for (int j = 0; j < cfg_.trunk_layers; ++j) {
      DenseLayerRef<S> r;
      r.weight = params_[2 * j].value.data();
      r.bias = params_[2 * j + 1].value.data();
      r.fan_in = in;
      r.fan_out = cfg_.hidden;
      refs.push_back(r);
      in = cfg_.hidden;
    }
    return refs;
  }

  std::vector<DenseLayerRef<S>> trunk_refs_mut() {
    auto refs = trunk_refs();
    for (int j = 0; j < cfg_.trunk_layers; ++j) {
      refs[j].weight_grad = params_[2 * j].grad.data();
      refs[j].bias_grad = params_[2 * j + 1].grad.data();
    }
    return refs;
  }

  HypernetConfig cfg_;
  FieldLayout layout_;
  std::vector<Param<S>> params_;
};

/// Free-function form of the hypernetwork forward pass.
template <class S>
FieldParameters<S> generate_field_params(const VectorX<S>& z, const Hypernet<S>& net, const FieldLayout& layout) {
  if (!(layout == net.layout())) throw std::invalid_argument("generate_field_params: layout mismatch");
  return net.generate(z);
}

}  // namespace symnerf
