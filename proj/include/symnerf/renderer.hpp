#pragma once

// Emission-absorption compositing along rays.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"

namespace symnerf {

struct RenderConfig {
  double near = 1.8;
  double far = 4.2;
  int samples_per_ray = 64;
  bool stratified = false;
  Vec3 background = Vec3::Ones();

  void validate() const {
    if (!(near > 0.0) || !(near < far)) throw std::invalid_argument("RenderConfig: require 0 < near < far");
    if (samples_per_ray < 1) throw std::invalid_argument("RenderConfig: samples_per_ray must be >= 1");
    if ((background.array() < 0.0).any() || (background.array() > 1.0).any())
      throw std::invalid_argument("RenderConfig: background must lie in [0,1]");
  }
};

/// Optical depths above this are clamped before exponentiation.
inline constexpr double kMaxOpticalDepth = 80.0;

/// Compositing of `count` samples. `colors` holds 3 values per sample.
/// Writes the pixel, per-sample weights T_k * (1 - exp(-sigma_k delta_k)) and
/// returns the transmittance past the last sample.
template <class S>
S composite_samples(const S* colors, const S* densities, const S* deltas, int count, const S* background, S* pixel,
                    S* weights) {
  S transmittance = S(1);
  pixel[0] = pixel[1] = pixel[2] = S(0);
  for (int k = 0; k < count; ++k) {
    const S tau = std::min(densities[k] * deltas[k], static_cast<S>(kMaxOpticalDepth));
    const S survive = std::exp(-tau);
    const S w = transmittance * (S(1) - survive);
    weights[k] = w;
    for (int c = 0; c < 3; ++c) pixel[c] += w * colors[3 * k + c];
    transmittance *= survive;
  }
  for (int c = 0; c < 3; ++c) pixel[c] += transmittance * background[c];
  return transmittance;
}

/// Gradients of composite_samples given dL/dpixel. Writes dL/dcolor (3 per
/// sample) and dL/ddensity.
template <class S>
void composite_samples_backward(const S* colors, const S* densities, const S* deltas, int count, const S* background,
                                const S* weights, S transmittance_end, const S* d_pixel, S* d_colors,
                                S* d_densities) {
  // suffix = sum_{j>k} w_j c_j + T_end * bg, dotted with d_pixel
  S suffix = transmittance_end * (d_pixel[0] * background[0] + d_pixel[1] * background[1] +
                                  d_pixel[2] * background[2]);
  // T_{k+1} recovered from the forward recursion
  S t_next = transmittance_end;
  for (int k = count - 1; k >= 0; --k) {
    const S raw_tau = densities[k] * deltas[k];
    const S dot = d_pixel[0] * colors[3 * k] + d_pixel[1] * colors[3 * k + 1] + d_pixel[2] * colors[3 * k + 2];
    for (int c = 0; c < 3; ++c) d_colors[3 * k + c] = weights[k] * d_pixel[c];
    d_densities[k] = raw_tau < static_cast<S>(kMaxOpticalDepth) ? deltas[k] * (t_next * dot - suffix) : S(0);
    suffix += weights[k] * dot;
    t_next += weights[k];  // T_k = T_{k+1} + w_k
  }
}

struct CompositeResult {
  Vec3 pixel = Vec3::Zero();
  std::vector<double> weights;
  double transmittance_end = 1.0;
};

inline CompositeResult composite(const std::vector<Vec3>& colors, const std::vector<double>& densities,
                                 const std::vector<double>& deltas, const Vec3& background) {
  if (colors.size() != densities.size() || colors.size() != deltas.size())
    throw std::invalid_argument("composite: colors, densities and deltas must have equal length");
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (!(deltas[k] > 0.0)) throw std::invalid_argument("composite: deltas must be positive");
    if (!(densities[k] >= 0.0)) throw std::invalid_argument("composite: densities must be non-negative");
  }
  const int count = static_cast<int>(colors.size());
  std::vector<double> flat(3 * colors.size());
  for (int k = 0; k < count; ++k)
    for (int c = 0; c < 3; ++c) flat[3 * k + c] = colors[k][c];
  CompositeResult r;
  r.weights.resize(colors.size());
  r.transmittance_end =
      composite_samples(flat.data(), densities.data(), deltas.data(), count, background.data(), r.pixel.data(),
                        r.weights.data());
  return r;
}

}  // namespace symnerf
