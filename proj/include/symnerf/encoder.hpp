#pragma once

// Image encoder: a convolutional trunk whose block outputs are upsampled to
// input resolution and concatenated into a pixel-aligned feature volume, plus
// a pooled linear head producing the global latent code.
//
// Each block is conv3x3 (stride 1, zero padding 1) -> SiLU -> 2x2 average
// pool, so the trunk has an overall stride of 2 per block and is exactly
// equivariant to horizontal flips when its kernels are mirror-symmetric.
//
// Activation maps are stored as channels x pixels matrices (column-major, so a
// pixel's channels are contiguous); pixel index = y * width + x.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/image.hpp"

namespace symnerf {

/// Counts feature-volume samples process-wide; used to check ablation wiring.
inline std::atomic<std::uint64_t>& feature_volume_reads() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

template <class S>
struct FeatureVolume {
  int height = 0;
  int width = 0;
  MatrixX<S> grid;  // channels x (height * width)

  int channels() const { return static_cast<int>(grid.rows()); }
  auto at(int y, int x) const { return grid.col(static_cast<Eigen::Index>(y) * width + x); }
};

/// Four-tap bilinear stencil; weights are zero for an out-of-image sample.
template <class S>
struct BilinearTaps {
  std::array<int, 4> index{0, 0, 0, 0};
  std::array<S, 4> weight{S(0), S(0), S(0), S(0)};
  bool valid = false;
};

/// Bilinear stencil at pixel coordinates `uv` on a height x width grid with
/// pixel centers at integers. Samples in the border half-pixel clamp to the
/// edge; samples outside [-0.5, size - 0.5] are invalid.
template <class S>
BilinearTaps<S> bilinear_taps(int height, int width, const Vec2& uv) {
  BilinearTaps<S> taps;
  if (!(uv.x() >= -0.5 && uv.x() <= width - 0.5 && uv.y() >= -0.5 && uv.y() <= height - 0.5)) return taps;
  const double x = std::clamp(uv.x(), 0.0, static_cast<double>(width - 1));
  const double y = std::clamp(uv.y(), 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
  const int y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  taps.index = {y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1};
  taps.weight = {static_cast<S>((1 - ax) * (1 - ay)), static_cast<S>(ax * (1 - ay)), static_cast<S>((1 - ax) * ay),
                 static_cast<S>(ax * ay)};
  taps.valid = true;
  return taps;
}

template <class S, class Out>
void gather_taps(const FeatureVolume<S>& f, const BilinearTaps<S>& taps, Out&& out) {
  feature_volume_reads().fetch_add(1, std::memory_order_relaxed);
  if (!taps.valid) {
    out.setZero();
    return;
  }
  out = taps.weight[0] * f.grid.col(taps.index[0]);
  for (int i = 1; i < 4; ++i) {
    if (taps.weight[i] != S(0)) out += taps.weight[i] * f.grid.col(taps.index[i]);
  }
}

template <class S>
VectorX<S> sample_feature(const FeatureVolume<S>& f, const Vec2& uv) {
  VectorX<S> out(f.channels());
  gather_taps(f, bilinear_taps<S>(f.height, f.width, uv), out);
  return out;
}

template <class S>
struct PointFeatures {
  VectorX<S> local;
  VectorX<S> symmetric;
};

/// Stencils for a point and its mirror image as seen by the reference camera.
template <class S>
std::pair<BilinearTaps<S>, BilinearTaps<S>> point_feature_taps(int height, int width, const Vec3& x,
                                                               const CameraIntrinsics& intr,
                                                               const CameraExtrinsics& extr,
                                                               const SymmetryTransform& m) {
  std::pair<BilinearTaps<S>, BilinearTaps<S>> taps;
  if (auto p = try_project(x, intr, extr)) taps.first = bilinear_taps<S>(height, width, p->uv);
  if (auto p = try_project(mirror_point(x, m), intr, extr)) taps.second = bilinear_taps<S>(height, width, p->uv);
  return taps;
}

template <class S>
PointFeatures<S> extract_point_features(const FeatureVolume<S>& f, const Vec3& x, const CameraIntrinsics& intr,
                                        const CameraExtrinsics& extr, const SymmetryTransform& m) {
  const auto taps = point_feature_taps<S>(f.height, f.width, x, intr, extr, m);
  PointFeatures<S> out{VectorX<S>(f.channels()), VectorX<S>(f.channels())};
  gather_taps(f, taps.first, out.local);
  gather_taps(f, taps.second, out.symmetric);
  return out;
}

struct EncoderConfig {
  int height = 64;
  int width = 64;
  std::vector<int> channels{16, 16, 16, 16};
  int latent_dim = 128;

  int feature_dim() const {
    int n = 0;
    for (int c : channels) n += c;
    return n;
  }

  void validate() const {
    if (channels.empty()) throw std::invalid_argument("EncoderConfig: need at least one block");
    const int factor = 1 << channels.size();
    if (height < factor || width < factor || height % factor != 0 || width % factor != 0)
      throw std::invalid_argument("EncoderConfig: image size must be a multiple of 2^blocks");
    for (int c : channels)
      if (c < 1) throw std::invalid_argument("EncoderConfig: channel counts must be positive");
    if (latent_dim < 1) throw std::invalid_argument("EncoderConfig: latent_dim must be positive");
  }
};

namespace detail {

// Per-axis linear resampling with half-pixel centers and edge clamping.
struct ResampleAxis {
  std::vector<int> i0, i1;
  std::vector<double> w1;

  ResampleAxis(int src, int dst) : i0(dst), i1(dst), w1(dst) {
    const double scale = static_cast<double>(src) / dst;
    for (int x = 0; x < dst; ++x) {
      const double s = std::clamp((x + 0.5) * scale - 0.5, 0.0, static_cast<double>(src - 1));
      i0[x] = std::min(static_cast<int>(std::floor(s)), src - 1);
      i1[x] = std::min(i0[x] + 1, src - 1);
      w1[x] = s - i0[x];
    }
  }
};

template <class S>
void im2col3x3(const MatrixX<S>& in, int h, int w, MatrixX<S>& cols) {
  const int c = static_cast<int>(in.rows());
  cols.setZero(9 * c, static_cast<Eigen::Index>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          const int tap = (dy + 1) * 3 + (dx + 1);
          cols.col(p).segment(tap * c, c) = in.col(static_cast<Eigen::Index>(sy) * w + sx);
        }
      }
    }
  }
}

template <class S>
void col2im3x3(const MatrixX<S>& cols, int c, int h, int w, MatrixX<S>& out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Index p = static_cast<Eigen::Index>(y) * w + x;
      for (int dy = -1; dy <= 1; ++dy) {
        const int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          const int tap = (dy + 1) * 3 + (dx + 1);
          out.col(static_cast<Eigen::Index>(sy) * w + sx) += cols.col(p).segment(tap * c, c);
        }
      }
    }
  }
}

}  // namespace detail

template <class S>
struct EncoderCache {
  struct Block {
    int h = 0, w = 0;    // conv resolution
    MatrixX<S> cols;     // im2col of the block input
    MatrixX<S> pre;      // conv output before activation
    MatrixX<S> pooled;   // block output at (h/2, w/2)
  };
  std::vector<Block> blocks;
  VectorX<S> pooled_mean;
  bool has_features = false;
  bool has_latent = false;
};

template <class S>
struct EncoderOutput {
  VectorX<S> latent;
  FeatureVolume<S> features;
};

template <class S>
class Encoder {
 public:
  Encoder() = default;

  Encoder(EncoderConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    build();
    initialize(seed);
  }

  const EncoderConfig& config() const { return cfg_; }
  int feature_dim() const { return cfg_.feature_dim(); }
  int latent_dim() const { return cfg_.latent_dim; }

  /// Kernel layout: weight(out, tap * in_channels + in) with tap = (dy+1)*3 + (dx+1).
  Param<S>& block_weight(int b) { return params_[2 * b]; }
  Param<S>& block_bias(int b) { return params_[2 * b + 1]; }
  Param<S>& latent_weight() { return params_[2 * num_blocks()]; }
  Param<S>& latent_bias() { return params_[2 * num_blocks() + 1]; }
  int num_blocks() const { return static_cast<int>(cfg_.channels.size()); }

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
    int in = 3;
    for (int b = 0; b < num_blocks(); ++b) {
      fill_uniform(block_weight(b).value, rng, std::sqrt(6.0 / (9.0 * in)));
      std::fill(block_bias(b).value.begin(), block_bias(b).value.end(), S(0));
      in = cfg_.channels[b];
    }
    fill_uniform(latent_weight().value, rng, 1.0 / std::sqrt(static_cast<double>(in)));
    fill_uniform(latent_bias().value, rng, 1.0 / std::sqrt(static_cast<double>(in)));
  }

  EncoderOutput<S> encode(const Image& image, bool want_features = true, bool want_latent = true) const {
    EncoderCache<S> cache;
    return forward(image, cache, want_features, want_latent);
  }

  EncoderOutput<S> forward(const Image& image, EncoderCache<S>& cache, bool want_features = true,
                           bool want_latent = true) const {
    if (image.height != cfg_.height || image.width != cfg_.width || image.channels != 3)
      throw std::invalid_argument("encode: image is " + std::to_string(image.height) + "x" +
                                  std::to_string(image.width) + "x" + std::to_string(image.channels) +
                                  ", expected " + std::to_string(cfg_.height) + "x" + std::to_string(cfg_.width) +
                                  "x3");
    MatrixX<S> act(3, static_cast<Eigen::Index>(image.height) * image.width);
    for (Eigen::Index p = 0; p < act.cols(); ++p)
      for (int c = 0; c < 3; ++c) act(c, p) = static_cast<S>(image.data[p * 3 + c]);

    cache.blocks.assign(num_blocks(), {});
    cache.has_features = want_features;
    cache.has_latent = want_latent;
    int h = cfg_.height, w = cfg_.width, in = 3;
    for (int b = 0; b < num_blocks(); ++b) {
      auto& blk = cache.blocks[b];
      const int out = cfg_.channels[b];
      blk.h = h;
      blk.w = w;
      detail::im2col3x3(act, h, w, blk.cols);
      Eigen::Map<const RowMatrixX<S>> weight(block_weight(b).value.data(), out, 9 * in);
      Eigen::Map<const VectorX<S>> bias(block_bias(b).value.data(), out);
      blk.pre.noalias() = weight * blk.cols;
      blk.pre.colwise() += bias;
      const int h2 = h / 2, w2 = w / 2;
      blk.pooled.setZero(out, static_cast<Eigen::Index>(h2) * w2);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          auto dst = blk.pooled.col(static_cast<Eigen::Index>(y / 2) * w2 + x / 2);
          const auto src = blk.pre.col(static_cast<Eigen::Index>(y) * w + x);
          for (int c = 0; c < out; ++c) dst[c] += S(0.25) * silu(src[c]);
        }
      act = blk.pooled;
      h = h2;
      w = w2;
      in = out;
    }

    EncoderOutput<S> result;
    if (want_latent) {
      cache.pooled_mean = act.rowwise().mean();
      Eigen::Map<const RowMatrixX<S>> lw(latent_weight().value.data(), cfg_.latent_dim, in);
      Eigen::Map<const VectorX<S>> lb(latent_bias().value.data(), cfg_.latent_dim);
      result.latent = lw * cache.pooled_mean + lb;
    }
    if (want_features) {
      result.features.height = cfg_.height;
      result.features.width = cfg_.width;
      result.features.grid.setZero(feature_dim(), static_cast<Eigen::Index>(cfg_.height) * cfg_.width);
      int offset = 0;
      for (int b = 0; b < num_blocks(); ++b) {
        const auto& blk = cache.blocks[b];
        upsample_into(blk.pooled, blk.h / 2, blk.w / 2, offset, result.features.grid);
        offset += cfg_.channels[b];
      }
    }
    return result;
  }

  /// Accumulates parameter gradients given dL/dF (channels x pixels, may be
  /// empty) and dL/dz (may be empty).
  void backward(const EncoderCache<S>& cache, const MatrixX<S>* d_features, const VectorX<S>* d_latent) {
    const int nb = num_blocks();
    std::vector<MatrixX<S>> d_pooled(nb);
    for (int b = 0; b < nb; ++b)
      d_pooled[b].setZero(cfg_.channels[b], static_cast<Eigen::Index>(cache.blocks[b].h / 2) * (cache.blocks[b].w / 2));

    if (d_latent && d_latent->size() > 0) {
      if (!cache.has_latent) throw std::logic_error("Encoder::backward: latent was not computed");
      const int in = cfg_.channels.back();
      Eigen::Map<const RowMatrixX<S>> lw(latent_weight().value.data(), cfg_.latent_dim, in);
      Eigen::Map<RowMatrixX<S>> glw(latent_weight().grad.data(), cfg_.latent_dim, in);
      Eigen::Map<VectorX<S>> glb(latent_bias().grad.data(), cfg_.latent_dim);
      glw.noalias() += (*d_latent) * cache.pooled_mean.transpose();
      glb += *d_latent;
      const VectorX<S> d_mean = lw.transpose() * (*d_latent);
      auto& last = d_pooled[nb - 1];
      last.colwise() += d_mean / static_cast<S>(last.cols());
    }
    if (d_features && d_features->size() > 0) {
      if (!cache.has_features) throw std::logic_error("Encoder::backward: features were not computed");
      int offset = 0;
      for (int b = 0; b < nb; ++b) {
        upsample_backward(*d_features, offset, cfg_.channels[b], cache.blocks[b].h / 2, cache.blocks[b].w / 2,
                          d_pooled[b]);
        offset += cfg_.channels[b];
      }
    }

    MatrixX<S> carry;  // gradient flowing into the previous block's output
    for (int b = nb - 1; b >= 0; --b) {
      const auto& blk = cache.blocks[b];
      const int out = cfg_.channels[b];
      const int in = b == 0 ? 3 : cfg_.channels[b - 1];
      MatrixX<S> d_out = d_pooled[b];
      if (carry.size() > 0) d_out += carry;
      const int w2 = blk.w / 2;
      MatrixX<S> d_pre(out, static_cast<Eigen::Index>(blk.h) * blk.w);
      for (int y = 0; y < blk.h; ++y)
        for (int x = 0; x < blk.w; ++x) {
          const Eigen::Index p = static_cast<Eigen::Index>(y) * blk.w + x;
          const auto g = d_out.col(static_cast<Eigen::Index>(y / 2) * w2 + x / 2);
          for (int c = 0; c < out; ++c) d_pre(c, p) = S(0.25) * g[c] * silu_grad(blk.pre(c, p));
        }
      Eigen::Map<RowMatrixX<S>> gw(block_weight(b).grad.data(), out, 9 * in);
      Eigen::Map<VectorX<S>> gb(block_bias(b).grad.data(), out);
      gw.noalias() += d_pre * blk.cols.transpose();
      gb += d_pre.rowwise().sum();
      if (b > 0) {
        Eigen::Map<const RowMatrixX<S>> weight(block_weight(b).value.data(), out, 9 * in);
        const MatrixX<S> d_cols = weight.transpose() * d_pre;
        carry.setZero(in, static_cast<Eigen::Index>(blk.h) * blk.w);
        detail::col2im3x3(d_cols, in, blk.h, blk.w, carry);
      }
    }
  }

 private:
  void build() {
    params_.clear();
    int in = 3;
    for (int b = 0; b < num_blocks(); ++b) {
      const auto out = static_cast<std::size_t>(cfg_.channels[b]);
      params_.emplace_back("encoder.block" + std::to_string(b) + ".weight",
                           std::vector<std::size_t>{out, static_cast<std::size_t>(9 * in)});
      params_.emplace_back("encoder.block" + std::to_string(b) + ".bias", std::vector<std::size_t>{out});
      in = cfg_.channels[b];
    }
    const auto k = static_cast<std::size_t>(cfg_.latent_dim);
    params_.emplace_back("encoder.latent.weight", std::vector<std::size_t>{k, static_cast<std::size_t>(in)});
    params_.emplace_back("encoder.latent.bias", std::vector<std::size_t>{k});
  }

  const Param<S>& block_weight(int b) const { return params_[2 * b]; }
  const Param<S>& block_bias(int b) const { return params_[2 * b + 1]; }
  const Param<S>& latent_weight() const { return params_[2 * num_blocks()]; }
  const Param<S>& latent_bias() const { return params_[2 * num_blocks() + 1]; }

  void upsample_into(const MatrixX<S>& src, int h, int w, int offset, MatrixX<S>& grid) const {
    const detail::ResampleAxis ax(w, cfg_.width), ay(h, cfg_.height);
    const Eigen::Index c = src.rows();
    for (int y = 0; y < cfg_.height; ++y) {
      const S wy1 = static_cast<S>(ay.w1[y]), wy0 = S(1) - wy1;
      for (int x = 0; x < cfg_.width; ++x) {
        const S wx1 = static_cast<S>(ax.w1[x]), wx0 = S(1) - wx1;
        auto dst = grid.col(static_cast<Eigen::Index>(y) * cfg_.width + x).segment(offset, c);
        dst = wy0 * (wx0 * src.col(ay.i0[y] * w + ax.i0[x]) + wx1 * src.col(ay.i0[y] * w + ax.i1[x])) +
              wy1 * (wx0 * src.col(ay.i1[y] * w + ax.i0[x]) + wx1 * src.col(ay.i1[y] * w + ax.i1[x]));
      }
    }
  }

  void upsample_backward(const MatrixX<S>& d_grid, int offset, int c, int h, int w, MatrixX<S>& d_src) const {
    const detail::ResampleAxis ax(w, cfg_.width), ay(h, cfg_.height);
    for (int y = 0; y < cfg_.height; ++y) {
      const S wy1 = static_cast<S>(ay.w1[y]), wy0 = S(1) - wy1;
      for (int x = 0; x < cfg_.width; ++x) {
        const S wx1 = static_cast<S>(ax.w1[x]), wx0 = S(1) - wx1;
        const auto g = d_grid.col(static_cast<Eigen::Index>(y) * cfg_.width + x).segment(offset, c);
        d_src.col(ay.i0[y] * w + ax.i0[x]) += (wy0 * wx0) * g;
        d_src.col(ay.i0[y] * w + ax.i1[x]) += (wy0 * wx1) * g;
        d_src.col(ay.i1[y] * w + ax.i0[x]) += (wy1 * wx0) * g;
        d_src.col(ay.i1[y] * w + ax.i1[x]) += (wy1 * wx1) * g;
      }
    }
  }

  EncoderConfig cfg_;
  std::vector<Param<S>> params_;
};

}  // namespace symnerf
