#pragma once

// The conditioned radiance field: positional encodings of position and view
// direction, concatenated with the pixel-aligned and symmetric features, fed
// through an MLP whose weights come from a flat parameter vector.

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/mlp.hpp"

namespace symnerf {

struct PositionalEncodingSpec {
  int num_frequencies = 6;
  bool include_input = true;

  int encoded_dim(int input_dim) const { return (include_input ? input_dim : 0) + 2 * input_dim * num_frequencies; }
};

/// [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^(L-1) pi v), cos(2^(L-1) pi v)]
template <class S, class In, class Out>
void positional_encode_into(const In& v, const PositionalEncodingSpec& spec, Out&& out) {
  const int d = static_cast<int>(v.size());
  int o = 0;
  if (spec.include_input)
    for (int i = 0; i < d; ++i) out[o++] = static_cast<S>(v[i]);
  if (spec.num_frequencies == 0) return;
  // double-angle recurrence from the base frequency; one sin/cos per component
  double sn[8], cs[8];
  std::vector<double> sn_heap, cs_heap;
  double* sp = sn;
  double* cp = cs;
  if (d > 8) {
    sn_heap.resize(d);
    cs_heap.resize(d);
    sp = sn_heap.data();
    cp = cs_heap.data();
  }
  for (int i = 0; i < d; ++i) {
    sp[i] = std::sin(M_PI * static_cast<double>(v[i]));
    cp[i] = std::cos(M_PI * static_cast<double>(v[i]));
  }
  for (int j = 0; j < spec.num_frequencies; ++j) {
    for (int i = 0; i < d; ++i) {
      out[o + i] = static_cast<S>(sp[i]);
      out[o + d + i] = static_cast<S>(cp[i]);
      const double s2 = 2.0 * sp[i] * cp[i];
      cp[i] = (cp[i] - sp[i]) * (cp[i] + sp[i]);
      sp[i] = s2;
    }
    o += 2 * d;
  }
}

template <class S = double>
VectorX<S> positional_encode(const VectorX<S>& v, const PositionalEncodingSpec& spec) {
  VectorX<S> out(spec.encoded_dim(static_cast<int>(v.size())));
  positional_encode_into<S>(v, spec, out);
  return out;
}

/// dL/dv given dL/d(encoding).
template <class S, class In, class Grad>
VectorX<S> positional_encode_backward(const In& v, const PositionalEncodingSpec& spec, const Grad& d_enc) {
  const int d = static_cast<int>(v.size());
  VectorX<S> dv = VectorX<S>::Zero(d);
  int o = 0;
  if (spec.include_input) {
    for (int i = 0; i < d; ++i) dv[i] += d_enc[o++];
  }
  double freq = M_PI;
  for (int j = 0; j < spec.num_frequencies; ++j, freq *= 2.0) {
    for (int i = 0; i < d; ++i) {
      const double a = freq * static_cast<double>(v[i]);
      dv[i] += static_cast<S>(freq * (std::cos(a) * d_enc[o + i] - std::sin(a) * d_enc[o + d + i]));
    }
    o += 2 * d;
  }
  return dv;
}

/// Which image features the field consumes.
enum class FeatureInputs { none = 0, local = 1, local_and_symmetric = 2 };

struct FieldLayer {
  int fan_in = 0;
  int fan_out = 0;
};

/// Shape of the field MLP; the flat parameter vector stores, per layer, the
/// row-major fan_out x fan_in weight followed by the fan_out bias.
class FieldLayout {
 public:
  FieldLayout() = default;
  explicit FieldLayout(std::vector<FieldLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("FieldLayout: no layers");
    std::size_t offset = 0;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      const auto& l = layers_[j];
      if (l.fan_in < 1 || l.fan_out < 1) throw std::invalid_argument("FieldLayout: layer sizes must be positive");
      if (j > 0 && l.fan_in != layers_[j - 1].fan_out)
        throw std::invalid_argument("FieldLayout: layer " + std::to_string(j) + " fan_in does not match previous fan_out");
      offsets_.push_back(offset);
      offset += static_cast<std::size_t>(l.fan_in + 1) * l.fan_out;
    }
    total_ = offset;
  }

  const std::vector<FieldLayer>& layers() const { return layers_; }
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t total() const { return total_; }
  std::size_t offset(std::size_t j) const { return offsets_[j]; }
  std::size_t weight_count(std::size_t j) const {
    return static_cast<std::size_t>(layers_[j].fan_in) * layers_[j].fan_out;
  }
  int input_dim() const { return layers_.front().fan_in; }
  int output_dim() const { return layers_.back().fan_out; }

  template <class S>
  std::vector<DenseLayerRef<S>> bind(const S* theta, S* theta_grad = nullptr) const {
    std::vector<DenseLayerRef<S>> refs;
    for (std::size_t j = 0; j < layers_.size(); ++j) {
      DenseLayerRef<S> r;
      r.fan_in = layers_[j].fan_in;
      r.fan_out = layers_[j].fan_out;
      r.weight = theta + offsets_[j];
      r.bias = r.weight + weight_count(j);
      if (theta_grad) {
        r.weight_grad = theta_grad + offsets_[j];
        r.bias_grad = r.weight_grad + weight_count(j);
      }
      refs.push_back(r);
    }
    return refs;
  }

  bool operator==(const FieldLayout& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t j = 0; j < layers_.size(); ++j)
      if (layers_[j].fan_in != o.layers_[j].fan_in || layers_[j].fan_out != o.layers_[j].fan_out) return false;
    return true;
  }

 private:
  std::vector<FieldLayer> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

struct FieldConfig {
  PositionalEncodingSpec position{6, true};
  PositionalEncodingSpec direction{4, true};
  int width = 128;
  int depth = 4;  // hidden layers
  int feature_dim = 64;
  FeatureInputs features = FeatureInputs::local_and_symmetric;

  int position_dim() const { return position.encoded_dim(3); }
  int direction_dim() const { return direction.encoded_dim(3); }
  int feature_blocks() const { return static_cast<int>(features); }
  int input_dim() const { return position_dim() + direction_dim() + feature_blocks() * feature_dim; }

  /// Trunk of `depth` hidden layers of `width`, then a joint head emitting
  /// 3 color logits and 1 density logit.
  FieldLayout layout() const {
    if (width < 1 || depth < 1) throw std::invalid_argument("FieldConfig: width and depth must be positive");
    std::vector<FieldLayer> layers;
    layers.push_back({input_dim(), width});
    for (int j = 1; j < depth; ++j) layers.push_back({width, width});
    layers.push_back({width, 4});
    FieldLayout l(std::move(layers));
    if (l.input_dim() != position_dim() + direction_dim() + feature_blocks() * feature_dim)
      throw std::logic_error("FieldConfig: first-layer fan_in does not match the field input");
    return l;
  }
};

template <class S>
struct FieldParameters {
  VectorX<S> values;
  FieldLayout layout;

  void validate() const {
    if (static_cast<std::size_t>(values.size()) != layout.total())
      throw std::invalid_argument("FieldParameters: length does not match layout");
    if (!values.allFinite()) throw std::invalid_argument("FieldParameters: non-finite values");
  }
};

/// Standard fan-in initialization of a field's weights; biases zero.
template <class S>
VectorX<S> default_field_init(const FieldLayout& layout, Rng& rng) {
  VectorX<S> theta = VectorX<S>::Zero(static_cast<Eigen::Index>(layout.total()));
  for (std::size_t j = 0; j < layout.num_layers(); ++j) {
    const double bound = std::sqrt(3.0 / layout.layers()[j].fan_in);
    for (std::size_t i = 0; i < layout.weight_count(j); ++i)
      theta[static_cast<Eigen::Index>(layout.offset(j) + i)] = static_cast<S>(rng.uniform(-bound, bound));
  }
  return theta;
}

struct RadianceSample {
  Vec3 color;
  double density = 0.0;
};

/// Fills one input column: [gamma_X(X), gamma_d(d), local, symmetric].
template <class S, class Col>
void assemble_field_input(const FieldConfig& cfg, const Vec3& x, const Vec3& d, const S* local, const S* symmetric,
                          Col&& col) {
  positional_encode_into<S>(x, cfg.position, col.segment(0, cfg.position_dim()));
  positional_encode_into<S>(d, cfg.direction, col.segment(cfg.position_dim(), cfg.direction_dim()));
  int o = cfg.position_dim() + cfg.direction_dim();
  if (cfg.feature_blocks() >= 1) {
    for (int i = 0; i < cfg.feature_dim; ++i) col[o + i] = local ? local[i] : S(0);
    o += cfg.feature_dim;
  }
  if (cfg.feature_blocks() >= 2) {
    for (int i = 0; i < cfg.feature_dim; ++i) col[o + i] = symmetric ? symmetric[i] : S(0);
  }
}

/// Output nonlinearities: color = sigmoid(raw[0..2]), density = softplus(raw[3]).
template <class S>
void decode_field_output(const MatrixX<S>& raw, MatrixX<S>& colors, VectorX<S>& densities) {
  colors = raw.topRows(3).unaryExpr([](S v) { return sigmoid(v); });
  densities = raw.row(3).transpose().unaryExpr([](S v) { return softplus(v); });
}

/// dL/draw from dL/dcolor (3 x N) and dL/ddensity (N).
template <class S>
MatrixX<S> field_output_backward(const MatrixX<S>& raw, const MatrixX<S>& d_colors, const VectorX<S>& d_densities) {
  MatrixX<S> d_raw(4, raw.cols());
  for (Eigen::Index i = 0; i < raw.cols(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const S s = sigmoid(raw(c, i));
      d_raw(c, i) = d_colors(c, i) * s * (S(1) - s);
    }
    d_raw(3, i) = d_densities[i] * sigmoid(raw(3, i));
  }
  return d_raw;
}

/// Single-point field query.
template <class S>
RadianceSample query_field(const FieldConfig& cfg, const FieldParameters<S>& theta, const Vec3& x, const Vec3& d,
                           const VectorX<S>& local, const VectorX<S>& symmetric) {
  if (std::abs(d.norm() - 1.0) > 1e-6) throw std::invalid_argument("query_field: view direction must be unit length");
  if (!(theta.layout == cfg.layout())) throw std::invalid_argument("query_field: parameter layout mismatch");
  if (cfg.feature_blocks() >= 1 && local.size() != cfg.feature_dim)
    throw std::invalid_argument("query_field: local feature dimension mismatch");
  if (cfg.feature_blocks() >= 2 && symmetric.size() != cfg.feature_dim)
    throw std::invalid_argument("query_field: symmetric feature dimension mismatch");
  MatrixX<S> input(cfg.input_dim(), 1);
  assemble_field_input<S>(cfg, x, d, local.size() ? local.data() : nullptr,
                          symmetric.size() ? symmetric.data() : nullptr, input.col(0));
  const auto raw = dense_forward(theta.layout.bind(theta.values.data()), input, nullptr);
  MatrixX<S> colors;
  VectorX<S> densities;
  decode_field_output(raw, colors, densities);
  RadianceSample out;
  out.color = colors.col(0).template cast<double>();
  out.density = static_cast<double>(densities[0]);
  return out;
}

}  // namespace symnerf
