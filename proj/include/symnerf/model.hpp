#pragma once

// Full single-view model: encoder -> (latent, feature volume), hypernetwork
// latent -> field weights, feature-conditioned field queries and compositing.
// Provides the read-only render path and the training forward/backward pass.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "symnerf/common.hpp"
#include "symnerf/encoder.hpp"
#include "symnerf/field.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/hypernet.hpp"
#include "symnerf/renderer.hpp"
#include "symnerf/view.hpp"

namespace symnerf {

/// Component ablations: (a) global latent only, (b) plus pixel-aligned
/// features, (c) plus symmetric features, (d) (c) without the hypernetwork.
enum class AblationMode { global_only, global_local, full, no_hypernet };

inline std::string to_string(AblationMode m) {
  switch (m) {
    case AblationMode::global_only: return "global_only";
    case AblationMode::global_local: return "global_local";
    case AblationMode::full: return "full";
    case AblationMode::no_hypernet: return "no_hypernet";
  }
  return "unknown";
}

inline AblationMode parse_ablation_mode(const std::string& s) {
  if (s == "global_only" || s == "a") return AblationMode::global_only;
  if (s == "global_local" || s == "b") return AblationMode::global_local;
  if (s == "full" || s == "c") return AblationMode::full;
  if (s == "no_hypernet" || s == "d") return AblationMode::no_hypernet;
  throw std::invalid_argument("unknown ablation mode '" + s + "' (expected global_only, global_local, full, no_hypernet)");
}

inline FeatureInputs feature_inputs(AblationMode m) {
  switch (m) {
    case AblationMode::global_only: return FeatureInputs::none;
    case AblationMode::global_local: return FeatureInputs::local;
    default: return FeatureInputs::local_and_symmetric;
  }
}

inline bool uses_hypernet(AblationMode m) { return m != AblationMode::no_hypernet; }

struct ModelConfig {
  EncoderConfig encoder;
  int hypernet_hidden = 256;
  int hypernet_trunk_layers = 2;
  int field_width = 128;
  int field_depth = 4;
  int position_frequencies = 6;
  int direction_frequencies = 4;
  bool include_input = true;
  AblationMode mode = AblationMode::full;
  Vec3 symmetry_normal = Vec3::UnitX();
  double symmetry_offset = 0.0;

  FieldConfig field_config() const {
    FieldConfig f;
    f.position = {position_frequencies, include_input};
    f.direction = {direction_frequencies, include_input};
    f.width = field_width;
    f.depth = field_depth;
    f.feature_dim = encoder.feature_dim();
    f.features = feature_inputs(mode);
    return f;
  }

  HypernetConfig hypernet_config() const { return {encoder.latent_dim, hypernet_hidden, hypernet_trunk_layers}; }
  SymmetryTransform symmetry() const { return {symmetry_normal, symmetry_offset}; }
};

template <class S>
class Model {
 public:
  /// Encoder output and field weights for one reference view.
  struct Conditioning {
    EncoderOutput<S> encoded;
    FieldParameters<S> theta;
    Camera camera;
  };

  /// Rays of one target view with ground-truth colors, conditioned on a
  /// reference view.
  struct RayBatch {
    const ViewRecord* reference = nullptr;
    std::vector<Ray> rays;
    std::vector<Vec3> targets;
  };

  Model() = default;

  Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    field_cfg_ = cfg_.field_config();
    layout_ = field_cfg_.layout();
    symmetry_ = cfg_.symmetry();
    encoder_ = Encoder<S>(cfg_.encoder, derive_seed(seed, 1));
    if (uses_hypernet(cfg_.mode)) {
      hypernet_ = Hypernet<S>(cfg_.hypernet_config(), layout_, derive_seed(seed, 2));
    } else {
      direct_field_ = Param<S>("field.theta", {layout_.total()});
      Rng rng(derive_seed(seed, 3));
      const VectorX<S> init = default_field_init<S>(layout_, rng);
      std::copy(init.data(), init.data() + init.size(), direct_field_.value.begin());
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const FieldConfig& field_config() const { return field_cfg_; }
  const FieldLayout& layout() const { return layout_; }
  const SymmetryTransform& symmetry() const { return symmetry_; }
  AblationMode mode() const { return cfg_.mode; }
  Encoder<S>& encoder() { return encoder_; }
  const Encoder<S>& encoder() const { return encoder_; }
  Hypernet<S>& hypernet() { return hypernet_; }
  const Hypernet<S>& hypernet() const { return hypernet_; }
  Param<S>& direct_field() { return direct_field_; }

  /// Every trainable array in a fixed order.
  ParameterList<S> parameter_list() {
    ParameterList<S> out = encoder_.parameter_list();
    if (uses_hypernet(cfg_.mode)) {
      for (auto* p : hypernet_.parameter_list()) out.push_back(p);
    } else {
      out.push_back(&direct_field_);
    }
    return out;
  }

  std::vector<const Param<S>*> parameters() const {
    auto list = const_cast<Model*>(this)->parameter_list();
    return {list.begin(), list.end()};
  }

  void zero_grad() {
    for (auto* p : parameter_list()) p->zero_grad();
  }

  bool needs_features() const { return field_cfg_.feature_blocks() > 0; }

  Conditioning condition(const ViewRecord& reference) const {
    Conditioning c;
    c.camera = reference.camera;
    c.encoded = encoder_.encode(reference.image, needs_features(), uses_hypernet(cfg_.mode));
    if (uses_hypernet(cfg_.mode)) {
      c.theta = hypernet_.generate(c.encoded.latent);
    } else {
      c.theta.layout = layout_;
      c.theta.values = Eigen::Map<const VectorX<S>>(direct_field_.value.data(),
                                                    static_cast<Eigen::Index>(direct_field_.size()));
    }
    return c;
  }

  /// Colors of each ray. Rays are evaluated independently, so results do not
  /// depend on how a request is batched; ray i uses seed derive_seed(seed, i).
  std::vector<Vec3> render_rays(const Conditioning& c, const std::vector<Ray>& rays, const RenderConfig& rc,
                                std::uint64_t seed) const {
    rc.validate();
    const int k = rc.samples_per_ray;
    const auto refs = layout_.bind(c.theta.values.data());
    const S background[3] = {static_cast<S>(rc.background[0]), static_cast<S>(rc.background[1]),
                             static_cast<S>(rc.background[2])};
    MatrixX<S> input(field_cfg_.input_dim(), k);
    std::vector<double> depths, deltas;
    std::vector<S> deltas_s(k), weights(k);
    MatrixX<S> colors;
    VectorX<S> densities;
    std::vector<Vec3> out(rays.size());
    for (std::size_t r = 0; r < rays.size(); ++r) {
      sample_depths(rc.near, rc.far, k, rc.stratified, derive_seed(seed, r), depths, deltas);
      for (int s = 0; s < k; ++s) {
        deltas_s[s] = static_cast<S>(deltas[s]);
        fill_input_column(c.encoded.features, c.camera, rays[r], depths[s], input.col(s), nullptr, nullptr);
      }
      const MatrixX<S> raw = dense_forward(refs, input, nullptr);
      decode_field_output(raw, colors, densities);
      S pixel[3];
      composite_samples(colors.data(), densities.data(), deltas_s.data(), k, background, pixel, weights.data());
      out[r] = Vec3(pixel[0], pixel[1], pixel[2]);
    }
    return out;
  }

  std::vector<Vec3> render_rays(const ViewRecord& reference, const std::vector<Ray>& rays, const RenderConfig& rc,
                                std::uint64_t seed) const {
    return render_rays(condition(reference), rays, rc, seed);
  }

  Image render_image(const Conditioning& c, const Camera& target, const RenderConfig& rc, std::uint64_t seed) const {
    const auto colors = render_rays(c, image_rays(target), rc, seed);
    Image img(target.intrinsics.height, target.intrinsics.width, 3);
    for (std::size_t p = 0; p < colors.size(); ++p)
      for (int ch = 0; ch < 3; ++ch) img.data[3 * p + ch] = std::clamp(colors[p][ch], 0.0, 1.0);
    return img;
  }

  Image render_image(const ViewRecord& reference, const Camera& target, const RenderConfig& rc,
                     std::uint64_t seed) const {
    return render_image(condition(reference), target, rc, seed);
  }

  /// Sum of squared color errors over the batch. When `backward` is set,
  /// gradients of that sum are accumulated into every parameter's grad.
  double accumulate_gradients(const RayBatch& batch, const RenderConfig& rc, std::uint64_t seed, bool backward,
                              std::vector<Vec3>* predictions = nullptr) {
    rc.validate();
    if (!batch.reference) throw std::invalid_argument("accumulate_gradients: missing reference view");
    if (batch.rays.size() != batch.targets.size())
      throw std::invalid_argument("accumulate_gradients: rays and targets differ in length");
    const bool hyper = uses_hypernet(cfg_.mode);
    const bool features = needs_features();
    const int k = rc.samples_per_ray;
    const auto num_rays = static_cast<Eigen::Index>(batch.rays.size());
    const Eigen::Index n = num_rays * k;

    EncoderCache<S> ecache;
    const auto encoded = encoder_.forward(batch.reference->image, ecache, features, hyper);
    HypernetCache<S> hcache;
    FieldParameters<S> generated;
    const S* theta = direct_field_.value.data();
    if (hyper) {
      generated = hypernet_.forward(encoded.latent, hcache);
      theta = generated.values.data();
    }

    MatrixX<S> input(field_cfg_.input_dim(), n);
    std::vector<S> deltas_s(static_cast<std::size_t>(n));
    std::vector<BilinearTaps<S>> local_taps, sym_taps;
    if (features) {
      local_taps.resize(static_cast<std::size_t>(n));
      sym_taps.resize(static_cast<std::size_t>(n));
    }
    std::vector<double> depths, deltas;
    for (Eigen::Index r = 0; r < num_rays; ++r) {
      sample_depths(rc.near, rc.far, k, rc.stratified, derive_seed(seed, static_cast<std::uint64_t>(r)), depths,
                    deltas);
      for (int s = 0; s < k; ++s) {
        const Eigen::Index i = r * k + s;
        deltas_s[i] = static_cast<S>(deltas[s]);
        fill_input_column(encoded.features, batch.reference->camera, batch.rays[r], depths[s], input.col(i),
                          features ? &local_taps[i] : nullptr, features ? &sym_taps[i] : nullptr);
      }
    }

    DenseChainCache<S> fcache;
    const MatrixX<S> raw = dense_forward(layout_.bind(theta), input, &fcache);
    MatrixX<S> colors;
    VectorX<S> densities;
    decode_field_output(raw, colors, densities);

    const S background[3] = {static_cast<S>(rc.background[0]), static_cast<S>(rc.background[1]),
                             static_cast<S>(rc.background[2])};
    std::vector<S> weights(static_cast<std::size_t>(n));
    std::vector<S> t_end(static_cast<std::size_t>(num_rays));
    MatrixX<S> pixels(3, num_rays);
    double loss = 0.0;
    if (predictions) predictions->resize(batch.rays.size());
    for (Eigen::Index r = 0; r < num_rays; ++r) {
      const Eigen::Index o = r * k;
      t_end[r] = composite_samples(colors.col(o).data(), densities.data() + o, deltas_s.data() + o, k, background,
                                   pixels.col(r).data(), weights.data() + o);
      for (int ch = 0; ch < 3; ++ch) {
        const double e = static_cast<double>(pixels(ch, r)) - batch.targets[r][ch];
        loss += e * e;
      }
      if (predictions) (*predictions)[r] = pixels.col(r).template cast<double>();
    }
    if (!backward) return loss;

    MatrixX<S> d_colors(3, n);
    VectorX<S> d_densities(n);
    for (Eigen::Index r = 0; r < num_rays; ++r) {
      const Eigen::Index o = r * k;
      S d_pixel[3];
      for (int ch = 0; ch < 3; ++ch) d_pixel[ch] = S(2) * (pixels(ch, r) - static_cast<S>(batch.targets[r][ch]));
      composite_samples_backward(colors.col(o).data(), densities.data() + o, deltas_s.data() + o, k, background,
                                 weights.data() + o, t_end[r], d_pixel, d_colors.col(o).data(),
                                 d_densities.data() + o);
    }
    const MatrixX<S> d_raw = field_output_backward(raw, d_colors, d_densities);

    VectorX<S> d_theta;
    S* theta_grad = direct_field_.grad.data();
    if (hyper) {
      d_theta = VectorX<S>::Zero(static_cast<Eigen::Index>(layout_.total()));
      theta_grad = d_theta.data();
    }
    const MatrixX<S> d_input = dense_backward(layout_.bind(theta, theta_grad), fcache, d_raw, features);

    MatrixX<S> d_features;
    if (features) {
      const int nf = field_cfg_.feature_dim;
      const int off = field_cfg_.position_dim() + field_cfg_.direction_dim();
      d_features.setZero(nf, encoded.features.grid.cols());
      for (Eigen::Index i = 0; i < n; ++i) {
        scatter_taps(local_taps[i], d_input.col(i).segment(off, nf), d_features);
        if (field_cfg_.feature_blocks() >= 2) scatter_taps(sym_taps[i], d_input.col(i).segment(off + nf, nf), d_features);
      }
    }
    VectorX<S> d_latent;
    if (hyper) d_latent = hypernet_.backward(hcache, d_theta);
    encoder_.backward(ecache, features ? &d_features : nullptr, hyper ? &d_latent : nullptr);
    return loss;
  }

 private:
  template <class Col>
  void fill_input_column(const FeatureVolume<S>& f, const Camera& ref, const Ray& ray, double depth, Col&& col,
                         BilinearTaps<S>* local_out, BilinearTaps<S>* sym_out) const {
    const Vec3 x = ray.origin + depth * ray.direction;
    const int pd = field_cfg_.position_dim();
    const int dd = field_cfg_.direction_dim();
    positional_encode_into<S>(x, field_cfg_.position, col.segment(0, pd));
    positional_encode_into<S>(ray.direction, field_cfg_.direction, col.segment(pd, dd));
    if (field_cfg_.feature_blocks() == 0) return;
    const int nf = field_cfg_.feature_dim;
    const auto taps = point_feature_taps<S>(f.height, f.width, x, ref.intrinsics, ref.extrinsics, symmetry_);
    gather_taps(f, taps.first, col.segment(pd + dd, nf));
    if (field_cfg_.feature_blocks() >= 2) gather_taps(f, taps.second, col.segment(pd + dd + nf, nf));
    if (local_out) *local_out = taps.first;
    if (sym_out) *sym_out = taps.second;
  }

  template <class Grad>
  static void scatter_taps(const BilinearTaps<S>& taps, const Grad& g, MatrixX<S>& d_features) {
    if (!taps.valid) return;
    for (int t = 0; t < 4; ++t) {
      if (taps.weight[t] != S(0)) d_features.col(taps.index[t]) += taps.weight[t] * g;
    }
  }

  ModelConfig cfg_;
  FieldConfig field_cfg_;
  FieldLayout layout_;
  SymmetryTransform symmetry_;
  Encoder<S> encoder_;
  Hypernet<S> hypernet_;
  Param<S> direct_field_;
};

}  // namespace symnerf
