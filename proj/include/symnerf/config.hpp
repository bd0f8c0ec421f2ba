#pragma once

// Run configuration: one JSON document with sections data, model, train,
// render and eval. Every key has an explicit default; unknown keys are
// rejected. The effective configuration is echoed into checkpoints and
// reports.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "symnerf/metrics.hpp"
#include "symnerf/model.hpp"
#include "symnerf/renderer.hpp"
#include "symnerf/synthdata.hpp"

namespace symnerf {

struct TrainConfig {
  AblationMode ablation_mode = AblationMode::full;
  int objects_per_batch = 4;
  int rays_per_object = 256;
  int samples_per_ray = 64;
  bool stratified = true;
  double peak_lr = 1e-4;
  int warmup_steps = 2000;
  int total_steps = 50000;
  // (1e-6 / 1e-4)^(1 / (total_steps - warmup_steps))
  double decay_rate = 0.9999040635566535;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_interval = 1000;
  int log_interval = 10;
  int keep_checkpoints = 2;  // periodic checkpoints retained; 0 keeps all

  void validate() const {
    if (objects_per_batch < 1 || rays_per_object < 1 || samples_per_ray < 1 || total_steps < 1)
      throw std::invalid_argument("train: counts must be >= 1");
    if (warmup_steps < 0) throw std::invalid_argument("train: warmup_steps must be >= 0");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("train: peak_lr must be positive");
    if (!(decay_rate > 0.0) || decay_rate > 1.0) throw std::invalid_argument("train: decay_rate must be in (0, 1]");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
      throw std::invalid_argument("train: invalid AdamW constants");
    if (checkpoint_interval < 1 || log_interval < 1) throw std::invalid_argument("train: intervals must be >= 1");
    if (keep_checkpoints < 0) throw std::invalid_argument("train: keep_checkpoints must be >= 0");
  }
};

struct EvalConfig {
  std::string split = "test";
  std::uint64_t seed = 0;
};

struct SpiralConfig {
  int frames = 24;
  double radius = 3.0;
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 40.0;
  double turns = 1.0;
};

struct Config {
  DatasetConfig data;
  ModelConfig model;
  TrainConfig train;
  RenderConfig render;
  SpiralConfig spiral;
  EvalConfig eval;

  /// Couples derived fields: encoder input size and dataset render bounds.
  void sync() {
    model.encoder.height = data.image_size;
    model.encoder.width = data.image_size;
    model.mode = train.ablation_mode;
    data.near = render.near;
    data.far = render.far;
    data.background = render.background;
  }

  void validate() const {
    data.validate();
    model.encoder.validate();
    model.field_config().layout();
    train.validate();
    render.validate();
    if (spiral.frames < 1) throw std::invalid_argument("spiral: frames must be >= 1");
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& section, const std::string& name, const std::set<std::string>& known) {
  if (!section.is_object()) throw std::invalid_argument("config: section '" + name + "' must be an object");
  for (auto it = section.begin(); it != section.end(); ++it)
    if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + name + "." + it.key() + "'");
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json config_to_json(const Config& c) {
  nlohmann::json j;
  j["data"] = {{"num_scenes", c.data.num_scenes},
               {"views_per_scene", c.data.views_per_scene},
               {"image_size", c.data.image_size},
               {"seed", c.data.seed},
               {"num_primitives", c.data.num_primitives},
               {"perturbation", c.data.perturbation},
               {"camera_distance", c.data.camera_distance},
               {"fov_deg", c.data.fov_deg},
               {"elevation_min_deg", c.data.elevation_min_deg},
               {"elevation_max_deg", c.data.elevation_max_deg},
               {"split", to_string(c.data.split)},
               {"reference_azimuth_deg", c.data.reference_azimuth_deg},
               {"min_test_pose_deg", c.data.min_test_pose_deg},
               {"holdout_stride", c.data.holdout_stride}};
  j["model"] = {{"encoder_channels", c.model.encoder.channels},
                {"latent_dim", c.model.encoder.latent_dim},
                {"hypernet_hidden", c.model.hypernet_hidden},
                {"hypernet_trunk_layers", c.model.hypernet_trunk_layers},
                {"field_width", c.model.field_width},
                {"field_depth", c.model.field_depth},
                {"position_frequencies", c.model.position_frequencies},
                {"direction_frequencies", c.model.direction_frequencies},
                {"include_input", c.model.include_input},
                {"symmetry_normal", vec_to_json(c.model.symmetry_normal)},
                {"symmetry_offset", c.model.symmetry_offset}};
  j["train"] = {{"ablation_mode", to_string(c.train.ablation_mode)},
                {"objects_per_batch", c.train.objects_per_batch},
                {"rays_per_object", c.train.rays_per_object},
                {"samples_per_ray", c.train.samples_per_ray},
                {"stratified", c.train.stratified},
                {"peak_lr", c.train.peak_lr},
                {"warmup_steps", c.train.warmup_steps},
                {"total_steps", c.train.total_steps},
                {"decay_rate", c.train.decay_rate},
                {"weight_decay", c.train.weight_decay},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"seed", c.train.seed},
                {"checkpoint_interval", c.train.checkpoint_interval},
                {"log_interval", c.train.log_interval},
                {"keep_checkpoints", c.train.keep_checkpoints}};
  j["render"] = {{"near", c.render.near},
                 {"far", c.render.far},
                 {"samples_per_ray", c.render.samples_per_ray},
                 {"stratified", c.render.stratified},
                 {"background", vec_to_json(c.render.background)},
                 {"spiral_frames", c.spiral.frames},
                 {"spiral_radius", c.spiral.radius},
                 {"spiral_elevation_min_deg", c.spiral.elevation_min_deg},
                 {"spiral_elevation_max_deg", c.spiral.elevation_max_deg},
                 {"spiral_turns", c.spiral.turns}};
  j["eval"] = {{"split", c.eval.split}, {"seed", c.eval.seed}, {"psnr_cap_db", kPsnrCapDb},
               {"ssim_window", 11}, {"ssim_sigma", 1.5}, {"ssim_k1", 0.01}, {"ssim_k2", 0.03}};
  return j;
}

/// Overlays `j` onto `c`; missing keys keep their current values.
inline void apply_config_json(Config& c, const nlohmann::json& j) {
  using detail::read_key;
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  detail::reject_unknown(j, "<root>", {"data", "model", "train", "render", "eval"});
  try {
    if (j.contains("data")) {
      const auto& d = j.at("data");
      detail::reject_unknown(d, "data",
                             {"num_scenes", "views_per_scene", "image_size", "seed", "num_primitives", "perturbation",
                              "camera_distance", "fov_deg", "elevation_min_deg", "elevation_max_deg", "split",
                              "reference_azimuth_deg", "min_test_pose_deg", "holdout_stride"});
      read_key(d, "num_scenes", c.data.num_scenes);
      read_key(d, "views_per_scene", c.data.views_per_scene);
      read_key(d, "image_size", c.data.image_size);
      read_key(d, "seed", c.data.seed);
      read_key(d, "num_primitives", c.data.num_primitives);
      read_key(d, "perturbation", c.data.perturbation);
      read_key(d, "camera_distance", c.data.camera_distance);
      read_key(d, "fov_deg", c.data.fov_deg);
      read_key(d, "elevation_min_deg", c.data.elevation_min_deg);
      read_key(d, "elevation_max_deg", c.data.elevation_max_deg);
      if (d.contains("split")) c.data.split = parse_split_policy(d.at("split").get<std::string>());
      read_key(d, "reference_azimuth_deg", c.data.reference_azimuth_deg);
      read_key(d, "min_test_pose_deg", c.data.min_test_pose_deg);
      read_key(d, "holdout_stride", c.data.holdout_stride);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      detail::reject_unknown(m, "model",
                             {"encoder_channels", "latent_dim", "hypernet_hidden", "hypernet_trunk_layers",
                              "field_width", "field_depth", "position_frequencies", "direction_frequencies",
                              "include_input", "symmetry_normal", "symmetry_offset"});
      read_key(m, "encoder_channels", c.model.encoder.channels);
      read_key(m, "latent_dim", c.model.encoder.latent_dim);
      read_key(m, "hypernet_hidden", c.model.hypernet_hidden);
      read_key(m, "hypernet_trunk_layers", c.model.hypernet_trunk_layers);
      read_key(m, "field_width", c.model.field_width);
      read_key(m, "field_depth", c.model.field_depth);
      read_key(m, "position_frequencies", c.model.position_frequencies);
      read_key(m, "direction_frequencies", c.model.direction_frequencies);
      read_key(m, "include_input", c.model.include_input);
      if (m.contains("symmetry_normal")) c.model.symmetry_normal = vec_from_json(m.at("symmetry_normal"));
      read_key(m, "symmetry_offset", c.model.symmetry_offset);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      detail::reject_unknown(t, "train",
                             {"ablation_mode", "objects_per_batch", "rays_per_object", "samples_per_ray", "stratified",
                              "peak_lr", "warmup_steps", "total_steps", "decay_rate", "weight_decay", "beta1", "beta2",
                              "epsilon", "seed", "checkpoint_interval", "log_interval", "keep_checkpoints"});
      if (t.contains("ablation_mode")) c.train.ablation_mode = parse_ablation_mode(t.at("ablation_mode").get<std::string>());
      read_key(t, "objects_per_batch", c.train.objects_per_batch);
      read_key(t, "rays_per_object", c.train.rays_per_object);
      read_key(t, "samples_per_ray", c.train.samples_per_ray);
      read_key(t, "stratified", c.train.stratified);
      read_key(t, "peak_lr", c.train.peak_lr);
      read_key(t, "warmup_steps", c.train.warmup_steps);
      read_key(t, "total_steps", c.train.total_steps);
      read_key(t, "decay_rate", c.train.decay_rate);
      read_key(t, "weight_decay", c.train.weight_decay);
      read_key(t, "beta1", c.train.beta1);
      read_key(t, "beta2", c.train.beta2);
      read_key(t, "epsilon", c.train.epsilon);
      read_key(t, "seed", c.train.seed);
      read_key(t, "checkpoint_interval", c.train.checkpoint_interval);
      read_key(t, "log_interval", c.train.log_interval);
      read_key(t, "keep_checkpoints", c.train.keep_checkpoints);
    }
    if (j.contains("render")) {
      const auto& r = j.at("render");
      detail::reject_unknown(r, "render",
                             {"near", "far", "samples_per_ray", "stratified", "background", "spiral_frames",
                              "spiral_radius", "spiral_elevation_min_deg", "spiral_elevation_max_deg", "spiral_turns"});
      read_key(r, "near", c.render.near);
      read_key(r, "far", c.render.far);
      read_key(r, "samples_per_ray", c.render.samples_per_ray);
      read_key(r, "stratified", c.render.stratified);
      if (r.contains("background")) c.render.background = vec_from_json(r.at("background"));
      read_key(r, "spiral_frames", c.spiral.frames);
      read_key(r, "spiral_radius", c.spiral.radius);
      read_key(r, "spiral_elevation_min_deg", c.spiral.elevation_min_deg);
      read_key(r, "spiral_elevation_max_deg", c.spiral.elevation_max_deg);
      read_key(r, "spiral_turns", c.spiral.turns);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::reject_unknown(e, "eval", {"split", "seed", "psnr_cap_db", "ssim_window", "ssim_sigma", "ssim_k1", "ssim_k2"});
      read_key(e, "split", c.eval.split);
      read_key(e, "seed", c.eval.seed);
      // metric constants are fixed; accept them only at their fixed values
      if (e.contains("psnr_cap_db") && e.at("psnr_cap_db").get<double>() != kPsnrCapDb)
        throw std::invalid_argument("config: eval.psnr_cap_db is fixed at 100");
      if (e.contains("ssim_window") && e.at("ssim_window").get<int>() != 11)
        throw std::invalid_argument("config: eval.ssim_window is fixed at 11");
      if (e.contains("ssim_sigma") && e.at("ssim_sigma").get<double>() != 1.5)
        throw std::invalid_argument("config: eval.ssim_sigma is fixed at 1.5");
      if (e.contains("ssim_k1") && e.at("ssim_k1").get<double>() != 0.01)
        throw std::invalid_argument("config: eval.ssim_k1 is fixed at 0.01");
      if (e.contains("ssim_k2") && e.at("ssim_k2").get<double>() != 0.03)
        throw std::invalid_argument("config: eval.ssim_k2 is fixed at 0.03");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.sync();
}

inline Config config_from_json(const nlohmann::json& j) {
  Config c;
  apply_config_json(c, j);
  c.validate();
  return c;
}

inline Config default_config() {
  Config c;
  c.sync();
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed config file " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace symnerf
