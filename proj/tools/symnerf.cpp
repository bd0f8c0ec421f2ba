// symnerf: dataset generation, training, rendering, evaluation and the
// ablation sweep behind one entry point.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "symnerf/pipeline.hpp"
#include "symnerf/symnerf.hpp"

namespace fs = std::filesystem;
using namespace symnerf;

namespace {

constexpr const char* kConfigEnv = "SYMNERF_CONFIG";

// Base config: defaults, overlaid by the config file from --config or the
// SYMNERF_CONFIG environment variable.
Config base_config(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  if (path.empty()) return default_config();
  return load_config(path);
}

void print_config(const Config& cfg) {
  std::cout << "effective config: " << config_to_json(cfg).dump() << std::endl;
}

template <class T>
void override_if(const CLI::Option* opt, T& dst, const T& src) {
  if (opt && opt->count() > 0) dst = src;
}

struct DataFlags {
  DatasetConfig d;
  std::string split = "pose";
  CLI::Option *scenes = nullptr, *views = nullptr, *size = nullptr, *seed = nullptr, *prims = nullptr,
              *pert = nullptr, *split_opt = nullptr;

  void add(CLI::App* app) {
    scenes = app->add_option("--scenes", d.num_scenes, "number of scenes")->capture_default_str();
    views = app->add_option("--views", d.views_per_scene, "views per scene")->capture_default_str();
    size = app->add_option("--size", d.image_size, "image side length in pixels")->capture_default_str();
    seed = app->add_option("--seed", d.seed, "dataset root seed")->capture_default_str();
    prims = app->add_option("--primitives", d.num_primitives, "primitives drawn per scene before mirroring")
                ->capture_default_str();
    pert = app->add_option("--perturbation", d.perturbation, "asymmetric perturbation amplitude")
               ->capture_default_str();
    split_opt = app->add_option("--split", split, "train/test split policy")
                    ->check(CLI::IsMember({"pose", "interleaved"}))
                    ->capture_default_str();
  }

  void apply(Config& cfg) const {
    override_if(scenes, cfg.data.num_scenes, d.num_scenes);
    override_if(views, cfg.data.views_per_scene, d.views_per_scene);
    override_if(size, cfg.data.image_size, d.image_size);
    override_if(seed, cfg.data.seed, d.seed);
    override_if(prims, cfg.data.num_primitives, d.num_primitives);
    override_if(pert, cfg.data.perturbation, d.perturbation);
    if (split_opt->count()) cfg.data.split = parse_split_policy(split);
  }
};

struct TrainFlags {
  TrainConfig t;
  std::string mode = to_string(AblationMode::full);
  CLI::Option *mode_opt = nullptr, *steps = nullptr, *warmup = nullptr, *lr = nullptr, *seed = nullptr,
              *objects = nullptr, *rays = nullptr, *samples = nullptr, *ckpt = nullptr, *log = nullptr;

  void add(CLI::App* app, bool with_mode) {
    if (with_mode)
      mode_opt = app->add_option("--ablation", mode, "ablation mode: global_only (a), global_local (b), full (c), "
                                                     "no_hypernet (d)")
                     ->capture_default_str();
    steps = app->add_option("--steps", t.total_steps, "total training steps")->capture_default_str();
    warmup = app->add_option("--warmup", t.warmup_steps, "linear warmup steps")->capture_default_str();
    lr = app->add_option("--lr", t.peak_lr, "peak learning rate")->capture_default_str();
    seed = app->add_option("--train-seed", t.seed, "training root seed")->capture_default_str();
    objects = app->add_option("--objects", t.objects_per_batch, "objects per batch")->capture_default_str();
    rays = app->add_option("--rays", t.rays_per_object, "rays per object")->capture_default_str();
    samples = app->add_option("--samples", t.samples_per_ray, "samples per ray during training")->capture_default_str();
    ckpt = app->add_option("--checkpoint-interval", t.checkpoint_interval, "steps between checkpoints")
               ->capture_default_str();
    log = app->add_option("--log-interval", t.log_interval, "steps between log rows")->capture_default_str();
  }

  void apply(Config& cfg) const {
    if (mode_opt && mode_opt->count()) cfg.train.ablation_mode = parse_ablation_mode(mode);
    override_if(steps, cfg.train.total_steps, t.total_steps);
    override_if(warmup, cfg.train.warmup_steps, t.warmup_steps);
    override_if(lr, cfg.train.peak_lr, t.peak_lr);
    override_if(seed, cfg.train.seed, t.seed);
    override_if(objects, cfg.train.objects_per_batch, t.objects_per_batch);
    override_if(rays, cfg.train.rays_per_object, t.rays_per_object);
    override_if(samples, cfg.train.samples_per_ray, t.samples_per_ray);
    override_if(ckpt, cfg.train.checkpoint_interval, t.checkpoint_interval);
    override_if(log, cfg.train.log_interval, t.log_interval);
  }
};

// Model config must agree with the dataset the model is trained on.
void check_dataset_matches(const Config& cfg, const Dataset& data) {
  if (data.manifest().image_size != cfg.model.encoder.height)
    throw std::runtime_error("dataset image size " + std::to_string(data.manifest().image_size) +
                             " does not match config data.image_size " + std::to_string(cfg.model.encoder.height));
}

Config with_dataset_size(Config cfg, const Dataset& data) {
  cfg.data.image_size = data.manifest().image_size;
  cfg.sync();
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-conditioned radiance fields from a single view"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "help for every subcommand");

  // make-data
  auto* mk = app.add_subcommand("make-data", "generate a synthetic symmetric-scene dataset");
  std::string mk_out, mk_config;
  DataFlags mk_flags;
  mk->add_option("--out", mk_out, "output dataset directory (its parent must exist)")->required();
  mk->add_option("--config", mk_config, std::string("config file (default: $") + kConfigEnv + ")");
  mk_flags.add(mk);

  // train
  auto* tr = app.add_subcommand("train", "train a model and write checkpoints plus log.csv");
  std::string tr_data, tr_out, tr_config, tr_resume;
  std::int64_t tr_stop = -1;
  TrainFlags tr_flags;
  tr->add_option("--data", tr_data, "dataset directory")->required();
  tr->add_option("--out", tr_out, "output directory for checkpoints and log")->required();
  tr->add_option("--config", tr_config, std::string("config file (default: $") + kConfigEnv + ")");
  tr->add_option("--resume", tr_resume, "checkpoint to resume from; its config is used");
  tr->add_option("--stop-at", tr_stop, "stop after this step without changing the schedule (-1: run to the end)")
      ->capture_default_str();
  tr_flags.add(tr, true);

  // render
  auto* rd = app.add_subcommand("render", "render poses conditioned on one reference view");
  std::string rd_ckpt, rd_data, rd_scene, rd_out, rd_views;
  int rd_ref = 0;
  bool rd_spiral = false;
  SpiralConfig rd_sc;
  std::uint64_t rd_seed = 0;
  int rd_samples = RenderConfig{}.samples_per_ray;
  rd->add_option("--checkpoint", rd_ckpt, "checkpoint file")->required();
  rd->add_option("--data", rd_data, "dataset directory")->required();
  rd->add_option("--scene", rd_scene, "scene id, e.g. scene_0000")->required();
  rd->add_option("--reference", rd_ref, "reference view id")->capture_default_str();
  auto* rd_views_opt = rd->add_option("--views", rd_views, "comma-separated target view ids");
  auto* rd_spiral_opt = rd->add_flag("--spiral", rd_spiral, "render a spiral around the object");
  rd_views_opt->excludes(rd_spiral_opt);
  auto* rd_frames = rd->add_option("--frames", rd_sc.frames, "spiral frame count")->capture_default_str();
  auto* rd_radius = rd->add_option("--radius", rd_sc.radius, "spiral camera distance")->capture_default_str();
  auto* rd_turns = rd->add_option("--turns", rd_sc.turns, "spiral revolutions")->capture_default_str();
  auto* rd_samples_opt = rd->add_option("--samples", rd_samples, "samples per ray")->capture_default_str();
  rd->add_option("--seed", rd_seed, "render seed (used only with stratified sampling)")->capture_default_str();
  rd->add_option("--out", rd_out, "output directory for PNGs")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset split");
  std::string ev_ckpt, ev_data, ev_split = "test", ev_report;
  std::uint64_t ev_seed = 0;
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  auto* ev_split_opt = ev->add_option("--split", ev_split, "split to evaluate")
                           ->check(CLI::IsMember({"train", "test"}))
                           ->capture_default_str();
  auto* ev_seed_opt = ev->add_option("--seed", ev_seed, "render seed")->capture_default_str();
  ev->add_option("--report", ev_report, "CSV report path (table printed to stdout when empty)");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate ablation rows (a)-(d)");
  std::string ab_data, ab_out, ab_config;
  TrainFlags ab_flags;
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--config", ab_config, std::string("config file (default: $") + kConfigEnv + ")");
  ab_flags.add(ab, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (mk->parsed()) {
      Config cfg = base_config(mk_config);
      mk_flags.apply(cfg);
      cfg.sync();
      cfg.validate();
      print_config(cfg);
      make_dataset(mk_out, cfg.data);
      std::cout << (fs::path(mk_out) / "manifest.json").string() << std::endl;
    } else if (tr->parsed()) {
      const Dataset data(tr_data);
      std::optional<TrainState<float>> state;
      if (!tr_resume.empty()) {
        state.emplace(load_checkpoint<float>(tr_resume));
        std::cout << "resuming from " << tr_resume << " at step " << state->step << std::endl;
      } else {
        Config cfg = base_config(tr_config);
        tr_flags.apply(cfg);
        state.emplace(with_dataset_size(cfg, data));
      }
      check_dataset_matches(state->config, data);
      print_config(state->config);
      TrainRunOptions opt;
      opt.out_dir = tr_out;
      opt.stop_step = tr_stop;
      opt.on_log = [](std::int64_t s, double lr, double l) {
        std::printf("step %lld lr %.4g loss %.6f\n", static_cast<long long>(s), lr, l);
        std::fflush(stdout);
      };
      train(*state, data, opt);
      std::cout << "wrote " << (fs::path(tr_out) / "final.bin").string() << std::endl;
    } else if (rd->parsed()) {
      const auto state = load_checkpoint<float>(rd_ckpt);
      Config cfg = state.config;
      override_if(rd_samples_opt, cfg.render.samples_per_ray, rd_samples);
      override_if(rd_frames, cfg.spiral.frames, rd_sc.frames);
      override_if(rd_radius, cfg.spiral.radius, rd_sc.radius);
      override_if(rd_turns, cfg.spiral.turns, rd_sc.turns);
      cfg.validate();
      print_config(cfg);
      const Dataset data(rd_data);
      check_dataset_matches(cfg, data);
      const ViewRecord& ref = data.view(rd_scene, rd_ref);
      std::vector<std::pair<std::string, Camera>> targets;
      if (rd_spiral) {
        const auto cams = spiral_cameras(ref.camera.intrinsics, cfg.spiral);
        for (std::size_t i = 0; i < cams.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof(name), "spiral_%03zu.png", i);
          targets.emplace_back(name, cams[i]);
        }
      } else {
        if (rd_views.empty()) throw std::invalid_argument("render: pass --views or --spiral");
        std::stringstream ss(rd_views);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
          std::size_t used = 0;
          const int v = std::stoi(tok, &used);
          if (used != tok.size()) throw std::invalid_argument("render: bad view id '" + tok + "'");
          targets.emplace_back("view_" + std::to_string(v) + ".png", data.view(rd_scene, v).camera);
        }
      }
      fs::create_directories(rd_out);
      const auto cond = state.model.condition(ref);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto path = fs::path(rd_out) / targets[i].first;
        write_png(path, state.model.render_image(cond, targets[i].second, cfg.render, derive_seed(rd_seed, i)));
        std::cout << path.string() << std::endl;
      }
    } else if (ev->parsed()) {
      const auto state = load_checkpoint<float>(ev_ckpt);
      Config cfg = state.config;
      override_if(ev_split_opt, cfg.eval.split, ev_split);
      override_if(ev_seed_opt, cfg.eval.seed, ev_seed);
      print_config(cfg);
      const Dataset data(ev_data);
      check_dataset_matches(cfg, data);
      const auto report = evaluate(state.model, data, cfg.eval.split, cfg.render, cfg.eval.seed);
      if (!ev_report.empty()) {
        write_text_file(ev_report, report.csv());
        write_text_file(ev_report + ".config.json", config_to_json(cfg).dump(2) + "\n");
      } else {
        std::cout << report.table();
      }
      std::cout << report.aggregate_line() << std::endl;
    } else if (ab->parsed()) {
      const Dataset data(ab_data);
      Config cfg = base_config(ab_config);
      ab_flags.apply(cfg);
      cfg = with_dataset_size(cfg, data);
      print_config(cfg);
      fs::create_directories(ab_out);
      const auto rows = run_ablation(cfg, data, ab_out);
      const std::string table = ablation_table(rows);
      write_text_file(fs::path(ab_out) / "ablation.md", table);
      write_text_file(fs::path(ab_out) / "config.json", config_to_json(cfg).dump(2) + "\n");
      std::cout << table;
    }
  } catch (const NonFiniteLossError& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
