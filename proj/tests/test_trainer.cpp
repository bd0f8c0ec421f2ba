#include <gtest/gtest.h>
#include <unistd.h>

#include <fstream>
#include <iterator>

#include "symnerf/config.hpp"
#include "symnerf/trainer.hpp"

using namespace symnerf;
namespace fs = std::filesystem;

namespace {

Config tiny_config() {
  Config c = default_config();
  c.data.num_scenes = 1;
  c.data.views_per_scene = 6;
  c.data.image_size = 16;
  c.data.split = SplitPolicy::interleaved;
  c.model.encoder.channels = {4, 4, 4, 4};
  c.model.encoder.latent_dim = 8;
  c.model.hypernet_hidden = 16;
  c.model.field_width = 16;
  c.model.field_depth = 2;
  c.train.objects_per_batch = 2;
  c.train.rays_per_object = 32;
  c.train.samples_per_ray = 8;
  c.train.peak_lr = 3e-3;
  c.train.warmup_steps = 5;
  c.train.total_steps = 60;
  c.train.checkpoint_interval = 4;
  c.train.log_interval = 2;
  c.render.samples_per_ray = 8;
  c.sync();
  return c;
}

template <class S>
std::vector<std::vector<S>> snapshot(Model<S>& m) {
  std::vector<std::vector<S>> out;
  for (auto* p : m.parameter_list()) out.emplace_back(p->value.begin(), p->value.end());
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

class Trainer : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("symnerf_test_trainer_" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    make_dataset(root_ / "data", tiny_config().data);
    data_ = new Dataset(root_ / "data");
  }
  static void TearDownTestSuite() {
    delete data_;
    fs::remove_all(root_);
  }

  static inline fs::path root_;
  static inline Dataset* data_ = nullptr;
};

TEST(Loss, SumOfSquaredColorErrors) {
  EXPECT_EQ(loss({Vec3(0.5, 0.5, 0.5)}, {Vec3(0.5, 0.5, 0.5)}), 0.0);
  EXPECT_DOUBLE_EQ(loss({Vec3(1, 0, 0)}, {Vec3(0, 0, 0)}), 1.0);
  EXPECT_DOUBLE_EQ(loss({Vec3(1, 0, 0), Vec3(0.5, 0.5, 0)}, {Vec3(0, 0, 0), Vec3(0, 0, 0.5)}), 1.75);
  EXPECT_THROW(loss({Vec3::Zero()}, {}), std::invalid_argument);
}

TEST(LrSchedule, WarmupThenDecay) {
  TrainConfig c;
  EXPECT_EQ(lr_schedule(0, c), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(1000, c), 5e-5);
  EXPECT_DOUBLE_EQ(lr_schedule(2000, c), 1e-4);
  // Tenfold decay over 24000 post-warmup steps.
  EXPECT_NEAR(lr_schedule(26000, c), 1e-5, 1e-12);
  EXPECT_NEAR(lr_schedule(1999, c), lr_schedule(2000, c), 1e-4 / 1000.0);
  EXPECT_NEAR(lr_schedule(2001, c), lr_schedule(2000, c), 1e-4 / 1000.0);
  double prev = lr_schedule(2000, c);
  for (int s = 2100; s < 50000; s += 100) {
    const double lr = lr_schedule(s, c);
    EXPECT_LT(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(lr_schedule(-1, c), std::invalid_argument);
}

TEST_F(Trainer, SampleBatchIsDeterministicAndValid) {
  const auto cfg = tiny_config();
  const auto a = sample_batch(*data_, cfg.train, 7), b = sample_batch(*data_, cfg.train, 7);
  const auto c = sample_batch(*data_, cfg.train, 8);
  ASSERT_EQ(a.size(), 2u);
  bool differs = false;
  for (std::size_t o = 0; o < a.size(); ++o) {
    EXPECT_EQ(a[o].reference, b[o].reference);
    EXPECT_EQ(a[o].target, b[o].target);
    EXPECT_EQ(a[o].targets, b[o].targets);
    EXPECT_NE(a[o].reference, a[o].target);
    EXPECT_EQ(a[o].rays.size(), 32u);
    const auto& train_views = data_->manifest().train[0].views;
    EXPECT_NE(std::find(train_views.begin(), train_views.end(), a[o].reference), train_views.end());
    EXPECT_NE(std::find(train_views.begin(), train_views.end(), a[o].target), train_views.end());
    differs = differs || a[o].targets != c[o].targets;
  }
  EXPECT_TRUE(differs);
}

TEST_F(Trainer, LossDecreasesOnTinyScene) {
  TrainState<float> state(tiny_config());
  TrainConfig probe = state.config.train;
  probe.rays_per_object = 128;
  const auto fixed = sample_batch(*data_, probe, 12345);
  auto probe_loss = [&] {
    double total = 0.0;
    RenderConfig rc = state.config.render;
    for (const auto& b : fixed) {
      Model<float>::RayBatch rb{&data_->view(b.scene, b.reference), b.rays, b.targets};
      total += state.model.accumulate_gradients(rb, rc, 0, false);
    }
    return total;
  };
  const double before = probe_loss();
  for (int i = 0; i < 50; ++i) train_step(state, *data_, sample_batch(*data_, state.config.train, state.step));
  const double after = probe_loss();
  EXPECT_LT(after, 0.7 * before) << "before " << before << " after " << after;
}

TEST_F(Trainer, TrajectoryIsDeterministic) {
  TrainState<float> a(tiny_config()), b(tiny_config());
  std::vector<double> la, lb;
  for (int i = 0; i < 10; ++i) {
    la.push_back(train_step(a, *data_, sample_batch(*data_, a.config.train, a.step)));
    lb.push_back(train_step(b, *data_, sample_batch(*data_, b.config.train, b.step)));
  }
  EXPECT_EQ(la, lb);
  EXPECT_EQ(snapshot(a.model), snapshot(b.model));
  EXPECT_EQ(a.adam_v, b.adam_v);
}

TEST_F(Trainer, AdamWMatchesScalarReference) {
  TrainState<double> state(tiny_config());
  state.step = 7;  // past step 0 so the learning rate is non-zero
  const auto batch = sample_batch(*data_, state.config.train, state.step);
  const auto before = snapshot(state.model);
  auto m0 = state.adam_m, v0 = state.adam_v;
  train_step(state, *data_, batch);
  const auto& tc = state.config.train;
  const double lr = lr_schedule(7, tc);
  auto params = state.model.parameter_list();
  for (std::size_t i = 0; i < params.size(); ++i)
    for (std::size_t j = 0; j < params[i]->size(); j += 17) {
      const double g = params[i]->grad[j];
      const double m = tc.beta1 * m0[i][j] + (1 - tc.beta1) * g;
      const double v = tc.beta2 * v0[i][j] + (1 - tc.beta2) * g * g;
      const double mh = m / (1 - std::pow(tc.beta1, 8)), vh = v / (1 - std::pow(tc.beta2, 8));
      const double expect = before[i][j] - lr * (mh / (std::sqrt(vh) + tc.epsilon) + tc.weight_decay * before[i][j]);
      EXPECT_NEAR(params[i]->value[j], expect, 1e-12 + 1e-9 * std::abs(expect)) << params[i]->name << "[" << j << "]";
    }
  EXPECT_EQ(state.step, 8);
}

TEST_F(Trainer, NonFiniteLossIsReported) {
  TrainState<float> state(tiny_config());
  auto* p = state.model.parameter_list().back();
  std::fill(p->value.begin(), p->value.end(), std::numeric_limits<float>::quiet_NaN());
  EXPECT_THROW(train_step(state, *data_, sample_batch(*data_, state.config.train, 0)), NonFiniteLossError);
}

TEST_F(Trainer, CheckpointRoundTripIsBitExact) {
  TrainState<float> state(tiny_config());
  for (int i = 0; i < 3; ++i) train_step(state, *data_, sample_batch(*data_, state.config.train, state.step));
  const auto path = root_ / "roundtrip.bin";
  save_checkpoint(path, state);
  const auto loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.step, 3);
  EXPECT_EQ(config_to_json(loaded.config), config_to_json(state.config));
  EXPECT_EQ(loaded.adam_m, state.adam_m);
  EXPECT_EQ(loaded.adam_v, state.adam_v);
  const auto& ref = data_->view("scene_0000", 0);
  const auto& tgt = data_->view("scene_0000", 2);
  const Image a = state.model.render_image(ref, tgt.camera, state.config.render, 1);
  const Image b = loaded.model.render_image(ref, tgt.camera, state.config.render, 1);
  EXPECT_EQ(a.data, b.data);

  const auto f = read_checkpoint_file(path);
  EXPECT_EQ(f.header.at("scalar"), "float32");
  EXPECT_EQ(f.order.size(), 3 * state.model.parameters().size());
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
}

TEST_F(Trainer, CorruptCheckpointsAreRejected) {
  const auto path = root_ / "corrupt.bin";
  EXPECT_THROW(load_checkpoint<float>(root_ / "absent.bin"), std::runtime_error);
  { std::ofstream(path, std::ios::binary) << "NOTACKPT...."; }
  EXPECT_THROW(load_checkpoint<float>(path), std::runtime_error);

  TrainState<float> state(tiny_config());
  save_checkpoint(path, state);
  const std::string bytes = slurp(path);
  { std::ofstream(path, std::ios::binary) << bytes.substr(0, bytes.size() / 2); }
  EXPECT_THROW(load_checkpoint<float>(path), std::runtime_error);
}

TEST_F(Trainer, ResumeMatchesContinuousRun) {
  auto cfg = tiny_config();
  cfg.train.total_steps = 8;
  TrainState<float> continuous(cfg);
  TrainRunOptions opt;
  opt.out_dir = root_ / "continuous";
  opt.quiet = true;
  train(continuous, *data_, opt);

  TrainState<float> first(cfg);
  TrainRunOptions part = opt;
  part.out_dir = root_ / "resumed";
  part.stop_step = 4;
  train(first, *data_, part);
  ASSERT_TRUE(fs::exists(checkpoint_path(part.out_dir, 4)));
  auto resumed = load_checkpoint<float>(checkpoint_path(part.out_dir, 4));
  part.stop_step = -1;
  train(resumed, *data_, part);

  EXPECT_EQ(resumed.step, 8);
  EXPECT_EQ(snapshot(resumed.model), snapshot(continuous.model));
  EXPECT_EQ(resumed.adam_m, continuous.adam_m);
  EXPECT_EQ(slurp(opt.out_dir / "log.csv"), slurp(part.out_dir / "log.csv"));
  EXPECT_EQ(slurp(opt.out_dir / "final.bin"), slurp(part.out_dir / "final.bin"));
}

TEST_F(Trainer, TrainWritesLogAndPrunesCheckpoints) {
  auto cfg = tiny_config();
  cfg.train.total_steps = 16;
  cfg.train.keep_checkpoints = 2;
  TrainState<float> state(cfg);
  TrainRunOptions opt;
  opt.out_dir = root_ / "prune";
  opt.quiet = true;
  std::vector<std::int64_t> logged;
  opt.on_log = [&](std::int64_t s, double, double) { logged.push_back(s); };
  train(state, *data_, opt);
  EXPECT_EQ(logged, (std::vector<std::int64_t>{2, 4, 6, 8, 10, 12, 14, 16}));
  const std::string log = slurp(opt.out_dir / "log.csv");
  EXPECT_EQ(log.substr(0, log.find('\n')), "step,lr,loss");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 9);
  EXPECT_FALSE(fs::exists(checkpoint_path(opt.out_dir, 4)));
  EXPECT_FALSE(fs::exists(checkpoint_path(opt.out_dir, 8)));
  EXPECT_TRUE(fs::exists(checkpoint_path(opt.out_dir, 12)));
  EXPECT_TRUE(fs::exists(checkpoint_path(opt.out_dir, 16)));
  EXPECT_TRUE(fs::exists(opt.out_dir / "final.bin"));
}

TEST(ConfigFile, RoundTripAndStrictness) {
  const Config c = tiny_config();
  const auto j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);

  auto bad = j;
  bad["train"]["learning_rate"] = 1.0;
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["extra"] = nlohmann::json::object();
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["eval"]["psnr_cap_db"] = 50.0;
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["train"]["ablation_mode"] = "bogus";
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["train"]["peak_lr"] = "fast";
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
  bad = j;
  bad["render"]["near"] = 10.0;
  EXPECT_THROW(config_from_json(bad), std::invalid_argument);
}

TEST(ConfigFile, PartialOverlayAndSync) {
  Config c = default_config();
  apply_config_json(c, {{"data", {{"image_size", 32}}}, {"train", {{"ablation_mode", "no_hypernet"}}}});
  EXPECT_EQ(c.model.encoder.height, 32);
  EXPECT_EQ(c.model.encoder.width, 32);
  EXPECT_EQ(c.model.mode, AblationMode::no_hypernet);
  EXPECT_EQ(c.train.peak_lr, 1e-4);
  EXPECT_EQ(c.train.warmup_steps, 2000);
  EXPECT_EQ(c.train.samples_per_ray, 64);
  EXPECT_THROW(load_config("/nonexistent/config.json"), std::runtime_error);
}
