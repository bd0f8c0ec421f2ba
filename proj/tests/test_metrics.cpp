#include <gtest/gtest.h>
#include <unistd.h>

#include "oracles.hpp"
#include "symnerf/metrics.hpp"

using namespace symnerf;
namespace fs = std::filesystem;

namespace {

Image add_noise(const Image& img, Rng& rng, double amp) {
  Image out = img;
  for (auto& v : out.data) v = std::clamp(v + rng.uniform(-amp, amp), 0.0, 1.0);
  return out;
}

}  // namespace

TEST(Psnr, IdenticalImagesHitTheCap) {
  Rng rng(1);
  const Image a = oracle::random_image(rng, 16, 16);
  EXPECT_EQ(psnr(a, a), kPsnrCapDb);
  EXPECT_EQ(kPsnrCapDb, 100.0);
}

TEST(Psnr, KnownValue) {
  // Uniform error of 0.1 gives MSE 0.01.
  Image a(8, 8, 3, 0.5), b(8, 8, 3, 0.6);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-9);
  EXPECT_NEAR(psnr_from_mse(1e-3), 30.0, 1e-9);
  EXPECT_EQ(psnr_from_mse(1e-20), kPsnrCapDb);
}

TEST(Psnr, SymmetricAndMonotoneInNoise) {
  Rng rng(2);
  const Image a = oracle::random_image(rng, 24, 24);
  const Image b = add_noise(a, rng, 0.2);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
  double prev = kPsnrCapDb + 1;
  for (double amp : {0.01, 0.03, 0.1, 0.3}) {
    Rng noise(3);
    const double p = psnr(a, add_noise(a, noise, amp));
    EXPECT_LT(p, prev);
    prev = p;
  }
}

TEST(Psnr, ShapeErrors) {
  EXPECT_THROW(psnr(Image(4, 4), Image(4, 5)), std::invalid_argument);
  EXPECT_THROW(psnr(Image(), Image()), std::invalid_argument);
}

TEST(Ssim, SelfSimilarityIsOne) {
  Rng rng(4);
  const Image a = oracle::random_image(rng, 20, 20);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesClosedForm) {
  // Constant images have zero variance; only the luminance term remains.
  const double x = 0.3, y = 0.7;
  const SsimParams p;
  const double expect = (2 * x * y + p.c1()) / (x * x + y * y + p.c1());
  EXPECT_NEAR(ssim(Image(16, 16, 3, x), Image(16, 16, 3, y)), expect, 1e-12);
}

TEST(Ssim, MatchesNaiveOracle) {
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const int h = 11 + static_cast<int>(rng.index(10)), w = 11 + static_cast<int>(rng.index(10));
    const Image a = oracle::random_image(rng, h, w);
    const Image b = add_noise(a, rng, rng.uniform(0.01, 0.5));
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6);
  }
}

TEST(Ssim, ErrorsAndBounds) {
  EXPECT_THROW(ssim(Image(10, 20), Image(10, 20)), std::invalid_argument);
  EXPECT_THROW(ssim(Image(12, 12), Image(12, 13)), std::invalid_argument);
  Rng rng(6);
  const Image a = oracle::random_image(rng, 16, 16), b = oracle::random_image(rng, 16, 16);
  const double s = ssim(a, b);
  EXPECT_LE(s, 1.0);
  EXPECT_GE(s, -1.0);
  EXPECT_LT(s, 0.5);
}

TEST(PoseBuckets, Edges) {
  EXPECT_EQ(pose_bucket(0.0), 0);
  EXPECT_EQ(pose_bucket(59.9), 0);
  EXPECT_EQ(pose_bucket(60.0), 1);
  EXPECT_EQ(pose_bucket(90.0), 2);
  EXPECT_EQ(pose_bucket(120.0), 3);
  EXPECT_EQ(pose_bucket(180.0), 3);
  EXPECT_EQ(pose_bucket_label(2), "90-120");
}

TEST(MetricsReport, MeansAndCsv) {
  MetricsReport r;
  r.rows.push_back({"s0", 0, 1, 30.0, 20.0, 0.5});
  r.rows.push_back({"s0", 0, 2, 100.0, 30.0, 0.7});
  r.rows.push_back({"s1", 0, 3, 110.0, 25.0, 0.9});
  r.finalize();
  EXPECT_NEAR(r.mean_psnr_db, 25.0, 1e-12);
  EXPECT_NEAR(r.mean_ssim, 0.7, 1e-12);
  EXPECT_EQ(r.bucket(30.0).count, 1u);
  EXPECT_EQ(r.bucket(100.0).count, 2u);
  EXPECT_NEAR(r.bucket(100.0).psnr_db, 27.5, 1e-12);
  EXPECT_EQ(r.bucket(70.0).count, 0u);
  const std::string csv = r.csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scene,view,pose_delta_deg,psnr_db,ssim");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(r.aggregate_line(), "PSNR 25.00 dB  SSIM 0.7000");
}

class Evaluate : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("symnerf_test_eval_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    DatasetConfig cfg;
    cfg.num_scenes = 2;
    cfg.views_per_scene = 6;
    cfg.image_size = 16;
    make_dataset(dir_, cfg);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static ModelConfig tiny_model() {
    ModelConfig m;
    m.encoder.height = m.encoder.width = 16;
    m.encoder.channels = {4, 4, 4, 4};
    m.encoder.latent_dim = 8;
    m.hypernet_hidden = 16;
    m.field_width = 16;
    m.field_depth = 2;
    return m;
  }

  static inline fs::path dir_;
};

TEST_F(Evaluate, RowsCoverTheSplitAndAreDeterministic) {
  const Dataset data = load_dataset(dir_);
  Model<float> model(tiny_model(), 3);
  RenderConfig rc;
  rc.samples_per_ray = 8;
  const auto a = evaluate(model, data, "test", rc, 1);
  const auto b = evaluate(model, data, "test", rc, 1);
  std::size_t expect = 0;
  for (const auto& e : data.manifest().test) expect += e.views.size();
  EXPECT_EQ(a.rows.size(), expect);
  EXPECT_EQ(a.csv(), b.csv());
  for (const auto& r : a.rows) {
    EXPECT_GE(r.pose_delta_deg, 90.0);
    EXPECT_TRUE(std::isfinite(r.psnr_db));
  }
  const auto train = evaluate(model, data, "train", rc, 1);
  EXPECT_FALSE(train.rows.empty());
}

TEST_F(Evaluate, IdentityRendererScoresPerfectly) {
  // Scoring a stored view against itself through the same path the
  // evaluator uses gives the capped PSNR and unit SSIM.
  const Dataset data = load_dataset(dir_);
  const auto& e = data.manifest().test.front();
  const auto& v = data.view(e.scene, e.views.front());
  EXPECT_EQ(psnr(v.image, v.image), kPsnrCapDb);
  EXPECT_NEAR(ssim(v.image, v.image), 1.0, 1e-12);
}

TEST_F(Evaluate, UnknownOrEmptySplit) {
  const Dataset data = load_dataset(dir_);
  Model<float> model(tiny_model(), 3);
  EXPECT_THROW(evaluate(model, data, "validation", RenderConfig{}, 0), std::invalid_argument);
  Manifest m = data.manifest();
  for (auto& t : m.test) t.views.clear();
  EXPECT_THROW(evaluation_entries(m, "test"), std::invalid_argument);
}
