#include <gtest/gtest.h>
#include <unistd.h>

#include <fstream>
#include <iterator>

#include "oracles.hpp"
#include "symnerf/synthdata.hpp"

using namespace symnerf;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("symnerf_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

DatasetConfig small_dataset() {
  DatasetConfig cfg;
  cfg.num_scenes = 2;
  cfg.views_per_scene = 8;
  cfg.image_size = 24;
  cfg.seed = 5;
  return cfg;
}

Ray random_ray_at_scene(Rng& rng) {
  const Vec3 origin = 3.0 * oracle::random_unit(rng);
  const Vec3 target(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
  return {origin, (target - origin).normalized()};
}

// Fraction of random rays whose mirrored ray sees a mirrored hit.
double mirror_agreement(const SceneSpec& scene, int trials, std::uint64_t seed) {
  Rng rng(seed);
  const auto& m = scene.symmetry;
  int agree = 0;
  for (int i = 0; i < trials; ++i) {
    const Ray r = random_ray_at_scene(rng);
    const Ray mr{m.apply(r.origin), m.apply_direction(r.direction)};
    const auto a = intersect(r, scene), b = intersect(mr, scene);
    if (!a && !b) {
      ++agree;
    } else if (a && b && std::abs(a->t - b->t) < 1e-9 && (m.apply_direction(a->normal) - b->normal).norm() < 1e-9 &&
               (a->albedo - b->albedo).norm() < 1e-12) {
      ++agree;
    }
  }
  return static_cast<double>(agree) / trials;
}

}  // namespace

TEST(SynthScene, GeneratedScenesAreMirrorSymmetric) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto scene = generate_scene(s, {});
    EXPECT_GE(scene.primitives.size(), 4u);
    EXPECT_EQ(mirror_agreement(scene, 2000, 100 + s), 1.0) << "seed " << s;
  }
}

TEST(SynthScene, PerturbationBreaksSymmetry) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto scene = generate_scene(s, {4, 0.1});
    EXPECT_EQ(scene.asymmetric_perturbation, 0.1);
    EXPECT_LT(mirror_agreement(scene, 2000, 100 + s), 1.0) << "seed " << s;
  }
}

TEST(SynthScene, DeterministicInSeed) {
  const auto a = scene_to_json(generate_scene(3, {}));
  const auto b = scene_to_json(generate_scene(3, {}));
  const auto c = scene_to_json(generate_scene(4, {}));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
}

TEST(SynthScene, InvalidGeneratorArgs) {
  EXPECT_THROW(generate_scene(0, {0, 0.0}), std::invalid_argument);
  EXPECT_THROW(generate_scene(0, {3, -0.1}), std::invalid_argument);
}

TEST(SynthRender, EmptySceneIsBackground) {
  const SceneSpec empty;
  const auto intr = CameraIntrinsics::from_fov(16, 16, 0.8);
  const auto extr = CameraExtrinsics::look_at(Vec3(0, 1, 3), Vec3::Zero());
  const Vec3 bg(0.1, 0.5, 0.9);
  const Image img = oracle_render(empty, intr, extr, bg);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(img.at(y, x, c), bg[c]);
}

TEST(SynthRender, SphereProjectsToDiskOfExpectedRadius) {
  SceneSpec scene;
  Primitive p;
  p.shape = PrimitiveShape::sphere;
  p.radius = 0.5;
  p.albedo = Vec3(0.2, 0.2, 0.2);
  scene.primitives.push_back(p);
  const int size = 128;
  const double dist = 3.0;
  const auto intr = CameraIntrinsics::from_fov(size, size, 45.0 * M_PI / 180.0);
  const auto extr = CameraExtrinsics::look_at(Vec3(0, 0, dist), Vec3::Zero());
  const Image img = oracle_render(scene, intr, extr, Vec3::Ones());
  int covered = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) covered += img.at(y, x, 0) < 0.99;
  // Silhouette of a sphere: tangent cone of half-angle asin(r/d).
  const double radius_px = intr.fx * p.radius / std::sqrt(dist * dist - p.radius * p.radius);
  EXPECT_NEAR(std::sqrt(covered / M_PI), radius_px, 0.5);
  EXPECT_NEAR(radius_px, intr.fx * p.radius / dist, 0.02 * radius_px);
}

TEST(SynthRender, MirroredCameraSeesFlippedImage) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto scene = generate_scene(s, {});
    Rng rng(derive_seed(s, 9));
    const int size = 32;
    const auto intr = CameraIntrinsics::from_fov(size, size, 0.8);
    const double az = rng.uniform(0, 2 * M_PI), el = rng.uniform(0.1, 0.7);
    const Vec3 eye = 3.0 * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    const auto extr = CameraExtrinsics::look_at(eye, Vec3::Zero());
    const auto a = quantize(oracle_render(scene, intr, extr, Vec3::Ones()));
    const auto b = quantize(flip_horizontal(oracle_render(scene, intr, mirror_camera(extr, scene.symmetry), Vec3::Ones())));
    int worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(int(a[i]) - int(b[i])));
    EXPECT_LE(worst, 1) << "seed " << s;
  }
}

TEST(SynthRender, ShadingRange) {
  const auto scene = generate_scene(1, {});
  const auto intr = CameraIntrinsics::from_fov(24, 24, 0.8);
  const auto extr = CameraExtrinsics::look_at(Vec3(0.5, 1, 2.8), Vec3::Zero());
  const Image img = oracle_render(scene, intr, extr, Vec3::Ones());
  int hits = 0;
  for (double v : img.data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    hits += v < 1.0;
  }
  EXPECT_GT(hits, 0);
}

TEST(SynthDataset, RegenerationIsByteIdentical) {
  const auto a = fresh_dir("regen_a"), b = fresh_dir("regen_b");
  make_dataset(a, small_dataset());
  make_dataset(b, small_dataset());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    ASSERT_TRUE(fs::exists(b / rel)) << rel;
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
    ++files;
  }
  EXPECT_EQ(files, 1u + 2u * (2u + 8u));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(SynthDataset, StoredImagesMatchOracleRender) {
  const auto dir = fresh_dir("stored");
  const auto cfg = small_dataset();
  make_dataset(dir, cfg);
  const Dataset data = load_dataset(dir);
  for (const auto& id : data.manifest().scenes) {
    const auto scene = data.scene(id);
    for (int k = 0; k < cfg.views_per_scene; ++k) {
      const auto& v = data.view(id, k);
      const auto expect = quantize(oracle_render(scene, v.camera.intrinsics, v.camera.extrinsics, cfg.background));
      EXPECT_EQ(quantize(v.image), expect) << id << "/" << k;
      EXPECT_EQ(v.scene_id, id);
      EXPECT_EQ(v.view_id, k);
    }
  }
  fs::remove_all(dir);
}

TEST(SynthDataset, RoundTripRecords) {
  const auto dir = fresh_dir("roundtrip");
  const auto cfg = small_dataset();
  const Manifest written = make_dataset(dir, cfg);
  const Dataset data = load_dataset(dir);
  EXPECT_EQ(manifest_to_json(data.manifest()), manifest_to_json(written));
  EXPECT_EQ(data.manifest().image_size, cfg.image_size);
  EXPECT_EQ(data.manifest().scenes.size(), 2u);
  for (int s = 0; s < cfg.num_scenes; ++s) {
    const auto expect = generate_scene(derive_seed(cfg.seed, 100 + s, 1), {cfg.num_primitives, cfg.perturbation});
    EXPECT_EQ(scene_to_json(data.scene(scene_id(s))), scene_to_json(expect));
  }
  for (const auto& id : data.manifest().scenes)
    for (const auto& cam : data.cameras(id)) {
      const Camera back = camera_from_json(camera_to_json(cam));
      EXPECT_EQ(back.extrinsics.R, cam.extrinsics.R);
      EXPECT_EQ(back.extrinsics.t, cam.extrinsics.t);
      EXPECT_EQ(back.intrinsics.fx, cam.intrinsics.fx);
      // Cameras look at the scene from outside the unit ball.
      EXPECT_NEAR(cam.extrinsics.center().norm(), cfg.camera_distance, 1e-12);
    }
  fs::remove_all(dir);
}

TEST(SynthDataset, CamerasCoverTheCircle) {
  DatasetConfig cfg;
  cfg.views_per_scene = 24;
  Rng rng(3);
  double offset = 0.0;
  const auto cams = generate_cameras(cfg, rng, offset);
  std::vector<double> az;
  for (const auto& c : cams) {
    const Vec3 e = c.extrinsics.center();
    az.push_back(std::atan2(e.x(), e.z()) * 180.0 / M_PI);
  }
  std::sort(az.begin(), az.end());
  double largest_gap = az.front() + 360.0 - az.back();
  for (std::size_t i = 1; i < az.size(); ++i) largest_gap = std::max(largest_gap, az[i] - az[i - 1]);
  EXPECT_GE(360.0 - largest_gap, 300.0);
}

TEST(SynthDataset, PoseSplitHoldsOutDistantViews) {
  const auto dir = fresh_dir("pose");
  auto cfg = small_dataset();
  cfg.views_per_scene = 12;
  const Manifest m = make_dataset(dir, cfg);
  const Dataset data = load_dataset(dir);
  for (std::size_t s = 0; s < m.test.size(); ++s) {
    const auto& cams = data.cameras(m.test[s].scene);
    const auto& ref = cams[m.test[s].reference].extrinsics;
    EXPECT_FALSE(m.test[s].views.empty());
    for (int v : m.test[s].views) EXPECT_GE(pose_difference_deg(ref, cams[v].extrinsics), cfg.min_test_pose_deg);
    for (int v : m.train[s].views) EXPECT_LT(pose_difference_deg(ref, cams[v].extrinsics), cfg.min_test_pose_deg);
    EXPECT_EQ(m.test[s].views.size() + m.train[s].views.size(), 12u);
  }
  fs::remove_all(dir);
}

TEST(SynthDataset, InterleavedSplit) {
  const auto dir = fresh_dir("interleaved");
  auto cfg = small_dataset();
  cfg.split = SplitPolicy::interleaved;
  cfg.views_per_scene = 12;
  const Manifest m = make_dataset(dir, cfg);
  EXPECT_EQ(m.test[0].reference, 0);
  EXPECT_EQ(m.test[0].views, (std::vector<int>{3, 9}));
  fs::remove_all(dir);
}

TEST(SynthDataset, MissingParentDirectory) {
  const auto dir = fresh_dir("noparent") / "child" / "data";
  EXPECT_THROW(make_dataset(dir, small_dataset()), std::runtime_error);
}

TEST(SynthDataset, InvalidConfig) {
  auto cfg = small_dataset();
  cfg.views_per_scene = 1;
  EXPECT_THROW(make_dataset(fresh_dir("invalid"), cfg), std::invalid_argument);
  EXPECT_THROW(parse_split_policy("random"), std::invalid_argument);
}

TEST(SynthDataset, LoadErrors) {
  EXPECT_THROW(load_dataset(fresh_dir("absent")), std::runtime_error);

  const auto dir = fresh_dir("corrupt");
  make_dataset(dir, small_dataset());
  const std::string manifest = slurp(dir / "manifest.json");
  detail::write_text(dir / "manifest.json", "{ not json");
  EXPECT_THROW(load_dataset(dir), std::runtime_error);

  auto j = nlohmann::json::parse(manifest);
  j["format"] = "something-else";
  detail::write_text(dir / "manifest.json", j.dump());
  EXPECT_THROW(load_dataset(dir), std::exception);

  detail::write_text(dir / "manifest.json", manifest);
  detail::write_text(dir / "scenes" / scene_id(0) / "cameras.json", "[]");
  EXPECT_THROW(load_dataset(dir), std::runtime_error);
  fs::remove_all(dir);
}
