#pragma once

// Procedural mirror-symmetric scenes built from spheres, oriented boxes and
// capsules, an analytic ray tracer used as ground truth, and the on-disk
// posed-image dataset.
//
// Dataset layout:
//   manifest.json                 scene ids, splits, image size, render bounds
//   scenes/<id>/scene.json        primitives and symmetry plane
//   scenes/<id>/cameras.json      array of camera records indexed by view id
//   scenes/<id>/views/<k>.png     8-bit RGB renders

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/image.hpp"
#include "symnerf/view.hpp"

namespace symnerf {

enum class PrimitiveShape { sphere, box, capsule };

inline std::string to_string(PrimitiveShape s) {
  switch (s) {
    case PrimitiveShape::sphere: return "sphere";
    case PrimitiveShape::box: return "box";
    case PrimitiveShape::capsule: return "capsule";
  }
  return "unknown";
}

inline PrimitiveShape parse_primitive_shape(const std::string& s) {
  if (s == "sphere") return PrimitiveShape::sphere;
  if (s == "box") return PrimitiveShape::box;
  if (s == "capsule") return PrimitiveShape::capsule;
  throw std::invalid_argument("unknown primitive shape '" + s + "'");
}

/// sphere: center, radius. box: center, half extents along the columns of
/// `orientation`. capsule: segment center +/- axis, radius.
struct Primitive {
  PrimitiveShape shape = PrimitiveShape::sphere;
  Vec3 center = Vec3::Zero();
  double radius = 0.25;
  Vec3 half_extents = Vec3::Constant(0.2);
  Mat3 orientation = Mat3::Identity();
  Vec3 axis = Vec3::Zero();
  Vec3 albedo = Vec3::Constant(0.5);
};

inline Primitive mirror_primitive(const Primitive& p, const SymmetryTransform& m) {
  Primitive out = p;
  out.center = m.apply(p.center);
  out.orientation = m.linear() * p.orientation;
  out.axis = m.apply_direction(p.axis);
  return out;
}

struct SceneSpec {
  std::vector<Primitive> primitives;
  SymmetryTransform symmetry;
  double asymmetric_perturbation = 0.0;
};

struct SceneGenConfig {
  int num_primitives = 4;
  double perturbation = 0.0;
};

namespace detail {

inline Mat3 random_rotation(Rng& rng) {
  // uniform unit quaternion
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const Eigen::Quaterniond q(std::sqrt(u1) * std::cos(2 * M_PI * u3), std::sqrt(1 - u1) * std::sin(2 * M_PI * u2),
                             std::sqrt(1 - u1) * std::cos(2 * M_PI * u2), std::sqrt(u1) * std::sin(2 * M_PI * u3));
  return q.normalized().toRotationMatrix();
}

inline Vec3 random_in_ball(Rng& rng, double radius) {
  for (;;) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    if (p.squaredNorm() <= 1.0) return radius * p;
  }
}

inline Vec3 random_unit(Rng& rng) {
  for (;;) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double n = p.norm();
    if (n > 1e-3 && n <= 1.0) return p / n;
  }
}

}  // namespace detail

/// Primitives are sampled inside the unit ball. Those whose center lies near
/// the plane x = 0 are snapped onto it and made self-symmetric; the rest get
/// a mirrored twin. A non-zero perturbation then jitters every primitive's
/// center and albedo independently.
inline SceneSpec generate_scene(std::uint64_t seed, const SceneGenConfig& cfg) {
  if (cfg.num_primitives < 1) throw std::invalid_argument("generate_scene: num_primitives must be >= 1");
  if (cfg.perturbation < 0.0) throw std::invalid_argument("generate_scene: perturbation must be >= 0");
  Rng rng(seed);
  SceneSpec scene;
  scene.symmetry = SymmetryTransform::canonical();
  scene.asymmetric_perturbation = cfg.perturbation;
  for (int i = 0; i < cfg.num_primitives; ++i) {
    Primitive p;
    p.shape = static_cast<PrimitiveShape>(rng.index(3));
    p.center = detail::random_in_ball(rng, 0.55);
    for (int c = 0; c < 3; ++c) p.albedo[c] = rng.uniform(0.1, 0.95);
    switch (p.shape) {
      case PrimitiveShape::sphere:
        p.radius = rng.uniform(0.15, 0.35);
        break;
      case PrimitiveShape::box:
        p.half_extents = Vec3(rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3), rng.uniform(0.1, 0.3));
        p.orientation = detail::random_rotation(rng);
        break;
      case PrimitiveShape::capsule:
        p.radius = rng.uniform(0.08, 0.18);
        p.axis = rng.uniform(0.1, 0.3) * detail::random_unit(rng);
        break;
    }
    const bool on_plane = std::abs(p.center.x()) < 0.15;
    if (on_plane) {
      p.center.x() = 0.0;
      if (p.shape == PrimitiveShape::box) {
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        p.orientation = Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
      }
      if (p.shape == PrimitiveShape::capsule) {
        p.axis.x() = 0.0;
        if (p.axis.norm() < 0.05) p.axis = Vec3(0.0, 0.2, 0.0);
      }
      scene.primitives.push_back(p);
    } else {
      scene.primitives.push_back(p);
      scene.primitives.push_back(mirror_primitive(p, scene.symmetry));
    }
  }
  if (cfg.perturbation > 0.0) {
    for (auto& p : scene.primitives) {
      for (int c = 0; c < 3; ++c) p.albedo[c] = std::clamp(p.albedo[c] + rng.uniform(-1, 1) * cfg.perturbation, 0.0, 1.0);
      p.center += cfg.perturbation * Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    }
  }
  return scene;
}

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  Vec3 albedo = Vec3::Zero();
};

namespace detail {

inline constexpr double kHitEpsilon = 1e-9;

inline std::optional<std::pair<double, Vec3>> intersect_sphere(const Ray& ray, const Vec3& c, double r) {
  const Vec3 oc = ray.origin - c;
  const double b = oc.dot(ray.direction);
  const double q = oc.squaredNorm() - r * r;
  const double disc = b * b - q;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  double t = -b - s;
  if (t <= kHitEpsilon) t = -b + s;
  if (t <= kHitEpsilon) return std::nullopt;
  return std::make_pair(t, ((ray.origin + t * ray.direction) - c) / r);
}

inline std::optional<std::pair<double, Vec3>> intersect_box(const Ray& ray, const Primitive& p) {
  const Vec3 o = p.orientation.transpose() * (ray.origin - p.center);
  const Vec3 d = p.orientation.transpose() * ray.direction;
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis_near = 0, axis_far = 0;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > p.half_extents[a]) return std::nullopt;
      continue;
    }
    double t0 = (-p.half_extents[a] - o[a]) / d[a];
    double t1 = (p.half_extents[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      axis_near = a;
    }
    if (t1 < t_far) {
      t_far = t1;
      axis_far = a;
    }
  }
  if (t_near > t_far) return std::nullopt;
  double t = t_near;
  int axis = axis_near;
  if (t <= kHitEpsilon) {
    t = t_far;
    axis = axis_far;
  }
  if (t <= kHitEpsilon) return std::nullopt;
  Vec3 n_local = Vec3::Zero();
  n_local[axis] = (o[axis] + t * d[axis]) > 0.0 ? 1.0 : -1.0;
  return std::make_pair(t, p.orientation * n_local);
}

inline std::optional<std::pair<double, Vec3>> intersect_capsule(const Ray& ray, const Primitive& p) {
  const Vec3 a = p.center - p.axis;
  const Vec3 b = p.center + p.axis;
  std::optional<std::pair<double, Vec3>> best;
  auto consider = [&](double t, const Vec3& n) {
    if (t > kHitEpsilon && (!best || t < best->first)) best = std::make_pair(t, n);
  };
  const Vec3 ba = b - a;
  const double len2 = ba.squaredNorm();
  if (len2 > 1e-18) {
    // infinite cylinder around the segment, clipped to it
    const Vec3 oa = ray.origin - a;
    const double bd = ba.dot(ray.direction), bo = ba.dot(oa);
    const double qa = len2 - bd * bd;
    const double qb = len2 * oa.dot(ray.direction) - bo * bd;
    const double qc = len2 * oa.squaredNorm() - bo * bo - p.radius * p.radius * len2;
    if (std::abs(qa) > 1e-18) {
      const double disc = qb * qb - qa * qc;
      if (disc >= 0.0) {
        const double s = std::sqrt(disc);
        for (double t : {(-qb - s) / qa, (-qb + s) / qa}) {
          const double y = bo + t * bd;
          if (y > 0.0 && y < len2) {
            const Vec3 x = ray.origin + t * ray.direction;
            const Vec3 axis_pt = a + (y / len2) * ba;
            consider(t, (x - axis_pt).normalized());
          }
        }
      }
    }
  }
  for (const Vec3& c : {a, b}) {
    if (auto h = intersect_sphere(ray, c, p.radius)) consider(h->first, h->second);
  }
  return best;
}

}  // namespace detail

inline std::optional<Hit> intersect(const Ray& ray, const SceneSpec& scene) {
  std::optional<Hit> best;
  for (const auto& p : scene.primitives) {
    std::optional<std::pair<double, Vec3>> h;
    switch (p.shape) {
      case PrimitiveShape::sphere: h = detail::intersect_sphere(ray, p.center, p.radius); break;
      case PrimitiveShape::box: h = detail::intersect_box(ray, p); break;
      case PrimitiveShape::capsule: h = detail::intersect_capsule(ray, p); break;
    }
    if (h && (!best || h->first < best->t)) best = Hit{h->first, h->second, p.albedo};
  }
  return best;
}

/// Fraction of light that is ambient; the rest is a headlight at the camera.
inline constexpr double kAmbient = 0.25;

inline Vec3 shade(const Hit& hit, const Vec3& direction) {
  const double lambert = std::max(0.0, -hit.normal.dot(direction));
  return hit.albedo * (kAmbient + (1.0 - kAmbient) * lambert);
}

/// Ground-truth image: one ray per pixel center, nearest hit shaded by a
/// Lambertian headlight, background elsewhere.
inline Image oracle_render(const SceneSpec& scene, const CameraIntrinsics& intr, const CameraExtrinsics& extr,
                           const Vec3& background) {
  intr.validate();
  extr.validate();
  Image img(intr.height, intr.width, 3);
  for (int y = 0; y < intr.height; ++y) {
    for (int x = 0; x < intr.width; ++x) {
      const Ray ray = camera_ray(Vec2(x, y), intr, extr);
      const auto hit = intersect(ray, scene);
      const Vec3 c = hit ? shade(*hit, ray.direction) : background;
      for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = c[ch];
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// JSON records

inline nlohmann::json camera_to_json(const Camera& cam) {
  nlohmann::json j;
  j["fx"] = cam.intrinsics.fx;
  j["fy"] = cam.intrinsics.fy;
  j["cx"] = cam.intrinsics.cx;
  j["cy"] = cam.intrinsics.cy;
  j["width"] = cam.intrinsics.width;
  j["height"] = cam.intrinsics.height;
  std::vector<double> r(9), t(3);
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r[3 * i + k] = cam.extrinsics.R(i, k);
    t[i] = cam.extrinsics.t[i];
  }
  j["R"] = r;
  j["t"] = t;
  return j;
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera cam;
  cam.intrinsics.fx = j.at("fx").get<double>();
  cam.intrinsics.fy = j.at("fy").get<double>();
  cam.intrinsics.cx = j.at("cx").get<double>();
  cam.intrinsics.cy = j.at("cy").get<double>();
  cam.intrinsics.width = j.at("width").get<int>();
  cam.intrinsics.height = j.at("height").get<int>();
  const auto r = j.at("R").get<std::vector<double>>();
  const auto t = j.at("t").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw std::invalid_argument("camera record: R needs 9 numbers and t needs 3");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) cam.extrinsics.R(i, k) = r[3 * i + k];
    cam.extrinsics.t[i] = t[i];
  }
  cam.intrinsics.validate();
  cam.extrinsics.validate();
  return cam;
}

inline nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); }

inline Vec3 vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {v[0], v[1], v[2]};
}

inline nlohmann::json scene_to_json(const SceneSpec& scene) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& p : scene.primitives) {
    nlohmann::json j;
    j["shape"] = to_string(p.shape);
    j["center"] = vec_to_json(p.center);
    j["albedo"] = vec_to_json(p.albedo);
    switch (p.shape) {
      case PrimitiveShape::sphere: j["radius"] = p.radius; break;
      case PrimitiveShape::box: {
        j["half_extents"] = vec_to_json(p.half_extents);
        std::vector<double> o(9);
        for (int i = 0; i < 3; ++i)
          for (int k = 0; k < 3; ++k) o[3 * i + k] = p.orientation(i, k);
        j["orientation"] = o;
        break;
      }
      case PrimitiveShape::capsule:
        j["radius"] = p.radius;
        j["axis"] = vec_to_json(p.axis);
        break;
    }
    prims.push_back(j);
  }
  std::vector<double> m(16);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) m[4 * i + k] = scene.symmetry.matrix()(i, k);
  return {{"primitives", prims}, {"symmetry", m}, {"asymmetric_perturbation", scene.asymmetric_perturbation}};
}

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec scene;
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    p.shape = parse_primitive_shape(pj.at("shape").get<std::string>());
    p.center = vec_from_json(pj.at("center"));
    p.albedo = vec_from_json(pj.at("albedo"));
    if (pj.contains("radius")) p.radius = pj.at("radius").get<double>();
    if (pj.contains("half_extents")) p.half_extents = vec_from_json(pj.at("half_extents"));
    if (pj.contains("axis")) p.axis = vec_from_json(pj.at("axis"));
    if (pj.contains("orientation")) {
      const auto o = pj.at("orientation").get<std::vector<double>>();
      if (o.size() != 9) throw std::invalid_argument("scene: orientation needs 9 numbers");
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) p.orientation(i, k) = o[3 * i + k];
    }
    scene.primitives.push_back(p);
  }
  const auto m = j.at("symmetry").get<std::vector<double>>();
  if (m.size() != 16) throw std::invalid_argument("scene: symmetry needs 16 numbers");
  Mat4 mm;
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 4; ++k) mm(i, k) = m[4 * i + k];
  scene.symmetry = SymmetryTransform::from_matrix(mm);
  scene.asymmetric_perturbation = j.value("asymmetric_perturbation", 0.0);
  return scene;
}

// ---------------------------------------------------------------------------
// Dataset generation

enum class SplitPolicy { pose, interleaved };

inline std::string to_string(SplitPolicy p) { return p == SplitPolicy::pose ? "pose" : "interleaved"; }

inline SplitPolicy parse_split_policy(const std::string& s) {
  if (s == "pose") return SplitPolicy::pose;
  if (s == "interleaved") return SplitPolicy::interleaved;
  throw std::invalid_argument("unknown split policy '" + s + "' (expected pose or interleaved)");
}

struct DatasetConfig {
  int num_scenes = 16;
  int views_per_scene = 24;
  int image_size = 64;
  std::uint64_t seed = 7;
  int num_primitives = 4;
  double perturbation = 0.0;
  double camera_distance = 3.0;
  double fov_deg = 45.0;
  double elevation_min_deg = 10.0;
  double elevation_max_deg = 40.0;
  double near = 1.8;
  double far = 4.2;
  Vec3 background = Vec3::Ones();
  /// pose: the reference sits at `reference_azimuth_deg` and every view at
  /// least `min_test_pose_deg` away from it is held out for testing.
  /// interleaved: every `holdout_stride`-th view is held out and view 0 is
  /// the reference.
  SplitPolicy split = SplitPolicy::pose;
  double reference_azimuth_deg = 60.0;
  double min_test_pose_deg = 90.0;
  int holdout_stride = 6;

  void validate() const {
    if (num_scenes < 1 || views_per_scene < 2) throw std::invalid_argument("DatasetConfig: need >= 1 scene and >= 2 views");
    if (image_size < 1) throw std::invalid_argument("DatasetConfig: image_size must be positive");
    if (!(camera_distance > 1.0)) throw std::invalid_argument("DatasetConfig: camera must sit outside the unit ball");
    if (!(near > 0.0) || !(near < far)) throw std::invalid_argument("DatasetConfig: require 0 < near < far");
    if (elevation_min_deg > elevation_max_deg || std::abs(elevation_max_deg) >= 89.0 || std::abs(elevation_min_deg) >= 89.0)
      throw std::invalid_argument("DatasetConfig: invalid elevation band");
    if (holdout_stride < 2) throw std::invalid_argument("DatasetConfig: holdout_stride must be >= 2");
  }
};

struct TrainEntry {
  std::string scene;
  std::vector<int> views;
};

struct TestEntry {
  std::string scene;
  int reference = 0;
  std::vector<int> views;
};

struct Manifest {
  std::string format = "symnerf-dataset-v1";
  int image_size = 64;
  int views_per_scene = 24;
  double near = 1.8;
  double far = 4.2;
  Vec3 background = Vec3::Ones();
  std::vector<std::string> scenes;
  std::vector<TrainEntry> train;
  std::vector<TestEntry> test;
  nlohmann::json generator;
};

inline nlohmann::json manifest_to_json(const Manifest& m) {
  nlohmann::json train = nlohmann::json::array(), test = nlohmann::json::array();
  for (const auto& e : m.train) train.push_back({{"scene", e.scene}, {"views", e.views}});
  for (const auto& e : m.test) test.push_back({{"scene", e.scene}, {"reference", e.reference}, {"views", e.views}});
  return {{"format", m.format},
          {"image_size", m.image_size},
          {"views_per_scene", m.views_per_scene},
          {"near", m.near},
          {"far", m.far},
          {"background", vec_to_json(m.background)},
          {"scenes", m.scenes},
          {"splits", {{"train", train}, {"test", test}}},
          {"generator", m.generator}};
}

inline Manifest manifest_from_json(const nlohmann::json& j) {
  Manifest m;
  m.format = j.at("format").get<std::string>();
  if (m.format != "symnerf-dataset-v1") throw std::invalid_argument("manifest: unsupported format '" + m.format + "'");
  m.image_size = j.at("image_size").get<int>();
  m.views_per_scene = j.at("views_per_scene").get<int>();
  m.near = j.at("near").get<double>();
  m.far = j.at("far").get<double>();
  m.background = vec_from_json(j.at("background"));
  m.scenes = j.at("scenes").get<std::vector<std::string>>();
  for (const auto& e : j.at("splits").at("train"))
    m.train.push_back({e.at("scene").get<std::string>(), e.at("views").get<std::vector<int>>()});
  for (const auto& e : j.at("splits").at("test"))
    m.test.push_back(
        {e.at("scene").get<std::string>(), e.at("reference").get<int>(), e.at("views").get<std::vector<int>>()});
  m.generator = j.value("generator", nlohmann::json::object());
  return m;
}

inline std::string scene_id(int index) {
  std::ostringstream os;
  os << "scene_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

/// Camera poses of one scene: evenly spaced azimuths with a per-scene random
/// offset, elevation drawn from the configured band.
inline std::vector<Camera> generate_cameras(const DatasetConfig& cfg, Rng& rng, double& azimuth_offset_deg) {
  const double step = 360.0 / cfg.views_per_scene;
  azimuth_offset_deg = rng.uniform(0.0, step);
  const auto intr = CameraIntrinsics::from_fov(cfg.image_size, cfg.image_size, cfg.fov_deg * M_PI / 180.0);
  std::vector<Camera> cams;
  for (int k = 0; k < cfg.views_per_scene; ++k) {
    const double az = (azimuth_offset_deg + k * step) * M_PI / 180.0;
    const double el = rng.uniform(cfg.elevation_min_deg, cfg.elevation_max_deg) * M_PI / 180.0;
    const Vec3 eye = cfg.camera_distance * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    cams.push_back({intr, CameraExtrinsics::look_at(eye, Vec3::Zero())});
  }
  return cams;
}

inline nlohmann::json dataset_config_to_json(const DatasetConfig& c) {
  return {{"num_scenes", c.num_scenes},
          {"views_per_scene", c.views_per_scene},
          {"image_size", c.image_size},
          {"seed", c.seed},
          {"num_primitives", c.num_primitives},
          {"perturbation", c.perturbation},
          {"camera_distance", c.camera_distance},
          {"fov_deg", c.fov_deg},
          {"elevation_min_deg", c.elevation_min_deg},
          {"elevation_max_deg", c.elevation_max_deg},
          {"near", c.near},
          {"far", c.far},
          {"background", vec_to_json(c.background)},
          {"split", to_string(c.split)},
          {"reference_azimuth_deg", c.reference_azimuth_deg},
          {"min_test_pose_deg", c.min_test_pose_deg},
          {"holdout_stride", c.holdout_stride}};
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}
}  // namespace detail

/// Writes the dataset and returns its manifest. The output directory is
/// created if missing; its parent must exist.
inline Manifest make_dataset(const std::filesystem::path& out_dir, const DatasetConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  const fs::path parent = out_dir.has_parent_path() ? out_dir.parent_path() : fs::path(".");
  if (!fs::is_directory(parent)) throw std::runtime_error("make_dataset: parent directory " + parent.string() + " does not exist");
  std::error_code ec;
  fs::create_directories(out_dir / "scenes", ec);
  if (ec) throw std::runtime_error("make_dataset: cannot create " + (out_dir / "scenes").string() + ": " + ec.message());

  Manifest manifest;
  manifest.image_size = cfg.image_size;
  manifest.views_per_scene = cfg.views_per_scene;
  manifest.near = cfg.near;
  manifest.far = cfg.far;
  manifest.background = cfg.background;
  manifest.generator = dataset_config_to_json(cfg);

  for (int s = 0; s < cfg.num_scenes; ++s) {
    const std::string id = scene_id(s);
    manifest.scenes.push_back(id);
    const SceneSpec scene = generate_scene(derive_seed(cfg.seed, 100 + s, 1), {cfg.num_primitives, cfg.perturbation});
    Rng cam_rng(derive_seed(cfg.seed, 100 + s, 2));
    double offset = 0.0;
    const auto cams = generate_cameras(cfg, cam_rng, offset);

    const fs::path dir = out_dir / "scenes" / id;
    fs::create_directories(dir / "views", ec);
    if (ec) throw std::runtime_error("make_dataset: cannot create " + (dir / "views").string() + ": " + ec.message());
    nlohmann::json cam_json = nlohmann::json::array();
    for (int k = 0; k < cfg.views_per_scene; ++k) {
      cam_json.push_back(camera_to_json(cams[k]));
      write_png(dir / "views" / (std::to_string(k) + ".png"),
                oracle_render(scene, cams[k].intrinsics, cams[k].extrinsics, cfg.background));
    }
    detail::write_text(dir / "cameras.json", cam_json.dump(1) + "\n");
    detail::write_text(dir / "scene.json", scene_to_json(scene).dump(1) + "\n");

    TrainEntry train{id, {}};
    TestEntry test{id, 0, {}};
    if (cfg.split == SplitPolicy::pose) {
      const double step = 360.0 / cfg.views_per_scene;
      double best = std::numeric_limits<double>::infinity();
      for (int k = 0; k < cfg.views_per_scene; ++k) {
        double diff = std::fmod(std::abs(offset + k * step - cfg.reference_azimuth_deg), 360.0);
        diff = std::min(diff, 360.0 - diff);
        if (diff < best) {
          best = diff;
          test.reference = k;
        }
      }
      for (int k = 0; k < cfg.views_per_scene; ++k) {
        const double delta = pose_difference_deg(cams[test.reference].extrinsics, cams[k].extrinsics);
        (delta >= cfg.min_test_pose_deg ? test.views : train.views).push_back(k);
      }
    } else {
      test.reference = 0;
      for (int k = 0; k < cfg.views_per_scene; ++k)
        ((k % cfg.holdout_stride) == cfg.holdout_stride / 2 ? test.views : train.views).push_back(k);
    }
    manifest.train.push_back(train);
    manifest.test.push_back(test);
  }
  detail::write_text(out_dir / "manifest.json", manifest_to_json(manifest).dump(1) + "\n");
  return manifest;
}

/// Read access to a generated dataset; views are loaded on first use.
class Dataset {
 public:
  Dataset() = default;

  explicit Dataset(std::filesystem::path root) : root_(std::move(root)) {
    const auto manifest_path = root_ / "manifest.json";
    if (!std::filesystem::exists(manifest_path))
      throw std::runtime_error("load_dataset: missing " + manifest_path.string());
    try {
      manifest_ = manifest_from_json(detail::read_json(manifest_path));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: invalid manifest " + manifest_path.string() + ": " + e.what());
    }
    for (const auto& id : manifest_.scenes) {
      const auto path = root_ / "scenes" / id / "cameras.json";
      std::vector<Camera> cams;
      try {
        for (const auto& cj : detail::read_json(path)) cams.push_back(camera_from_json(cj));
      } catch (const std::exception& e) {
        throw std::runtime_error("load_dataset: bad camera file " + path.string() + ": " + e.what());
      }
      if (static_cast<int>(cams.size()) != manifest_.views_per_scene)
        throw std::runtime_error("load_dataset: " + path.string() + " has " + std::to_string(cams.size()) +
                                 " cameras, expected " + std::to_string(manifest_.views_per_scene));
      for (const auto& c : cams)
        if (c.intrinsics.width != manifest_.image_size || c.intrinsics.height != manifest_.image_size)
          throw std::runtime_error("load_dataset: camera size in " + path.string() + " does not match image_size");
      cameras_[id] = std::move(cams);
    }
    auto check_views = [&](const std::string& scene, const std::vector<int>& views) {
      if (!cameras_.count(scene)) throw std::runtime_error("load_dataset: split references unknown scene " + scene);
      for (int v : views)
        if (v < 0 || v >= manifest_.views_per_scene)
          throw std::runtime_error("load_dataset: split references invalid view " + std::to_string(v) + " of " + scene);
    };
    for (const auto& e : manifest_.train) check_views(e.scene, e.views);
    for (const auto& e : manifest_.test) {
      check_views(e.scene, e.views);
      check_views(e.scene, {e.reference});
    }
  }

  const std::filesystem::path& root() const { return root_; }
  const Manifest& manifest() const { return manifest_; }
  const std::vector<Camera>& cameras(const std::string& scene) const {
    auto it = cameras_.find(scene);
    if (it == cameras_.end()) throw std::invalid_argument("unknown scene '" + scene + "'");
    return it->second;
  }

  const ViewRecord& view(const std::string& scene, int k) const {
    const auto& cams = cameras(scene);
    if (k < 0 || k >= static_cast<int>(cams.size()))
      throw std::invalid_argument("scene '" + scene + "' has no view " + std::to_string(k));
    const auto key = std::make_pair(scene, k);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ViewRecord rec;
    rec.image = read_png(root_ / "scenes" / scene / "views" / (std::to_string(k) + ".png"));
    if (rec.image.height != cams[k].intrinsics.height || rec.image.width != cams[k].intrinsics.width)
      throw std::runtime_error("load_dataset: image size of " + scene + "/" + std::to_string(k) +
                               " does not match its camera");
    rec.camera = cams[k];
    rec.scene_id = scene;
    rec.view_id = k;
    return cache_.emplace(key, std::move(rec)).first->second;
  }

  SceneSpec scene(const std::string& id) const {
    return scene_from_json(detail::read_json(root_ / "scenes" / id / "scene.json"));
  }

 private:
  std::filesystem::path root_;
  Manifest manifest_;
  std::map<std::string, std::vector<Camera>> cameras_;
  mutable std::map<std::pair<std::string, int>, ViewRecord> cache_;
};

inline Dataset load_dataset(const std::filesystem::path& dir) { return Dataset(dir); }

}  // namespace symnerf
