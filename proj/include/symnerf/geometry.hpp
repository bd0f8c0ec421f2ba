#pragma once

// Pinhole cameras, rays and reflection symmetry.
//
// Conventions:
//   * Extrinsics map world to camera: Xc = R * X + t. The camera looks along
//     +z with x to the right and y down.
//   * Pixel coordinates address pixel centers at integer positions with the
//     origin at the top-left pixel. The image covers [-0.5, W - 0.5] x
//     [-0.5, H - 0.5].

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "symnerf/common.hpp"

namespace symnerf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

class BehindCameraError : public std::domain_error {
 public:
  BehindCameraError() : std::domain_error("behind-camera: point has non-positive camera depth") {}
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw std::invalid_argument("CameraIntrinsics: focal lengths must be positive");
    if (width < 1 || height < 1) throw std::invalid_argument("CameraIntrinsics: image size must be at least 1x1");
  }

  /// Homogeneous 4x4 intrinsic matrix acting on [xc, yc, zc, 1].
  Mat4 matrix() const {
    Mat4 k = Mat4::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  bool contains(const Vec2& uv) const {
    return uv.x() >= -0.5 && uv.x() <= width - 0.5 && uv.y() >= -0.5 && uv.y() <= height - 0.5;
  }

  /// Centered principal point and the given horizontal field of view.
  static CameraIntrinsics from_fov(int width, int height, double fov_x_rad) {
    CameraIntrinsics k;
    k.width = width;
    k.height = height;
    k.fx = 0.5 * width / std::tan(0.5 * fov_x_rad);
    k.fy = k.fx;
    k.cx = 0.5 * (width - 1);
    k.cy = 0.5 * (height - 1);
    return k;
  }
};

struct CameraExtrinsics {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  void validate(double tol = 1e-6) const {
    if (!R.allFinite() || !t.allFinite()) throw std::invalid_argument("CameraExtrinsics: non-finite entries");
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("CameraExtrinsics: R is not orthogonal");
    if (std::abs(R.determinant() - 1.0) > tol) throw std::invalid_argument("CameraExtrinsics: det(R) != 1");
  }

  Mat4 matrix() const {
    Mat4 e = Mat4::Identity();
    e.topLeftCorner<3, 3>() = R;
    e.topRightCorner<3, 1>() = t;
    return e;
  }

  Vec3 to_camera(const Vec3& x) const { return R * x + t; }
  Vec3 to_world(const Vec3& xc) const { return R.transpose() * (xc - t); }
  Vec3 center() const { return -R.transpose() * t; }
  /// Viewing axis (camera +z) in world coordinates.
  Vec3 forward() const { return R.row(2).transpose(); }

  /// Camera at `eye` looking at `target`; `up` is the world up direction.
  static CameraExtrinsics look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
    const Vec3 f = (target - eye).normalized();
    Vec3 r = f.cross(up);
    if (r.norm() < 1e-12) throw std::invalid_argument("look_at: view direction parallel to up vector");
    r.normalize();
    const Vec3 d = f.cross(r);
    CameraExtrinsics e;
    e.R.row(0) = r.transpose();
    e.R.row(1) = d.transpose();
    e.R.row(2) = f.transpose();
    e.t = -e.R * eye;
    return e;
  }
};

struct Camera {
  CameraIntrinsics intrinsics;
  CameraExtrinsics extrinsics;
};

/// Homogeneous rigid reflection X -> M X.
class SymmetryTransform {
 public:
  SymmetryTransform() : SymmetryTransform(Vec3::UnitX(), 0.0) {}

  /// Reflection across the plane {X : n.X = offset}.
  SymmetryTransform(const Vec3& normal, double offset) {
    const double len = normal.norm();
    if (!(len > 0.0)) throw std::invalid_argument("SymmetryTransform: zero plane normal");
    const Vec3 n = normal / len;
    const double o = offset / len;
    m_.setIdentity();
    m_.topLeftCorner<3, 3>() = Mat3::Identity() - 2.0 * n * n.transpose();
    m_.topRightCorner<3, 1>() = 2.0 * o * n;
  }

  /// The plane x = 0, i.e. M = diag(-1, 1, 1, 1).
  static SymmetryTransform canonical() { return {}; }

  /// Wraps an arbitrary matrix after checking it is a rigid reflection.
  static SymmetryTransform from_matrix(const Mat4& m) {
    SymmetryTransform s;
    s.m_ = m;
    s.validate();
    return s;
  }

  void validate(double tol = 1e-9) const {
    if ((m_ * m_ - Mat4::Identity()).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("SymmetryTransform: M*M != I");
    const Mat3 l = linear();
    if ((l.transpose() * l - Mat3::Identity()).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("SymmetryTransform: linear part not orthogonal");
    if (std::abs(l.determinant() + 1.0) > tol) throw std::invalid_argument("SymmetryTransform: det != -1");
    if ((m_.row(3) - Vec4(0, 0, 0, 1).transpose()).cwiseAbs().maxCoeff() > tol)
      throw std::invalid_argument("SymmetryTransform: bottom row must be [0 0 0 1]");
  }

  const Mat4& matrix() const { return m_; }
  Mat3 linear() const { return m_.topLeftCorner<3, 3>(); }
  Vec3 offset() const { return m_.topRightCorner<3, 1>(); }
  Vec3 apply(const Vec3& x) const { return linear() * x + offset(); }
  Vec3 apply_direction(const Vec3& d) const { return linear() * d; }

 private:
  Mat4 m_;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

struct Projection {
  Vec2 uv;
  double depth = 0.0;
};

/// Projection of a world point; nullopt when the camera depth is not positive.
inline std::optional<Projection> try_project(const Vec3& x, const CameraIntrinsics& intr,
                                             const CameraExtrinsics& extr) {
  const Vec3 xc = extr.to_camera(x);
  if (!(xc.z() > 0.0)) return std::nullopt;
  return Projection{Vec2(intr.fx * xc.x() / xc.z() + intr.cx, intr.fy * xc.y() / xc.z() + intr.cy), xc.z()};
}

inline Projection project(const Vec3& x, const CameraIntrinsics& intr, const CameraExtrinsics& extr) {
  auto p = try_project(x, intr, extr);
  if (!p) throw BehindCameraError();
  return *p;
}

/// Inverse of project for a known depth.
inline Vec3 backproject(const Vec2& uv, double depth, const CameraIntrinsics& intr, const CameraExtrinsics& extr) {
  const Vec3 xc((uv.x() - intr.cx) * depth / intr.fx, (uv.y() - intr.cy) * depth / intr.fy, depth);
  return extr.to_world(xc);
}

inline Vec3 mirror_point(const Vec3& x, const SymmetryTransform& m) {
  const Vec4 h = m.matrix() * x.homogeneous();
  return h.head<3>() / h.w();
}

/// Image-plane map x' = (d/d') K Rt M Rt^-1 K^-1 x for x = [u, v, 1, 1/d].
inline Mat4 symmetric_projection_matrix(const CameraIntrinsics& intr, const CameraExtrinsics& extr,
                                        const SymmetryTransform& m) {
  const Mat4 k = intr.matrix();
  const Mat4 e = extr.matrix();
  Mat4 e_inv = Mat4::Identity();
  e_inv.topLeftCorner<3, 3>() = extr.R.transpose();
  e_inv.topRightCorner<3, 1>() = -extr.R.transpose() * extr.t;
  Mat4 k_inv = Mat4::Identity();
  k_inv(0, 0) = 1.0 / intr.fx;
  k_inv(1, 1) = 1.0 / intr.fy;
  k_inv(0, 2) = -intr.cx / intr.fx;
  k_inv(1, 2) = -intr.cy / intr.fy;
  return k * e * m.matrix() * e_inv * k_inv;
}

inline std::optional<Projection> try_symmetric_projection(const Mat4& chain, const Vec2& uv, double depth) {
  if (!(depth > 0.0)) return std::nullopt;
  const Vec4 x(uv.x(), uv.y(), 1.0, 1.0 / depth);
  const Vec4 y = chain * x;
  // y = (d'/d) x', and x'[2] = 1
  const double ratio = y.z();
  if (!(ratio > 0.0)) return std::nullopt;
  return Projection{Vec2(y.x() / ratio, y.y() / ratio), depth * ratio};
}

inline Projection symmetric_projection(const Vec2& uv, double depth, const CameraIntrinsics& intr,
                                       const CameraExtrinsics& extr, const SymmetryTransform& m) {
  if (!(depth > 0.0)) throw BehindCameraError();
  auto p = try_symmetric_projection(symmetric_projection_matrix(intr, extr, m), uv, depth);
  if (!p) throw BehindCameraError();
  return *p;
}

inline Ray camera_ray(const Vec2& pixel, const CameraIntrinsics& intr, const CameraExtrinsics& extr) {
  if (!intr.contains(pixel)) throw std::invalid_argument("camera_ray: pixel outside image bounds");
  const Vec3 dc((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0);
  return Ray{extr.center(), (extr.R.transpose() * dc).normalized()};
}

/// Camera that sees the mirrored world as a horizontally flipped image.
/// Requires a principal point at the image center column for the flip to be
/// an exact pixel-index reversal.
inline CameraExtrinsics mirror_camera(const CameraExtrinsics& extr, const SymmetryTransform& m) {
  const Mat3 flip = Eigen::Vector3d(-1.0, 1.0, 1.0).asDiagonal();
  CameraExtrinsics out;
  out.R = flip * extr.R * m.linear();
  out.t = flip * extr.t - out.R * m.offset();
  return out;
}

struct RaySamples {
  std::vector<Vec3> points;
  std::vector<double> depths;
  std::vector<double> deltas;
};

/// Depths along a ray on [near, far] split into `count` equal bins. Midpoints
/// when not stratified, otherwise one uniform draw per bin. The last interval
/// extends to the far bound.
inline void sample_depths(double near, double far, int count, bool stratified, std::uint64_t seed,
                          std::vector<double>& depths, std::vector<double>& deltas) {
  if (!(near > 0.0) || !(near < far)) throw std::invalid_argument("sample_along_ray: require 0 < near < far");
  if (count < 1) throw std::invalid_argument("sample_along_ray: count must be >= 1");
  depths.resize(count);
  deltas.resize(count);
  const double bin = (far - near) / count;
  Rng rng(seed);
  for (int k = 0; k < count; ++k) {
    const double jitter = stratified ? rng.uniform() : 0.5;
    depths[k] = near + (k + jitter) * bin;
  }
  for (int k = 0; k + 1 < count; ++k) deltas[k] = depths[k + 1] - depths[k];
  deltas[count - 1] = far - depths[count - 1];
}

inline RaySamples sample_along_ray(const Ray& ray, double near, double far, int count, bool stratified,
                                   std::uint64_t seed) {
  RaySamples s;
  sample_depths(near, far, count, stratified, seed, s.depths, s.deltas);
  s.points.reserve(count);
  for (double d : s.depths) s.points.push_back(ray.origin + d * ray.direction);
  // Deltas are reported as point distances along the unit direction.
  for (int k = 0; k + 1 < count; ++k) s.deltas[k] = (s.points[k + 1] - s.points[k]).norm();
  return s;
}

/// Angle in degrees between two cameras' viewing axes.
inline double pose_difference_deg(const CameraExtrinsics& a, const CameraExtrinsics& b) {
  const double c = std::clamp(a.forward().dot(b.forward()), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

}  // namespace symnerf
