#pragma once

// Independent reference computations used by the unit and acceptance suites.
// They share only plain data types with the library and recompute every
// quantity directly.

#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "symnerf/common.hpp"
#include "symnerf/geometry.hpp"
#include "symnerf/image.hpp"

namespace oracle {

using symnerf::Camera;
using symnerf::CameraExtrinsics;
using symnerf::CameraIntrinsics;
using symnerf::Image;
using symnerf::Mat3;
using symnerf::Mat4;
using symnerf::Rng;
using symnerf::Vec2;
using symnerf::Vec3;
using symnerf::Vec4;

/// Explicit 3x4 K[R|t] multiply followed by a perspective divide.
inline bool project(const Vec3& x, const CameraIntrinsics& k, const CameraExtrinsics& e, Vec2& uv, double& depth) {
  Eigen::Matrix<double, 3, 4> rt;
  rt.leftCols<3>() = e.R;
  rt.col(3) = e.t;
  Mat3 km;
  km << k.fx, 0, k.cx, 0, k.fy, k.cy, 0, 0, 1;
  const Vec3 h = km * rt * Vec4(x.x(), x.y(), x.z(), 1.0);
  depth = h.z();
  if (!(depth > 0.0)) return false;
  uv = Vec2(h.x() / h.z(), h.y() / h.z());
  return true;
}

/// Pixel + depth back to world via an explicit inverse of [R|t].
inline Vec3 backproject(const Vec2& uv, double depth, const CameraIntrinsics& k, const CameraExtrinsics& e) {
  Mat4 full = Mat4::Identity();
  full.topLeftCorner<3, 3>() = e.R;
  full.topRightCorner<3, 1>() = e.t;
  const Vec4 xc((uv.x() - k.cx) / k.fx * depth, (uv.y() - k.cy) / k.fy * depth, depth, 1.0);
  const Vec4 xw = full.inverse() * xc;
  return xw.head<3>() / xw.w();
}

/// Householder reflection across the plane {x : n.x = offset}, n unit.
inline Vec3 reflect(const Vec3& x, const Vec3& n, double offset) { return x - 2.0 * (n.dot(x) - offset) * n; }

inline Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

/// Valid random pinhole camera looking at the origin from distance 2..5.
inline Camera random_camera(Rng& rng, int w = 64, int h = 48) {
  Camera c;
  c.intrinsics.width = w;
  c.intrinsics.height = h;
  c.intrinsics.fx = rng.uniform(30.0, 120.0);
  c.intrinsics.fy = rng.uniform(30.0, 120.0);
  c.intrinsics.cx = rng.uniform(0.3, 0.7) * w;
  c.intrinsics.cy = rng.uniform(0.3, 0.7) * h;
  Vec3 up = random_unit(rng);
  const Vec3 eye = rng.uniform(2.0, 5.0) * random_unit(rng);
  if (std::abs(up.dot(eye.normalized())) > 0.99) up = eye.normalized().unitOrthogonal();
  c.extrinsics = CameraExtrinsics::look_at(eye, Vec3::Zero(), up);
  return c;
}

/// Bilinear sample of a (h*w) x C row-per-pixel feature table, zero outside
/// the image extent [-0.5, size - 0.5], clamped taps inside it.
inline std::vector<double> bilinear(const std::vector<std::vector<double>>& grid, int h, int w, const Vec2& uv) {
  const std::size_t c = grid.front().size();
  std::vector<double> out(c, 0.0);
  if (!(uv.x() >= -0.5 && uv.x() <= w - 0.5 && uv.y() >= -0.5 && uv.y() <= h - 0.5)) return out;
  const double x = std::clamp(uv.x(), 0.0, static_cast<double>(w - 1));
  const double y = std::clamp(uv.y(), 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = x - x0, ay = y - y0;
  for (std::size_t k = 0; k < c; ++k) {
    out[k] = (1 - ax) * (1 - ay) * grid[y0 * w + x0][k] + ax * (1 - ay) * grid[y0 * w + x1][k] +
             (1 - ax) * ay * grid[y1 * w + x0][k] + ax * ay * grid[y1 * w + x1][k];
  }
  return out;
}

/// Direct per-sample alpha compositing with running transmittance.
inline Vec3 composite(const std::vector<Vec3>& c, const std::vector<double>& sigma, const std::vector<double>& delta,
                      const Vec3& bg, double* t_end = nullptr) {
  Vec3 px = Vec3::Zero();
  double t = 1.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double alpha = 1.0 - std::exp(-sigma[k] * delta[k]);
    px += t * alpha * c[k];
    t *= 1.0 - alpha;
  }
  if (t_end) *t_end = t;
  return px + t * bg;
}

/// SSIM by explicit per-window double loops (11x11 Gaussian, sigma 1.5).
inline double ssim(const Image& a, const Image& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double kern[11][11], ksum = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      kern[i][j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * sigma * sigma));
      ksum += kern[i][j];
    }
  for (auto& row : kern)
    for (double& v : row) v /= ksum;
  double total = 0.0;
  for (int ch = 0; ch < a.channels; ++ch) {
    double acc = 0.0;
    int windows = 0;
    for (int y = 0; y + n <= a.height; ++y)
      for (int x = 0; x + n <= a.width; ++x) {
        double mx = 0, my = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            mx += kern[i][j] * a.at(y + i, x + j, ch);
            my += kern[i][j] * b.at(y + i, x + j, ch);
          }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double dx = a.at(y + i, x + j, ch) - mx, dy = b.at(y + i, x + j, ch) - my;
            vx += kern[i][j] * dx * dx;
            vy += kern[i][j] * dy * dy;
            cov += kern[i][j] * dx * dy;
          }
        acc += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++windows;
      }
    total += acc / windows;
  }
  return total / a.channels;
}

inline Image random_image(Rng& rng, int h, int w, int c = 3) {
  Image img(h, w, c);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double()>& f, double& x, double step) {
  const double saved = x;
  x = saved + step;
  const double fp = f();
  x = saved - step;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * step);
}

inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
