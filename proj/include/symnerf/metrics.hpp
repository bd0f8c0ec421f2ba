#pragma once

// PSNR / SSIM and held-out view evaluation.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "symnerf/image.hpp"
#include "symnerf/model.hpp"
#include "symnerf/synthdata.hpp"

namespace symnerf {

inline constexpr double kPsnrCapDb = 100.0;

inline double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: image shapes differ");
  if (a.data.empty()) throw std::invalid_argument("mse: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

/// Peak 1; zero error maps to `cap`.
inline double psnr_from_mse(double err, double cap = kPsnrCapDb) {
  if (err <= 0.0) return cap;
  return std::min(cap, 10.0 * std::log10(1.0 / err));
}

inline double psnr(const Image& a, const Image& b, double cap = kPsnrCapDb) { return psnr_from_mse(mse(a, b), cap); }

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double c1() const { return k1 * k1; }
  double c2() const { return k2 * k2; }
};

inline std::vector<double> gaussian_window_1d(int size, double sigma) {
  std::vector<double> w(size);
  const double mid = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    w[i] = std::exp(-((i - mid) * (i - mid)) / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

namespace detail {

// Separable Gaussian filter over 'valid' window positions of one channel.
inline std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0), out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM over all valid Gaussian windows, averaged over channels.
inline double ssim(const Image& a, const Image& b, const SsimParams& p = {}) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: image shapes differ");
  if (a.height < p.window || a.width < p.window)
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(p.window) + "x" +
                                std::to_string(p.window) + " window");
  const auto k = gaussian_window_1d(p.window, p.sigma);
  const int h = a.height, w = a.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * a.channels + c];
      y[i] = b.data[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = detail::filter_valid(x, h, w, k), my = detail::filter_valid(y, h, w, k);
    const auto sxx = detail::filter_valid(xx, h, w, k), syy = detail::filter_valid(yy, h, w, k),
               sxy = detail::filter_valid(xy, h, w, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      acc += ((2 * mx[i] * my[i] + p.c1()) * (2 * cov + p.c2())) /
             ((mx[i] * mx[i] + my[i] * my[i] + p.c1()) * (vx + vy + p.c2()));
    }
    total += acc / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

// ---------------------------------------------------------------------------
// Evaluation over a dataset split

struct MetricsRow {
  std::string scene;
  int reference = 0;
  int view = 0;
  double pose_delta_deg = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

/// Pose-difference buckets in degrees: [0,60), [60,90), [90,120), [120,180].
inline constexpr std::array<double, 5> kPoseBucketEdges{0.0, 60.0, 90.0, 120.0, 180.0};

inline int pose_bucket(double delta_deg) {
  for (int b = 0; b + 2 < static_cast<int>(kPoseBucketEdges.size()); ++b)
    if (delta_deg < kPoseBucketEdges[b + 1]) return b;
  return static_cast<int>(kPoseBucketEdges.size()) - 2;
}

inline std::string pose_bucket_label(int b) {
  std::ostringstream os;
  os << static_cast<int>(kPoseBucketEdges[b]) << "-" << static_cast<int>(kPoseBucketEdges[b + 1]);
  return os.str();
}

struct BucketSummary {
  std::string label;
  std::size_t count = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  std::vector<BucketSummary> buckets;

  void finalize() {
    mean_psnr_db = mean_ssim = 0.0;
    buckets.assign(kPoseBucketEdges.size() - 1, {});
    for (std::size_t b = 0; b < buckets.size(); ++b) buckets[b].label = pose_bucket_label(static_cast<int>(b));
    for (const auto& r : rows) {
      mean_psnr_db += r.psnr_db;
      mean_ssim += r.ssim;
      auto& bk = buckets[pose_bucket(r.pose_delta_deg)];
      ++bk.count;
      bk.psnr_db += r.psnr_db;
      bk.ssim += r.ssim;
    }
    if (!rows.empty()) {
      mean_psnr_db /= static_cast<double>(rows.size());
      mean_ssim /= static_cast<double>(rows.size());
    }
    for (auto& bk : buckets)
      if (bk.count) {
        bk.psnr_db /= static_cast<double>(bk.count);
        bk.ssim /= static_cast<double>(bk.count);
      }
  }

  const BucketSummary& bucket(double delta_deg) const { return buckets.at(pose_bucket(delta_deg)); }

  std::string aggregate_line() const {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "PSNR %.2f dB  SSIM %.4f", mean_psnr_db, mean_ssim);
    return buf;
  }

  std::string csv() const {
    std::ostringstream os;
    os << "scene,view,pose_delta_deg,psnr_db,ssim\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.scene << ',' << r.view << ',' << r.pose_delta_deg << ',' << r.psnr_db << ',' << r.ssim << '\n';
    return os.str();
  }

  std::string table() const {
    std::ostringstream os;
    os << std::fixed;
    os << std::left << std::setw(12) << "scene" << std::right << std::setw(6) << "view" << std::setw(10) << "pose_deg"
       << std::setw(10) << "psnr_db" << std::setw(9) << "ssim" << '\n';
    for (const auto& r : rows)
      os << std::left << std::setw(12) << r.scene << std::right << std::setw(6) << r.view << std::setw(10)
         << std::setprecision(1) << r.pose_delta_deg << std::setw(10) << std::setprecision(2) << r.psnr_db
         << std::setw(9) << std::setprecision(4) << r.ssim << '\n';
    os << "\npose bucket   views   psnr_db    ssim\n";
    for (const auto& b : buckets)
      os << std::left << std::setw(12) << b.label << std::right << std::setw(7) << b.count << std::setw(10)
         << std::setprecision(2) << b.psnr_db << std::setw(8) << std::setprecision(4) << b.ssim << '\n';
    os << '\n' << aggregate_line() << '\n';
    return os.str();
  }
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

/// (scene, reference view, target views) triples of a split. Test entries
/// carry their designated reference; train entries use their first view.
inline std::vector<TestEntry> evaluation_entries(const Manifest& m, const std::string& split) {
  std::vector<TestEntry> out;
  if (split == "test") {
    out = m.test;
  } else if (split == "train") {
    for (const auto& e : m.train) {
      if (e.views.empty()) continue;
      out.push_back({e.scene, e.views.front(), {e.views.begin() + 1, e.views.end()}});
    }
  } else {
    throw std::invalid_argument("unknown split '" + split + "' (expected train or test)");
  }
  std::size_t count = 0;
  for (const auto& e : out) count += e.views.size();
  if (count == 0) throw std::invalid_argument("split '" + split + "' has no views to evaluate");
  return out;
}

/// Renders every target view of the split conditioned on its reference and
/// scores it against the stored image.
template <class S>
MetricsReport evaluate(const Model<S>& model, const Dataset& data, const std::string& split, const RenderConfig& rc,
                       std::uint64_t seed) {
  MetricsReport report;
  for (const auto& entry : evaluation_entries(data.manifest(), split)) {
    const ViewRecord& ref = data.view(entry.scene, entry.reference);
    const auto cond = model.condition(ref);
    for (int v : entry.views) {
      const ViewRecord& target = data.view(entry.scene, v);
      const Image pred = model.render_image(cond, target.camera, rc, derive_seed(seed, v));
      MetricsRow row;
      row.scene = entry.scene;
      row.reference = entry.reference;
      row.view = v;
      row.pose_delta_deg = pose_difference_deg(ref.camera.extrinsics, target.camera.extrinsics);
      row.psnr_db = psnr(pred, target.image);
      row.ssim = ssim(pred, target.image);
      report.rows.push_back(row);
    }
  }
  report.finalize();
  return report;
}

}  // namespace symnerf
