#pragma once

// Command-level workflows shared by the CLI and the acceptance suite:
// spiral render poses and the four-mode ablation sweep.

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "symnerf/config.hpp"
#include "symnerf/metrics.hpp"
#include "symnerf/trainer.hpp"

namespace symnerf {

/// Archimedean spiral on the viewing sphere: azimuth advances uniformly over
/// `turns` revolutions while elevation sweeps the configured band.
inline std::vector<Camera> spiral_cameras(const CameraIntrinsics& intr, const SpiralConfig& sc) {
  if (sc.frames < 1) throw std::invalid_argument("spiral_cameras: frames must be >= 1");
  std::vector<Camera> out;
  for (int i = 0; i < sc.frames; ++i) {
    const double f = sc.frames == 1 ? 0.0 : static_cast<double>(i) / (sc.frames - 1);
    const double az = 2.0 * std::numbers::pi * sc.turns * static_cast<double>(i) / sc.frames;
    const double el = (sc.elevation_min_deg + f * (sc.elevation_max_deg - sc.elevation_min_deg)) * std::numbers::pi / 180.0;
    const Vec3 eye = sc.radius * Vec3(std::sin(az) * std::cos(el), std::sin(el), std::cos(az) * std::cos(el));
    out.push_back({intr, CameraExtrinsics::look_at(eye, Vec3::Zero())});
  }
  return out;
}

struct AblationRow {
  AblationMode mode = AblationMode::full;
  std::string label;  // (a) .. (d)
  MetricsReport report;
  double delta_pct = 0.0;  // PSNR change relative to row (a)
};

inline std::string ablation_label(AblationMode m) {
  switch (m) {
    case AblationMode::global_only: return "(a)";
    case AblationMode::global_local: return "(b)";
    case AblationMode::full: return "(c)";
    case AblationMode::no_hypernet: return "(d)";
  }
  return "?";
}

inline constexpr std::array<AblationMode, 4> kAblationModes{AblationMode::global_only, AblationMode::global_local,
                                                             AblationMode::full, AblationMode::no_hypernet};

inline void fill_ablation_deltas(std::vector<AblationRow>& rows) {
  const double base = rows.empty() ? 0.0 : rows.front().report.mean_psnr_db;
  for (auto& r : rows) r.delta_pct = base != 0.0 ? 100.0 * (r.report.mean_psnr_db - base) / base : 0.0;
}

inline std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "| row | mode | hypernet | local | symm | PSNR (dB) | PSNR(delta) | SSIM |";
  std::vector<std::string> bucket_labels;
  if (!rows.empty())
    for (const auto& b : rows.front().report.buckets) {
      bucket_labels.push_back(b.label);
      os << " PSNR " << b.label << " |";
    }
  os << "\n|---|---|---|---|---|---|---|---|";
  for (std::size_t i = 0; i < bucket_labels.size(); ++i) os << "---|";
  os << '\n';
  char buf[64];
  for (const auto& r : rows) {
    const FeatureInputs f = feature_inputs(r.mode);
    os << "| " << r.label << " | " << to_string(r.mode) << " | " << (uses_hypernet(r.mode) ? "x" : " ") << " | "
       << (f != FeatureInputs::none ? "x" : " ") << " | " << (f == FeatureInputs::local_and_symmetric ? "x" : " ")
       << " | ";
    std::snprintf(buf, sizeof(buf), "%.2f | %+.2f%% | %.4f |", r.report.mean_psnr_db, r.delta_pct, r.report.mean_ssim);
    os << buf;
    for (const auto& b : r.report.buckets) {
      if (b.count)
        std::snprintf(buf, sizeof(buf), " %.2f |", b.psnr_db);
      else
        std::snprintf(buf, sizeof(buf), " - |");
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

/// Most advanced checkpoint in `dir` (final.bin or ckpt_*.bin) that was
/// written with exactly `cfg`.
template <class S>
std::optional<TrainState<S>> resume_state(const std::filesystem::path& dir, const Config& cfg) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) return std::nullopt;
  std::vector<fs::path> candidates;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name == "final.bin" || (name.rfind("ckpt_", 0) == 0 && e.path().extension() == ".bin")) candidates.push_back(e.path());
  }
  const auto want = config_to_json(cfg);
  std::optional<TrainState<S>> best;
  for (const auto& path : candidates) {
    try {
      const auto header = read_checkpoint_file(path).header;
      if (header.at("config") != want) continue;
      if (best && header.at("step").get<std::int64_t>() <= best->step) continue;
      best = load_checkpoint<S>(path);
    } catch (const std::exception&) {
      // unreadable or partial files are ignored
    }
  }
  return best;
}

/// Trains every ablation mode from the same seed and data, evaluates each
/// on the test split and returns rows (a)..(d). Each run lives in
/// out_dir/<mode>/ and picks up from its latest matching checkpoint.
inline std::vector<AblationRow> run_ablation(const Config& base, const Dataset& data,
                                             const std::filesystem::path& out_dir, bool quiet = false) {
  std::vector<AblationRow> rows;
  for (AblationMode mode : kAblationModes) {
    Config cfg = base;
    cfg.train.ablation_mode = mode;
    cfg.sync();
    TrainRunOptions opt;
    opt.out_dir = out_dir / to_string(mode);
    auto resumed = resume_state<float>(opt.out_dir, cfg);
    TrainState<float> state = resumed ? std::move(*resumed) : TrainState<float>(cfg);
    if (!quiet && resumed)
      std::printf("[%s] resuming at step %lld\n", to_string(mode).c_str(), static_cast<long long>(state.step));
    if (!quiet)
      opt.on_log = [&](std::int64_t s, double lr, double l) {
        if (s % (cfg.train.log_interval * 10) == 0)
          std::printf("[%s] step %lld lr %.3g loss %.5f\n", to_string(mode).c_str(), static_cast<long long>(s), lr, l);
        std::fflush(stdout);
      };
    train(state, data, opt);
    AblationRow row;
    row.mode = mode;
    row.label = ablation_label(mode);
    row.report = evaluate(state.model, data, cfg.eval.split, cfg.render, cfg.eval.seed);
    write_text_file(opt.out_dir / "report.csv", row.report.csv());
    if (!quiet) std::printf("[%s] %s\n", to_string(mode).c_str(), row.report.aggregate_line().c_str());
    rows.push_back(std::move(row));
  }
  fill_ablation_deltas(rows);
  return rows;
}

}  // namespace symnerf
