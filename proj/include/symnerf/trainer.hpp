#pragma once

// AdamW training over a multi-scene dataset, batch sampling, logging and a
// portable little-endian checkpoint container.
//
// Checkpoint layout (all integers little-endian):
//   magic "SYMNCKPT" | u32 version | u64 header bytes | header JSON
//   u32 array count | per array: u32 name bytes, name, u8 dtype (0 = f32,
//   1 = f64), u32 rank, u64 dims[rank], raw little-endian values
// The header holds the config snapshot, the step counter and the scalar
// type. Arrays are the model parameters followed by "adam.m/<name>" and
// "adam.v/<name>".

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "symnerf/config.hpp"
#include "symnerf/model.hpp"
#include "symnerf/synthdata.hpp"

namespace symnerf {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sum over rays of the squared color error.
inline double loss(const std::vector<Vec3>& predicted, const std::vector<Vec3>& target) {
  if (predicted.size() != target.size()) throw std::invalid_argument("loss: predicted and target differ in length");
  double acc = 0.0;
  for (std::size_t r = 0; r < predicted.size(); ++r) acc += (predicted[r] - target[r]).squaredNorm();
  return acc;
}

inline double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw std::invalid_argument("lr_schedule: step must be >= 0");
  if (step < cfg.warmup_steps) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  return cfg.peak_lr * std::pow(cfg.decay_rate, static_cast<double>(step - cfg.warmup_steps));
}

template <class S>
struct TrainState {
  Config config;
  Model<S> model;
  std::vector<AlignedVector<S>> adam_m;
  std::vector<AlignedVector<S>> adam_v;
  std::int64_t step = 0;

  TrainState() = default;
  explicit TrainState(Config cfg) : config(std::move(cfg)) {
    config.sync();
    config.validate();
    model = Model<S>(config.model, derive_seed(config.train.seed, 0));
    for (const Param<S>* p : model.parameters()) {
      adam_m.emplace_back(p->size(), S(0));
      adam_v.emplace_back(p->size(), S(0));
    }
  }
};

/// Rays of one object in a training batch.
struct ObjectBatch {
  std::string scene;
  int reference = 0;
  int target = 0;
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
};

/// Deterministic in (seed, step): per object a random training scene, a
/// uniformly drawn reference view, a distinct target view and uniform pixels.
inline std::vector<ObjectBatch> sample_batch(const Dataset& data, const TrainConfig& cfg, std::int64_t step) {
  const auto& train = data.manifest().train;
  std::vector<const TrainEntry*> usable;
  for (const auto& e : train)
    if (e.views.size() >= 2) usable.push_back(&e);
  if (usable.empty()) throw std::invalid_argument("sample_batch: no training scene has two or more views");
  std::vector<ObjectBatch> out(static_cast<std::size_t>(cfg.objects_per_batch));
  for (int o = 0; o < cfg.objects_per_batch; ++o) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(step) + 1, static_cast<std::uint64_t>(o)));
    const TrainEntry& e = *usable[rng.index(usable.size())];
    const std::size_t ri = rng.index(e.views.size());
    std::size_t ti = rng.index(e.views.size() - 1);
    if (ti >= ri) ++ti;
    ObjectBatch& b = out[o];
    b.scene = e.scene;
    b.reference = e.views[ri];
    b.target = e.views[ti];
    const ViewRecord& tv = data.view(e.scene, b.target);
    const int w = tv.image.width, h = tv.image.height;
    b.rays.reserve(cfg.rays_per_object);
    b.targets.reserve(cfg.rays_per_object);
    for (int r = 0; r < cfg.rays_per_object; ++r) {
      const int p = static_cast<int>(rng.index(static_cast<std::size_t>(w) * h));
      const int x = p % w, y = p / w;
      b.rays.push_back(camera_ray(Vec2(x, y), tv.camera.intrinsics, tv.camera.extrinsics));
      b.targets.emplace_back(tv.image.at(y, x, 0), tv.image.at(y, x, 1), tv.image.at(y, x, 2));
    }
  }
  return out;
}

/// One decoupled-weight-decay Adam update with the learning rate of the
/// current step. Returns the batch loss.
template <class S>
double train_step(TrainState<S>& state, const Dataset& data, const std::vector<ObjectBatch>& batch) {
  const TrainConfig& tc = state.config.train;
  RenderConfig rc = state.config.render;
  rc.samples_per_ray = tc.samples_per_ray;
  rc.stratified = tc.stratified;
  state.model.zero_grad();
  double total = 0.0;
  for (std::size_t o = 0; o < batch.size(); ++o) {
    typename Model<S>::RayBatch rb;
    rb.reference = &data.view(batch[o].scene, batch[o].reference);
    rb.rays = batch[o].rays;
    rb.targets = batch[o].targets;
    const std::uint64_t seed = derive_seed(tc.seed, static_cast<std::uint64_t>(state.step) + 1, 1000 + o);
    total += state.model.accumulate_gradients(rb, rc, seed, true);
  }
  if (!std::isfinite(total))
    throw NonFiniteLossError("non-finite loss at step " + std::to_string(state.step));

  const double lr = lr_schedule(state.step, tc);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(tc.beta1, t);
  const double bc2 = 1.0 - std::pow(tc.beta2, t);
  const S b1 = static_cast<S>(tc.beta1), b2 = static_cast<S>(tc.beta2);
  const S step_size = static_cast<S>(lr / bc1);
  const S inv_bc2 = static_cast<S>(1.0 / bc2);
  const S eps = static_cast<S>(tc.epsilon);
  const S decay = static_cast<S>(1.0 - lr * tc.weight_decay);
  using ArrayX = Eigen::Array<S, Eigen::Dynamic, 1>;
  auto params = state.model.parameter_list();
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<S>& p = *params[i];
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::Map<ArrayX> value(p.value.data(), n), m(state.adam_m[i].data(), n), v(state.adam_v[i].data(), n);
    Eigen::Map<const ArrayX> g(p.grad.data(), n);
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    value = value * decay - step_size * m / ((v * inv_bc2).sqrt() + eps);
  }
  ++state.step;
  return total;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

inline void put_string(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::size_t max_len = 1u << 20) {
  const auto n = get_le<std::uint32_t>(is);
  if (n > max_len) throw std::runtime_error("corrupt checkpoint: string too long");
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw std::runtime_error("truncated checkpoint");
  return s;
}

template <class S>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>);
  return std::is_same_v<S, float> ? 0 : 1;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'Y', 'M', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointArray {
  std::uint8_t dtype = 0;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
};

struct CheckpointFile {
  nlohmann::json header;
  std::vector<std::string> order;
  std::map<std::string, CheckpointArray> arrays;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const TrainState<S>& state) {
  nlohmann::json header;
  header["config"] = config_to_json(state.config);
  header["step"] = state.step;
  header["seed"] = state.config.train.seed;
  header["scalar"] = std::is_same_v<S, float> ? "float32" : "float64";

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open checkpoint " + tmp + " for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    const std::string h = header.dump();
    detail::put_le<std::uint64_t>(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));

    const auto params = state.model.parameters();
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(3 * params.size()));
    auto write_array = [&](const std::string& name, const std::vector<std::size_t>& shape, const AlignedVector<S>& v) {
      detail::put_string(os, name);
      detail::put_le<std::uint8_t>(os, detail::dtype_code<S>());
      detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(shape.size()));
      for (auto d : shape) detail::put_le<std::uint64_t>(os, d);
      for (S x : v) detail::put_le<S>(os, x);
    };
    for (std::size_t i = 0; i < params.size(); ++i) write_array(params[i]->name, params[i]->shape, params[i]->value);
    for (std::size_t i = 0; i < params.size(); ++i)
      write_array("adam.m/" + params[i]->name, params[i]->shape, state.adam_m[i]);
    for (std::size_t i = 0; i < params.size(); ++i)
      write_array("adam.v/" + params[i]->name, params[i]->shape, state.adam_v[i]);
    os.flush();
    if (!os) throw std::runtime_error("write failed for checkpoint " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

inline CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  try {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
      throw std::runtime_error("not a checkpoint file");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion) throw std::runtime_error("unsupported version " + std::to_string(version));
    const auto hlen = detail::get_le<std::uint64_t>(is);
    if (hlen > (1u << 24)) throw std::runtime_error("corrupt header length");
    std::string h(hlen, '\0');
    if (!is.read(h.data(), static_cast<std::streamsize>(hlen))) throw std::runtime_error("truncated header");
    CheckpointFile f;
    f.header = nlohmann::json::parse(h);
    const auto count = detail::get_le<std::uint32_t>(is);
    for (std::uint32_t a = 0; a < count; ++a) {
      const std::string name = detail::get_string(is);
      CheckpointArray arr;
      arr.dtype = detail::get_le<std::uint8_t>(is);
      if (arr.dtype > 1) throw std::runtime_error("unknown dtype in array " + name);
      const auto rank = detail::get_le<std::uint32_t>(is);
      if (rank > 8) throw std::runtime_error("corrupt rank in array " + name);
      std::uint64_t n = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        arr.dims.push_back(detail::get_le<std::uint64_t>(is));
        n *= arr.dims.back();
      }
      if (n > (1ull << 32)) throw std::runtime_error("corrupt size in array " + name);
      arr.values.resize(n);
      for (auto& v : arr.values) v = arr.dtype == 0 ? detail::get_le<float>(is) : detail::get_le<double>(is);
      f.order.push_back(name);
      f.arrays.emplace(name, std::move(arr));
    }
    return f;
  } catch (const std::exception& e) {
    throw std::runtime_error("bad checkpoint " + path.string() + ": " + e.what());
  }
}

template <class S>
TrainState<S> load_checkpoint(const std::filesystem::path& path) {
  const CheckpointFile f = read_checkpoint_file(path);
  Config cfg;
  try {
    cfg = config_from_json(f.header.at("config"));
  } catch (const std::exception& e) {
    throw std::runtime_error("bad checkpoint " + path.string() + ": " + e.what());
  }
  TrainState<S> state(cfg);
  state.step = f.header.at("step").get<std::int64_t>();
  auto params = state.model.parameter_list();
  auto fill = [&](const std::string& name, const std::vector<std::size_t>& shape, AlignedVector<S>& out) {
    auto it = f.arrays.find(name);
    if (it == f.arrays.end()) throw std::runtime_error("checkpoint " + path.string() + " lacks array " + name);
    const auto& a = it->second;
    if (a.dims.size() != shape.size() || !std::equal(shape.begin(), shape.end(), a.dims.begin()))
      throw std::runtime_error("checkpoint " + path.string() + ": shape mismatch for " + name);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = static_cast<S>(a.values[j]);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    fill(params[i]->name, params[i]->shape, params[i]->value);
    fill("adam.m/" + params[i]->name, params[i]->shape, state.adam_m[i]);
    fill("adam.v/" + params[i]->name, params[i]->shape, state.adam_v[i]);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainRunOptions {
  std::filesystem::path out_dir;          // checkpoints and log go here
  std::int64_t stop_step = -1;            // stop early at this step (-1: total_steps)
  bool quiet = false;
  std::function<void(std::int64_t, double, double)> on_log;  // (step, lr, loss)
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%07lld.bin", static_cast<long long>(step));
  return dir / buf;
}

/// Runs train_step until total_steps (or stop_step). Writes log.csv with
/// `step,lr,loss`, a checkpoint every checkpoint_interval steps and
/// final.bin at the end; only the newest keep_checkpoints periodic files
/// are retained. A state with step > 0 continues its log.
template <class S>
void train(TrainState<S>& state, const Dataset& data, const TrainRunOptions& opt) {
  const TrainConfig& tc = state.config.train;
  if (data.manifest().train.empty()) throw std::invalid_argument("train: dataset has no training scenes");
  std::error_code ec;
  std::filesystem::create_directories(opt.out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + opt.out_dir.string() + ": " + ec.message());
  const auto log_path = opt.out_dir / "log.csv";
  const bool append = state.step > 0 && std::filesystem::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open training log " + log_path.string());
  if (!append) log << "step,lr,loss\n";
  log << std::setprecision(9);

  const std::int64_t end = opt.stop_step >= 0 ? std::min<std::int64_t>(opt.stop_step, tc.total_steps) : tc.total_steps;
  while (state.step < end) {
    const double lr = lr_schedule(state.step, tc);
    const auto batch = sample_batch(data, tc, state.step);
    const double l = train_step(state, data, batch);
    const std::int64_t s = state.step;
    if (s % tc.log_interval == 0 || s == end) {
      log << s << ',' << lr << ',' << l << '\n';
      log.flush();
      if (opt.on_log) opt.on_log(s, lr, l);
    }
    if (s % tc.checkpoint_interval == 0) {
      save_checkpoint(checkpoint_path(opt.out_dir, s), state);
      const std::int64_t stale = s - static_cast<std::int64_t>(tc.keep_checkpoints) * tc.checkpoint_interval;
      if (tc.keep_checkpoints > 0 && stale > 0) std::filesystem::remove(checkpoint_path(opt.out_dir, stale), ec);
    }
  }
  if (!log) throw std::runtime_error("write failed for training log " + log_path.string());
  save_checkpoint(opt.out_dir / "final.bin", state);
}

}  // namespace symnerf
