#include "icaunet/data.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icaunet/byte_io.hpp"
#include "icaunet/key_value.hpp"

namespace icaunet {

// ---------------------------------------------------------------- RNG

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

Xoshiro256::Xoshiro256(std::uint64_t seed) {
  for (auto& v : s_) v = splitmix64(seed);
}

std::uint64_t Xoshiro256::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Xoshiro256::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Xoshiro256::gaussian() {
  double acc = 0.0;
  for (int i = 0; i < 12; ++i) acc += uniform();
  return acc - 6.0;
}

std::uint64_t Xoshiro256::below(std::uint64_t bound) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do v = next();
  while (v >= limit);
  return v % bound;
}

double portable_cos(double x) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  x -= two_pi * std::floor(x / two_pi + 0.5);  // now in [-pi, pi]
  const double x2 = x * x;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k <= 14; ++k) {
    term *= -x2 / static_cast<double>((2 * k - 1) * (2 * k));
    sum += term;
  }
  return sum;
}

// ---------------------------------------------------------------- phantom

Extents3 VolumeSequence::extents() const {
  if (frames.empty()) return {0, 0, 0};
  return {frames[0].dim(0), frames[0].dim(1), frames[0].dim(2)};
}

void VolumeSequence::validate() const {
  if (frames.size() != labels.size()) throw DataError("sequence: frame and label counts differ");
  if (frames.empty()) throw DataError("sequence: no frames");
  const Extents3 e = extents();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].shape() != Shape{e.d, e.h, e.w}) throw DataError("sequence: frame " + std::to_string(t) + " extents differ");
    if (!(labels[t].extents == e)) throw DataError("sequence: label " + std::to_string(t) + " extents differ");
    for (auto id : labels[t].ids)
      if (id > kLV) throw DataError("sequence: label value " + std::to_string(id) + " outside {0,1,2,3}");
  }
}

namespace {

// Geometry constants, as fractions of the in-plane extents (LV, shell) and of
// the depth. phase 0 is end-diastole, phase 1 end-systole.
constexpr double kLvRadiusY = 0.17, kLvRadiusX = 0.15, kLvContraction = 0.30;
constexpr double kLvRadiusZ = 0.55, kLvContractionZ = 0.15;
constexpr double kShell = 0.07, kShellThickening = 0.02, kShellZ = 0.10;
constexpr double kCentreX = 0.56;
constexpr double kRvOffset = 0.9, kRvScaleY = 1.15, kRvScaleX = 0.95, kRvContraction = 0.15;
constexpr double kIntensity[4] = {0.05, 0.75, 0.35, 0.9};  // BG, RV, MYO, LV
constexpr double kNoiseSigma = 0.05;                         // intensities span [0, 1]

struct Ellipsoid {
  double cz, cy, cx, rz, ry, rx;
  bool contains(double z, double y, double x) const {
    const double a = (z - cz) / rz, b = (y - cy) / ry, c = (x - cx) / rx;
    return a * a + b * b + c * c <= 1.0;
  }
};

}  // namespace

VolumeSequence generate_phantom(std::uint64_t seed, std::int64_t frames, const Extents3& e,
                                const std::array<double, 3>& spacing) {
  if (frames < 3) throw DataError("phantom: need at least 3 frames, got " + std::to_string(frames));
  if (e.h < 32 || e.w < 32) throw DataError("phantom: in-plane extents must be >= 32 to hold the shell");
  if (e.d < 1) throw DataError("phantom: depth must be positive");

  VolumeSequence seq;
  seq.seed = seed;
  seq.spacing = spacing;
  Xoshiro256 rng(seed);
  const double h = static_cast<double>(e.h), w = static_cast<double>(e.w), d = static_cast<double>(e.d);
  const double cz = (d - 1) / 2, cy = (h - 1) / 2, cx = kCentreX * (w - 1);
  constexpr double two_pi = 6.283185307179586476925286766559;

  for (std::int64_t t = 0; t < frames; ++t) {
    const double phase = (1.0 - portable_cos(two_pi * static_cast<double>(t) / static_cast<double>(frames))) / 2;
    const double squeeze = 1.0 - kLvContraction * phase;
    const Ellipsoid lv{cz, cy, cx, d * kLvRadiusZ * (1.0 - kLvContractionZ * phase), h * kLvRadiusY * squeeze,
                       w * kLvRadiusX * squeeze};
    const double shell = h * (kShell + kShellThickening * phase);
    const Ellipsoid myo{cz, cy, cx, lv.rz + d * kShellZ, lv.ry + shell, lv.rx + shell};
    const double rv_squeeze = 1.0 - kRvContraction * phase;
    const Ellipsoid rv{cz, cy, cx - kRvOffset * myo.rx, myo.rz, kRvScaleY * myo.ry * rv_squeeze,
                       kRvScaleX * myo.rx * rv_squeeze};

    LabelVolume labels(e);
    Tensor frame(Shape{e.d, e.h, e.w});
    auto px = frame.mutable_data();
    std::size_t i = 0;
    for (std::int64_t z = 0; z < e.d; ++z)
      for (std::int64_t y = 0; y < e.h; ++y)
        for (std::int64_t x = 0; x < e.w; ++x, ++i) {
          const double fz = static_cast<double>(z), fy = static_cast<double>(y), fx = static_cast<double>(x);
          std::uint8_t id = kBackground;
          if (lv.contains(fz, fy, fx))
            id = kLV;
          else if (myo.contains(fz, fy, fx))
            id = kMYO;
          else if (rv.contains(fz, fy, fx))
            id = kRV;
          labels.ids[i] = id;
          const double bias = 0.08 * ((fy / (h - 1) - 0.5) + 0.5 * (fx / (w - 1) - 0.5)) +
                              0.03 * (d > 1 ? fz / (d - 1) - 0.5 : 0.0);
          px[i] = static_cast<float>(kIntensity[id] + bias + kNoiseSigma * rng.gaussian());
        }
    seq.frames.push_back(std::move(frame));
    seq.labels.push_back(std::move(labels));
  }
  return seq;
}

// ---------------------------------------------------------------- ICAV

namespace {
constexpr char kVolumeMagic[4] = {'I', 'C', 'A', 'V'};
constexpr std::uint32_t kVolumeVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_volume(const RawVolume& v) {
  if (v.shape.empty() || v.shape.size() > 5) throw ShapeError("ICAV supports ranks 1-5");
  const auto count = static_cast<std::size_t>(shape_numel(v.shape));
  if ((v.dtype == VolumeDtype::f32 && v.f32.size() != count) || (v.dtype == VolumeDtype::u8 && v.u8.size() != count))
    throw ShapeError("ICAV payload size does not match shape " + shape_str(v.shape));
  io::ByteWriter w;
  w.put_bytes(kVolumeMagic, 4);
  w.put<std::uint32_t>(kVolumeVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(v.dtype));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(v.shape.size()));
  for (auto e : v.shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
  if (v.dtype == VolumeDtype::f32)
    w.put_bytes(v.f32.data(), v.f32.size() * sizeof(float));
  else
    w.put_bytes(v.u8.data(), v.u8.size());
  return w.bytes();
}

RawVolume decode_volume(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kVolumeMagic)) throw FormatError("bad ICAV magic", 0);
  if (r.get<std::uint32_t>("version") != kVolumeVersion) throw FormatError("unsupported ICAV version", 4);
  RawVolume v;
  const auto dtype = r.get<std::uint8_t>("dtype");
  if (dtype > 1) throw FormatError("unknown ICAV dtype code " + std::to_string(dtype), 8);
  v.dtype = static_cast<VolumeDtype>(dtype);
  const auto rank = r.get<std::uint8_t>("rank");
  if (rank < 1 || rank > 5) throw FormatError("ICAV rank must be 1-5, got " + std::to_string(rank), 9);
  v.shape.resize(rank);
  for (auto& e : v.shape) e = r.get<std::uint32_t>("extents");
  const auto count = static_cast<std::size_t>(shape_numel(v.shape));
  if (v.dtype == VolumeDtype::f32) {
    v.f32.resize(count);
    r.get_bytes(v.f32.data(), count * sizeof(float), "payload");
  } else {
    v.u8.resize(count);
    r.get_bytes(v.u8.data(), count, "payload");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after ICAV payload", r.offset());
  return v;
}

void save_volume(const std::string& path, const Tensor& tensor, VolumeDtype dtype) {
  RawVolume v;
  v.dtype = dtype;
  v.shape = tensor.shape();
  auto data = tensor.data();
  if (dtype == VolumeDtype::f32) {
    v.f32.assign(data.begin(), data.end());
  } else {
    v.u8.reserve(data.size());
    for (float x : data) {
      if (!(x >= 0.0f && x <= 255.0f) || x != std::floor(x))
        throw DataError("u8 volume needs integral values in [0, 255]");
      v.u8.push_back(static_cast<std::uint8_t>(x));
    }
  }
  io::write_file(path, encode_volume(v));
}

void save_labels(const std::string& path, const LabelVolume& labels) {
  RawVolume v;
  v.dtype = VolumeDtype::u8;
  v.shape = {labels.extents.d, labels.extents.h, labels.extents.w};
  v.u8 = labels.ids;
  io::write_file(path, encode_volume(v));
}

RawVolume load_volume(const std::string& path) { return decode_volume(io::read_file(path)); }

Tensor volume_to_tensor(const RawVolume& v) {
  if (v.dtype == VolumeDtype::f32) return Tensor(v.shape, v.f32);
  return Tensor(v.shape, std::vector<float>(v.u8.begin(), v.u8.end()));
}

LabelVolume volume_to_labels(const RawVolume& v) {
  if (v.shape.size() != 3) throw DataError("label volume must be rank 3, got " + shape_str(v.shape));
  LabelVolume out({v.shape[0], v.shape[1], v.shape[2]});
  if (v.dtype == VolumeDtype::u8) {
    out.ids = v.u8;
  } else {
    for (std::size_t i = 0; i < v.f32.size(); ++i) {
      const float x = v.f32[i];
      if (!(x >= 0.0f && x <= 255.0f) || x != std::floor(x)) throw DataError("label volume has non-integral values");
      out.ids[i] = static_cast<std::uint8_t>(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------- pipeline

Tensor normalize(const Tensor& frame) {
  auto x = frame.data();
  Tensor out(frame.shape(), 0.0f);
  if (x.empty()) return out;
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  if (!(var > 0.0)) return out;
  const double inv = 1.0 / std::sqrt(var);
  auto y = out.mutable_data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>((x[i] - mean) * inv);
  return out;
}

std::vector<TripleIndex> iterate_triples(std::int64_t frames, bool shuffle, std::uint64_t order_seed) {
  std::vector<TripleIndex> out;
  for (std::int64_t t = 0; t < frames; ++t)
    out.push_back({std::max<std::int64_t>(t - 1, 0), t, std::min<std::int64_t>(t + 1, frames - 1)});
  if (shuffle && out.size() > 1) {
    Xoshiro256 rng(order_seed);
    for (std::size_t i = out.size() - 1; i > 0; --i) std::swap(out[i], out[rng.below(i + 1)]);
  }
  return out;
}

FrameTriple make_triple(const VolumeSequence& seq, const TripleIndex& index) {
  auto input = [&](std::int64_t t) {
    const Tensor& f = seq.frames.at(static_cast<std::size_t>(t));
    auto n = normalize(f);
    return Tensor(Shape{1, 1, f.dim(0), f.dim(1), f.dim(2)}, std::vector<float>(n.data().begin(), n.data().end()));
  };
  return {input(index.prev), input(index.centre), input(index.next), &seq.labels.at(static_cast<std::size_t>(index.centre))};
}

namespace {
std::string frame_name(std::int64_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%04lld.icav", static_cast<long long>(t));
  return buf;
}
}  // namespace

void save_dataset(const std::string& dir, const VolumeSequence& seq) {
  seq.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "frames");
  fs::create_directories(fs::path(dir) / "labels");
  for (std::int64_t t = 0; t < seq.length(); ++t) {
    save_volume((fs::path(dir) / "frames" / frame_name(t)).string(), seq.frames[static_cast<std::size_t>(t)]);
    save_labels((fs::path(dir) / "labels" / frame_name(t)).string(), seq.labels[static_cast<std::size_t>(t)]);
  }
  const Extents3 e = seq.extents();
  std::ofstream meta(fs::path(dir) / "meta.txt");
  meta.precision(17);
  meta << "T = " << seq.length() << "\nd = " << e.d << "\nh = " << e.h << "\nw = " << e.w << "\nspacing = "
       << seq.spacing[0] << "," << seq.spacing[1] << "," << seq.spacing[2] << "\nseed = " << seq.seed << "\n";
  if (!meta) throw DataError("cannot write " + (fs::path(dir) / "meta.txt").string());
}

VolumeSequence load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto meta_path = fs::path(dir) / "meta.txt";
  std::ifstream in(meta_path);
  if (!in) throw DataError("dataset: missing " + meta_path.string());
  std::stringstream text;
  text << in.rdbuf();
  KeyValueMap kv;
  std::int64_t frames = 0;
  Extents3 e;
  VolumeSequence seq;
  try {
    kv = parse_key_values(text.str());
    frames = kv_int(kv, "T");
    e = {kv_int(kv, "d"), kv_int(kv, "h"), kv_int(kv, "w")};
    seq.seed = static_cast<std::uint64_t>(kv_int(kv, "seed"));
    std::istringstream sp(kv_string(kv, "spacing"));
    char c1 = 0, c2 = 0;
    if (!(sp >> seq.spacing[0] >> c1 >> seq.spacing[1] >> c2 >> seq.spacing[2]) || c1 != ',' || c2 != ',')
      throw ConfigError("spacing must be 'z,y,x'");
  } catch (const ConfigError& err) {
    throw DataError("dataset meta.txt: " + std::string(err.what()));
  }
  if (frames < 1) throw DataError("dataset: T must be positive");
  for (std::int64_t t = 0; t < frames; ++t) {
    const auto f = load_volume((fs::path(dir) / "frames" / frame_name(t)).string());
    if (f.dtype != VolumeDtype::f32) throw DataError("dataset: frame " + std::to_string(t) + " is not f32");
    seq.frames.push_back(volume_to_tensor(f));
    seq.labels.push_back(volume_to_labels(load_volume((fs::path(dir) / "labels" / frame_name(t)).string())));
  }
  seq.validate();
  if (!(seq.extents() == e)) throw DataError("dataset: volume extents disagree with meta.txt");
  return seq;
}

}  // namespace icaunet
