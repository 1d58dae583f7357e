#pragma once

// Synthetic cine phantom, the ICAV volume format and temporal triples.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icaunet/neural_ops.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet {

enum Label : std::uint8_t { kBackground = 0, kRV = 1, kMYO = 2, kLV = 3 };

// xoshiro256** seeded through splitmix64. Used wherever output must be
// bit-identical across platforms.
class Xoshiro256 {
 public:
  explicit Xoshiro256(std::uint64_t seed);
  std::uint64_t next();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Irwin-Hall approximation: sum of 12 uniforms minus 6.
  double gaussian();
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

 private:
  std::array<std::uint64_t, 4> s_{};
};

// cos(x) from range reduction and a fixed Taylor polynomial, so results do
// not depend on the platform's libm.
double portable_cos(double x);

struct VolumeSequence {
  std::vector<Tensor> frames;  // (d, h, w)
  std::vector<LabelVolume> labels;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm along (z, y, x)
  std::uint64_t seed = 0;

  std::int64_t length() const { return static_cast<std::int64_t>(frames.size()); }
  Extents3 extents() const;
  // DataError unless the invariants hold.
  void validate() const;
};

// Beating-heart phantom: LV ellipsoid whose radii follow a cosine cycle
// (smallest at t = T/2), a myocardial shell around it, an RV crescent on one
// side, plus class intensities, seeded Gaussian noise (sigma 0.05) and a
// smooth additive bias field. DataError if T < 3 or h, w < 32.
VolumeSequence generate_phantom(std::uint64_t seed, std::int64_t frames, const Extents3& extents,
                                const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

enum class VolumeDtype : std::uint8_t { f32 = 0, u8 = 1 };

struct RawVolume {
  VolumeDtype dtype = VolumeDtype::f32;
  Shape shape;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;
};

// ICAV: "ICAV", u32 version 1, u8 dtype, u8 rank (1..5), u32 extents, then
// the row-major little-endian payload.
std::vector<std::uint8_t> encode_volume(const RawVolume& volume);
RawVolume decode_volume(const std::vector<std::uint8_t>& bytes);

// u8 requires integral values in [0, 255] (DataError otherwise).
void save_volume(const std::string& path, const Tensor& tensor, VolumeDtype dtype = VolumeDtype::f32);
void save_labels(const std::string& path, const LabelVolume& labels);
RawVolume load_volume(const std::string& path);
Tensor volume_to_tensor(const RawVolume& volume);
// Requires a rank-3 volume.
LabelVolume volume_to_labels(const RawVolume& volume);

// Zero mean, unit (population) variance; a constant frame maps to zeros.
Tensor normalize(const Tensor& frame);

struct TripleIndex {
  std::int64_t prev = 0, centre = 0, next = 0;
};

// Exactly T triples with replicated ends. `shuffle` applies a seeded
// Fisher-Yates permutation; otherwise centres are in order.
std::vector<TripleIndex> iterate_triples(std::int64_t frames, bool shuffle, std::uint64_t order_seed = 0);

// Normalized (1,1,d,h,w) model inputs for a triple.
struct FrameTriple {
  Tensor prev, centre, next;
  const LabelVolume* labels = nullptr;
};
FrameTriple make_triple(const VolumeSequence& seq, const TripleIndex& index);

// Directory layout: frames/t####.icav (f32), labels/t####.icav (u8),
// meta.txt with T, d, h, w, spacing, seed.
void save_dataset(const std::string& dir, const VolumeSequence& seq);
VolumeSequence load_dataset(const std::string& dir);

}  // namespace icaunet
