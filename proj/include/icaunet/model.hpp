#pragma once

// ICA-UNet: an encoder that splits each frame into a mixing tensor A_n and a
// basis tensor X, a U-Net backbone over A with temporal correlation features,
// and per-level decoders that mix the backbone output with X through a
// transposed convolution whose kernel is X itself.
//
// Levels run from 0 (bottleneck) to n (encoder output). Level k mixing
// tensors have c_k channels and extents (d/2, h/(4*2^(n-k)), w/(4*2^(n-k)));
// level k logits have extents (d, h*2^(k-n), w*2^(k-n)).

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "icaunet/neural_ops.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet {

class ThreadPool;

struct ModelConfig {
  std::int64_t n = 3;
  std::int64_t m = 32;
  std::int64_t u = 4;
  // Width multiplier for levels below n; 0 means m.
  std::int64_t base_channels = 0;
  std::int64_t stem_channels = 16;
  CorrSpec corr{};
  std::int64_t num_classes = 4;
  Extents3 extents{8, 64, 64};
  // Channel groups of the backbone; 1 is the dense model.
  std::int64_t groups = 1;
  std::uint64_t seed = 0;
  double leaky_slope = 0.01;

  // ConfigError for bad counts and groupings, ShapeError for extents that
  // violate the level schedule or admit no mixing geometry.
  void validate() const;

  std::int64_t base() const { return base_channels > 0 ? base_channels : m; }
  // c_n = m; c_k = min(base * 2^(n-k), 8 * base) below.
  std::int64_t channels(std::int64_t level) const;
  Extents3 level_extents(std::int64_t level) const;
  Extents3 output_extents(std::int64_t level) const;
  Extents3 basis_extents() const { return {extents.d, extents.h / 16, extents.w / 16}; }

  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Transposed-conv geometry that mixes level-k coefficients (m channels) with
// the basis kernel (m, u, d, h/16, w/16) into output_extents(level). Per axis
// the stride closest to out/in with a non-negative integral padding is used.
ConvSpec mixing_spec(const ModelConfig& config, std::int64_t level);

// Solves (in - 1) s + k - 2p == out for s >= 1, p >= 0, preferring s closest
// to out / in (smaller s on ties). Throws ShapeError when impossible.
std::pair<std::int64_t, std::int64_t> solve_transposed_axis(std::int64_t in, std::int64_t kernel,
                                                            std::int64_t out);

template <typename Real>
struct NamedTensor {
  std::string name;
  BasicTensor<Real>* tensor;
  bool trainable;  // false for batch-norm running statistics
};

template <typename Real>
struct ModelOutputs {
  std::vector<BasicTensor<Real>> logits;  // index k-1 holds level k, k = 1..n
  BasicTensor<Real> mixing;               // A_n of the centre frame
  BasicTensor<Real> basis;                // X of the centre frame
  // Per level k = 1..n (index k-1), concatenated over groups.
  std::vector<BasicTensor<Real>> corr_prev;
  std::vector<BasicTensor<Real>> corr_next;
  std::vector<BasicTensor<Real>> fused;           // A'_{c,k}
  std::vector<BasicTensor<Real>> reduced;         // m-channel decoder input
  std::vector<BasicTensor<Real>> contracted;      // A_k of the centre frame, k = 0..n
  std::vector<BasicTensor<Real>> mixed;           // u-channel mixing output
};

template <typename Real>
class IcaUNet {
 public:
  explicit IcaUNet(ModelConfig config);
  ~IcaUNet();
  IcaUNet(const IcaUNet&) = delete;
  IcaUNet& operator=(const IcaUNet&) = delete;

  const ModelConfig& config() const { return config_; }

  // Frames are (1, 1, d, h, w). Training mode uses batch statistics and
  // updates the running ones. With a pool, and only when neither training
  // nor recording gradients, the three encoder passes and the per-group
  // backbones run concurrently.
  ModelOutputs<Real> forward(const BasicTensor<Real>& prev, const BasicTensor<Real>& cur,
                             const BasicTensor<Real>& next, bool training, ThreadPool* pool = nullptr);

  // Encoder alone on one frame; X is skipped unless `with_basis`.
  std::pair<BasicTensor<Real>, BasicTensor<Real>> encode(const BasicTensor<Real>& frame, bool training,
                                                         bool with_basis);

  // Parameters then buffers, in a fixed order.
  std::vector<NamedTensor<Real>> tensors();
  std::vector<NamedTensor<Real>> parameters();
  std::int64_t parameter_count();
  void zero_grad();

 private:
  struct Layers;
  ModelConfig config_;
  std::unique_ptr<Layers> layers_;
};

// ICAC checkpoint: "ICAC", u32 version 1, length-prefixed config text, u32
// tensor count, then per tensor a length-prefixed name, u8 rank, u32 extents
// and f32 little-endian data. Parameters and running statistics are stored.
template <typename Real>
void save_checkpoint(const std::string& path, IcaUNet<Real>& model);
template <typename Real>
std::vector<std::uint8_t> checkpoint_bytes(IcaUNet<Real>& model);
// FormatError (with offset) for a malformed file.
std::unique_ptr<IcaUNet<float>> load_checkpoint(const std::string& path);
std::unique_ptr<IcaUNet<float>> checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes);

}  // namespace icaunet
