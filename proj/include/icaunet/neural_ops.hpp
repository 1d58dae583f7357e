#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "icaunet/tensor.hpp"

namespace icaunet {

using Triple = std::array<std::int64_t, 3>;

struct Extents3 {
  std::int64_t d = 1, h = 1, w = 1;

  std::int64_t voxels() const { return d * h * w; }
  friend bool operator==(const Extents3&, const Extents3&) = default;
};

// Geometry of a 3-D (transposed) convolution. For conv3d the weight is
// (out, in/groups, kd, kh, kw); for transposed_conv3d it is
// (in, out/groups, kd, kh, kw).
struct ConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  Triple kernel{1, 3, 3};
  Triple stride{1, 1, 1};
  Triple padding{0, 1, 1};
  std::int64_t groups = 1;

  // Throws ShapeError unless (dim - k + 2p) is a non-negative multiple of s on
  // every axis.
  Extents3 conv_output(const Extents3& in) const;
  // (in - 1) s + k - 2p per axis; throws ShapeError if non-positive.
  Extents3 transposed_output(const Extents3& in) const;
  void validate() const;
};

struct CorrSpec {
  std::int64_t max_disp = 3;
  std::int64_t channels() const { return (2 * max_disp + 1) * (2 * max_disp + 1); }
  friend bool operator==(const CorrSpec&, const CorrSpec&) = default;
};

template <typename Real>
struct BatchNormState {
  BasicTensor<Real> running_mean;
  BasicTensor<Real> running_var;
  Real momentum = Real(0.1);

  explicit BatchNormState(std::int64_t channels = 1)
      : running_mean(Shape{channels}, Real(0)), running_var(Shape{channels}, Real(1)) {}
};

Extents3 spatial_extents(const Shape& shape);

template <typename Real>
BasicTensor<Real> conv3d(const BasicTensor<Real>& x, const BasicTensor<Real>& weight,
                         const std::optional<BasicTensor<Real>>& bias, const ConvSpec& spec);

template <typename Real>
BasicTensor<Real> transposed_conv3d(const BasicTensor<Real>& x, const BasicTensor<Real>& weight,
                                    const ConvSpec& spec,
                                    const std::optional<BasicTensor<Real>>& bias = std::nullopt);

// Training mode normalizes with the batch statistics (biased variance) and
// folds them into `state` with its momentum; eval mode uses `state`.
template <typename Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BatchNormState<Real>& state, bool training,
                             Real eps = Real(1e-5));

template <typename Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, Real slope = Real(0.01));

// FlowNet-style cost volume restricted to in-plane displacements. Channel
// q = (dh + D) * (2D + 1) + (dw + D) holds
//   (1/C) sum_c f1[c, z, y, x] * f2[c, z, y + dh, x + dw]
// with out-of-volume reads contributing zero.
template <typename Real>
BasicTensor<Real> correlation3d(const BasicTensor<Real>& f1, const BasicTensor<Real>& f2,
                                const CorrSpec& spec);

// Class-id volume, (d, h, w) row-major.
struct LabelVolume {
  Extents3 extents;
  std::vector<std::uint8_t> ids;

  LabelVolume() = default;
  LabelVolume(Extents3 e, std::uint8_t fill = 0)
      : extents(e), ids(static_cast<std::size_t>(e.voxels()), fill) {}

  std::uint8_t at(std::int64_t z, std::int64_t y, std::int64_t x) const {
    return ids[static_cast<std::size_t>((z * extents.h + y) * extents.w + x)];
  }
  std::uint8_t& at(std::int64_t z, std::int64_t y, std::int64_t x) {
    return ids[static_cast<std::size_t>((z * extents.h + y) * extents.w + x)];
  }
};

// Nearest-neighbour downsampling: each target voxel takes the source voxel at
// the centre of its block, index i * b + (b - 1) / 2 per axis.
LabelVolume rescale_labels(const LabelVolume& labels, const Extents3& target);

}  // namespace icaunet
