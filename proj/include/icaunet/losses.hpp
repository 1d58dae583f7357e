#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icaunet/model.hpp"
#include "icaunet/neural_ops.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet {

struct LossWeights {
  double lambda_s = 1.0;  // sparsity (L1 of X)
  double lambda_i = 1.0;  // independence (log-cosh negentropy surrogate)
  double lambda_r = 1.0;  // reconstruction (squared L2)
  double alpha_neg = 0.75;
  std::vector<double> alpha_k;  // per output level 1..n
  double beta = 0.2;

  // 0.1 for every level below n and 1.0 at level n.
  static LossWeights defaults(std::int64_t n);
  // ConfigError on negative weights, non-positive alpha_neg or wrong length.
  void validate(std::int64_t n) const;
};

template <typename Real>
using MixFn = std::function<BasicTensor<Real>(const BasicTensor<Real>& mixing, const BasicTensor<Real>& basis)>;

// Full-resolution mixing of A_n with X followed by a channel mean, giving a
// (1,1,d,h,w) reconstruction of the frame.
template <typename Real>
MixFn<Real> reconstruction_operator(const ModelConfig& config);

template <typename Real>
struct IcaLoss {
  BasicTensor<Real> sparsity;        // L1(X)
  BasicTensor<Real> independence;    // mean(-alpha log cosh(X / alpha))
  BasicTensor<Real> reconstruction;  // ||mix(A, X) - F||^2
  BasicTensor<Real> total;
};

template <typename Real>
IcaLoss<Real> loss_ica(const BasicTensor<Real>& mixing, const BasicTensor<Real>& basis,
                       const BasicTensor<Real>& frame, const LossWeights& w, const MixFn<Real>& mix);

// Mean over voxels of -log softmax(logits)[label]; logits are (1,C,d,h,w).
// DataError for labels outside [0, C), ShapeError for extent mismatch.
template <typename Real>
BasicTensor<Real> cross_entropy(const BasicTensor<Real>& logits, const LabelVolume& labels);

template <typename Real>
struct TotalLoss {
  BasicTensor<Real> total;
  std::vector<BasicTensor<Real>> cross_entropy;  // level k at index k-1, unweighted
  IcaLoss<Real> ica;
};

// sum_k alpha_k CE(y'_k, rescale(gt, k)) + beta L_ICA.
template <typename Real>
TotalLoss<Real> loss_total(const ModelOutputs<Real>& outputs, const LabelVolume& gt, const LossWeights& w,
                           const BasicTensor<Real>& frame, const MixFn<Real>& mix);

// Argmax over the channel axis of (1,C,d,h,w) logits; ties go to the lower
// class.
template <typename Real>
LabelVolume predict_labels(const BasicTensor<Real>& logits);

// 2|P n G| / (|P| + |G|) over voxels of class `cls`; 1 when both are empty.
double dice_score(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls);

using Voxel = std::array<std::int64_t, 3>;  // (z, y, x)
using Spacing = std::array<double, 3>;      // mm per (z, y, x)

std::vector<Voxel> class_voxels(const LabelVolume& labels, std::uint8_t cls);

// Symmetric Hausdorff distance in mm. MetricUndefined if either set is empty.
double hausdorff(const std::vector<Voxel>& a, const std::vector<Voxel>& b, const Spacing& spacing);

struct ClassMetrics {
  std::uint8_t cls = 0;
  double dice = 0.0;
  double hausdorff_mm = 0.0;
  bool hausdorff_defined = false;
};

// Foreground classes 1..num_classes-1.
std::vector<ClassMetrics> evaluate_frame(const LabelVolume& pred, const LabelVolume& gt, const Spacing& spacing,
                                         std::int64_t num_classes = 4);

// `frame_index,class,dice,hausdorff_mm` rows; an undefined distance is "NA".
std::string metrics_csv_header();
std::string metrics_csv_rows(std::int64_t frame_index, const std::vector<ClassMetrics>& metrics);

}  // namespace icaunet
