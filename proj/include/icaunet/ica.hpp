#pragma once

// Patch-based FastICA. Rows of a patch matrix are flattened image patches;
// the fitted model maps a patch to m component values (unmixing) and back
// (mixing), with the mixing matrix the pseudo-inverse of the composite
// unmixing transform W * K.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "icaunet/neural_ops.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet::ica {

struct PatchMatrix {
  Eigen::MatrixXd rows;  // num_patches x patch_len
  Extents3 patch;
  std::int64_t stride = 1;
  Extents3 source;
};

// Scan order is z-major, then y, then x over patch origins.
PatchMatrix extract_patches(const Tensor64& image, const Extents3& patch, std::int64_t stride);

// Inverse of extract_patches: overlapping contributions are averaged, voxels
// covered by no patch are zero.
Tensor64 assemble_patches(const PatchMatrix& patches);

struct Whitening {
  Eigen::RowVectorXd mean;  // per column
  Eigen::MatrixXd K;        // r x patch_len, rows scaled eigenvectors
  Eigen::MatrixXd white;    // num_patches x r
  std::int64_t dropped = 0; // directions removed (zero variance or truncation)
};

// PCA whitening with population covariance. Directions whose eigenvalue is
// below rank_tol * largest are dropped; at most `max_components` are kept.
Whitening whiten(const Eigen::MatrixXd& data, std::optional<std::int64_t> max_components = std::nullopt,
                 double rank_tol = 1e-10);

struct FastIcaOptions {
  double tol = 1e-5;
  int max_iter = 500;
  std::uint64_t seed = 0;
};

struct FastIcaResult {
  Eigen::MatrixXd W;  // m x r, orthonormal rows
  int iterations = 0;
  bool converged = false;
};

// Symmetric fixed-point FastICA with g(u) = tanh(u) on whitened samples
// (rows). Converged when min_i |<w_i_new, w_i_old>| > 1 - tol.
FastIcaResult fastica(const Eigen::MatrixXd& white, std::int64_t components, const FastIcaOptions& options = {});

struct IcaModel {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd K;  // whitening, m x patch_len
  Eigen::MatrixXd W;  // unmixing in whitened space, m x m
  Eigen::MatrixXd A;  // mixing, patch_len x m
  std::int64_t components = 0;
  std::int64_t requested_components = 0;
  std::int64_t dropped = 0;
  int iterations = 0;
  bool converged = false;

  Eigen::MatrixXd unmixing() const { return W * K; }
};

// whiten (reduced to `components`) -> fastica -> pseudo-inverse.
IcaModel fit(const Eigen::MatrixXd& data, std::int64_t components, const FastIcaOptions& options = {});

// Component realizations, num_patches x m.
Eigen::MatrixXd unmix(const IcaModel& model, const Eigen::MatrixXd& data);

// A * X + mean, returned row-wise (num_patches x patch_len).
Eigen::MatrixXd reconstruct(const IcaModel& model, const Eigen::MatrixXd& components);

// ||a - b||_F / ||a||_F
double relative_error(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& approx);

struct ComponentMatch {
  std::int64_t estimated = 0;
  std::int64_t truth = 0;
  double abs_correlation = 0.0;
};

// Greedy maximum-|Pearson correlation| pairing between the columns of two
// sample matrices; resolves ICA's permutation and sign ambiguity.
std::vector<ComponentMatch> match_components(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth);

// Independence term of the encoder objective: mean(-alpha * log cosh(X / alpha)).
template <typename Real>
BasicTensor<Real> negentropy_term(const BasicTensor<Real>& x, Real alpha = Real(0.75));

}  // namespace icaunet::ica
