#include "icaunet/ica.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <random>

#include "icaunet/ops.hpp"

namespace icaunet::ica {

PatchMatrix extract_patches(const Tensor64& image, const Extents3& patch, std::int64_t stride) {
  if (image.rank() != 3) throw ShapeError("extract_patches expects a (d,h,w) volume, got " + shape_str(image.shape()));
  if (stride < 1) throw ShapeError("extract_patches: stride must be >= 1");
  const Extents3 src{image.dim(0), image.dim(1), image.dim(2)};
  if (patch.d < 1 || patch.h < 1 || patch.w < 1 || patch.d > src.d || patch.h > src.h || patch.w > src.w)
    throw ShapeError("extract_patches: patch larger than image");
  const std::int64_t nd = (src.d - patch.d) / stride + 1;
  const std::int64_t nh = (src.h - patch.h) / stride + 1;
  const std::int64_t nw = (src.w - patch.w) / stride + 1;

  PatchMatrix out;
  out.patch = patch;
  out.stride = stride;
  out.source = src;
  out.rows.resize(nd * nh * nw, patch.voxels());
  auto v = image.data();
  std::int64_t r = 0;
  for (std::int64_t pz = 0; pz < nd; ++pz)
    for (std::int64_t py = 0; py < nh; ++py)
      for (std::int64_t px = 0; px < nw; ++px, ++r) {
        std::int64_t col = 0;
        for (std::int64_t z = 0; z < patch.d; ++z)
          for (std::int64_t y = 0; y < patch.h; ++y)
            for (std::int64_t x = 0; x < patch.w; ++x, ++col) {
              const std::int64_t sz = pz * stride + z, sy = py * stride + y, sx = px * stride + x;
              out.rows(r, col) = v[static_cast<std::size_t>((sz * src.h + sy) * src.w + sx)];
            }
      }
  return out;
}

Tensor64 assemble_patches(const PatchMatrix& p) {
  const Extents3& src = p.source;
  const std::int64_t nd = (src.d - p.patch.d) / p.stride + 1;
  const std::int64_t nh = (src.h - p.patch.h) / p.stride + 1;
  const std::int64_t nw = (src.w - p.patch.w) / p.stride + 1;
  if (p.rows.rows() != nd * nh * nw || p.rows.cols() != p.patch.voxels())
    throw ShapeError("assemble_patches: patch matrix does not match its geometry");
  Tensor64 out(Shape{src.d, src.h, src.w}, 0.0);
  std::vector<double> counts(static_cast<std::size_t>(src.voxels()), 0.0);
  auto v = out.mutable_data();
  std::int64_t r = 0;
  for (std::int64_t pz = 0; pz < nd; ++pz)
    for (std::int64_t py = 0; py < nh; ++py)
      for (std::int64_t px = 0; px < nw; ++px, ++r) {
        std::int64_t col = 0;
        for (std::int64_t z = 0; z < p.patch.d; ++z)
          for (std::int64_t y = 0; y < p.patch.h; ++y)
            for (std::int64_t x = 0; x < p.patch.w; ++x, ++col) {
              const auto idx = static_cast<std::size_t>(((pz * p.stride + z) * src.h + py * p.stride + y) * src.w +
                                                        px * p.stride + x);
              v[idx] += p.rows(r, col);
              counts[idx] += 1.0;
            }
      }
  for (std::size_t i = 0; i < counts.size(); ++i)
    if (counts[i] > 0) v[i] /= counts[i];
  return out;
}

Whitening whiten(const Eigen::MatrixXd& data, std::optional<std::int64_t> max_components, double rank_tol) {
  if (data.rows() < 2 || data.cols() < 1) throw ShapeError("whiten: need at least two samples");
  Whitening out;
  out.mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - out.mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(data.rows());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericsError("whiten: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double largest = std::max(values(0), 0.0);
  std::int64_t keep = 0;
  while (keep < values.size() && values(keep) > rank_tol * largest && values(keep) > 0.0) ++keep;
  if (max_components) keep = std::min(keep, *max_components);
  if (keep < 1) throw NumericsError("whiten: data has no variance");

  out.dropped = data.cols() - keep;
  out.K.resize(keep, data.cols());
  for (std::int64_t i = 0; i < keep; ++i) out.K.row(i) = vectors.col(i).transpose() / std::sqrt(values(i));
  out.white = centered * out.K.transpose();
  return out;
}

namespace {

// (W W^T)^{-1/2} W
Eigen::MatrixXd symmetric_decorrelation(const Eigen::MatrixXd& w) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(w * w.transpose());
  const Eigen::VectorXd inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
  return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

}  // namespace

FastIcaResult fastica(const Eigen::MatrixXd& white, std::int64_t components, const FastIcaOptions& options) {
  const std::int64_t dims = white.cols();
  if (components < 1 || components > dims)
    throw ShapeError("fastica: components must be in [1, " + std::to_string(dims) + "]");
  const double n = static_cast<double>(white.rows());

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd w(components, dims);
  for (std::int64_t i = 0; i < components; ++i)
    for (std::int64_t j = 0; j < dims; ++j) w(i, j) = normal(rng);
  w = symmetric_decorrelation(w);

  FastIcaResult result;
  const Eigen::MatrixXd xt = white.transpose();  // dims x samples
  for (int it = 1; it <= options.max_iter; ++it) {
    const Eigen::MatrixXd proj = w * xt;  // components x samples
    const Eigen::MatrixXd g = proj.array().tanh().matrix();
    const Eigen::VectorXd g_prime_mean = (1.0 - g.array().square()).rowwise().mean();
    Eigen::MatrixXd next = (g * white) / n - g_prime_mean.asDiagonal() * w;
    next = symmetric_decorrelation(next);
    const double agreement = (next * w.transpose()).diagonal().cwiseAbs().minCoeff();
    w = std::move(next);
    result.iterations = it;
    if (agreement > 1.0 - options.tol) {
      result.converged = true;
      break;
    }
  }
  result.W = std::move(w);
  return result;
}

IcaModel fit(const Eigen::MatrixXd& data, std::int64_t components, const FastIcaOptions& options) {
  if (components < 1) throw ShapeError("ica::fit: components must be positive");
  Whitening wh = whiten(data, components);
  const std::int64_t m = wh.K.rows();
  FastIcaResult ica = fastica(wh.white, m, options);

  IcaModel model;
  model.mean = std::move(wh.mean);
  model.K = std::move(wh.K);
  model.W = std::move(ica.W);
  model.components = m;
  model.requested_components = components;
  model.dropped = wh.dropped;
  model.iterations = ica.iterations;
  model.converged = ica.converged;
  model.A = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(model.unmixing()).pseudoInverse();
  return model;
}

Eigen::MatrixXd unmix(const IcaModel& model, const Eigen::MatrixXd& data) {
  if (data.cols() != model.mean.size()) throw ShapeError("ica::unmix: patch length mismatch");
  return (data.rowwise() - model.mean) * model.unmixing().transpose();
}

Eigen::MatrixXd reconstruct(const IcaModel& model, const Eigen::MatrixXd& components) {
  if (components.cols() != model.A.cols())
    throw ShapeError("ica::reconstruct: expected " + std::to_string(model.A.cols()) + " components, got " +
                     std::to_string(components.cols()));
  return (components * model.A.transpose()).rowwise() + model.mean;
}

double relative_error(const Eigen::MatrixXd& reference, const Eigen::MatrixXd& approx) {
  if (reference.rows() != approx.rows() || reference.cols() != approx.cols())
    throw ShapeError("relative_error: dimension mismatch");
  const double denom = reference.norm();
  return denom > 0 ? (reference - approx).norm() / denom : (reference - approx).norm();
}

std::vector<ComponentMatch> match_components(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth) {
  if (estimated.rows() != truth.rows()) throw ShapeError("match_components: sample counts differ");
  auto standardize = [](const Eigen::MatrixXd& m) {
    Eigen::MatrixXd c = m.rowwise() - m.colwise().mean();
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      const double norm = c.col(j).norm();
      if (norm > 0) c.col(j) /= norm;
    }
    return c;
  };
  const Eigen::MatrixXd corr = (standardize(estimated).transpose() * standardize(truth)).cwiseAbs();
  std::vector<bool> used_e(static_cast<std::size_t>(corr.rows()), false), used_t(static_cast<std::size_t>(corr.cols()), false);
  std::vector<ComponentMatch> matches;
  const auto pairs = std::min(corr.rows(), corr.cols());
  for (Eigen::Index k = 0; k < pairs; ++k) {
    ComponentMatch best{-1, -1, -1.0};
    for (Eigen::Index i = 0; i < corr.rows(); ++i) {
      if (used_e[static_cast<std::size_t>(i)]) continue;
      for (Eigen::Index j = 0; j < corr.cols(); ++j)
        if (!used_t[static_cast<std::size_t>(j)] && corr(i, j) > best.abs_correlation) best = {i, j, corr(i, j)};
    }
    used_e[static_cast<std::size_t>(best.estimated)] = true;
    used_t[static_cast<std::size_t>(best.truth)] = true;
    matches.push_back(best);
  }
  return matches;
}

template <typename Real>
BasicTensor<Real> negentropy_term(const BasicTensor<Real>& x, Real alpha) {
  return mean(scale(log_cosh(scale(x, Real(1) / alpha)), -alpha));
}

template BasicTensor<float> negentropy_term<float>(const BasicTensor<float>&, float);
template BasicTensor<double> negentropy_term<double>(const BasicTensor<double>&, double);

}  // namespace icaunet::ica
