#include "icaunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "icaunet/ica.hpp"
#include "icaunet/ops.hpp"

namespace icaunet {

LossWeights LossWeights::defaults(std::int64_t n) {
  LossWeights w;
  w.alpha_k.assign(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)), 0.1);
  if (n > 0) w.alpha_k.back() = 1.0;
  return w;
}

void LossWeights::validate(std::int64_t n) const {
  if (lambda_s < 0 || lambda_i < 0 || lambda_r < 0 || beta < 0)
    throw ConfigError("loss weights must be non-negative");
  if (!(alpha_neg > 0)) throw ConfigError("alpha_neg must be positive");
  if (static_cast<std::int64_t>(alpha_k.size()) != n)
    throw ConfigError("alpha_k needs " + std::to_string(n) + " entries, got " + std::to_string(alpha_k.size()));
  for (double a : alpha_k)
    if (a < 0) throw ConfigError("alpha_k entries must be non-negative");
}

template <typename Real>
MixFn<Real> reconstruction_operator(const ModelConfig& config) {
  const ConvSpec spec = mixing_spec(config, config.n);
  const Extents3 be = config.basis_extents();
  const Shape kernel{config.m, config.u, be.d, be.h, be.w};
  return [spec, kernel](const BasicTensor<Real>& a, const BasicTensor<Real>& x) {
    return channel_mean(transposed_conv3d(a, reshape(x, kernel), spec));
  };
}

template <typename Real>
IcaLoss<Real> loss_ica(const BasicTensor<Real>& mixing, const BasicTensor<Real>& basis,
                       const BasicTensor<Real>& frame, const LossWeights& w, const MixFn<Real>& mix) {
  IcaLoss<Real> out;
  const auto recon = mix(mixing, basis);
  if (recon.shape() != frame.shape())
    throw ShapeError("loss_ica: reconstruction " + shape_str(recon.shape()) + " vs frame " + shape_str(frame.shape()));
  out.sparsity = reduce(ReduceOp::l1, basis);
  out.independence = ica::negentropy_term(basis, static_cast<Real>(w.alpha_neg));
  out.reconstruction = reduce(ReduceOp::l2_squared, sub(recon, frame));
  out.total = add(add(scale(out.sparsity, static_cast<Real>(w.lambda_s)),
                      scale(out.independence, static_cast<Real>(w.lambda_i))),
                  scale(out.reconstruction, static_cast<Real>(w.lambda_r)));
  return out;
}

template <typename Real>
BasicTensor<Real> cross_entropy(const BasicTensor<Real>& logits, const LabelVolume& labels) {
  if (logits.rank() != 5 || logits.dim(0) != 1)
    throw ShapeError("cross_entropy expects (1,C,d,h,w) logits, got " + shape_str(logits.shape()));
  const std::int64_t classes = logits.dim(1);
  const Extents3 e = spatial_extents(logits.shape());
  if (!(e == labels.extents)) throw ShapeError("cross_entropy: label extents differ from logits");
  const std::int64_t voxels = e.voxels();
  for (auto id : labels.ids)
    if (id >= classes)
      throw DataError("cross_entropy: label " + std::to_string(id) + " outside [0, " + std::to_string(classes) + ")");

  // Softmax is kept for the backward pass: d/dz = (softmax - onehot) / N.
  auto z = logits.data();
  auto probs = std::make_shared<std::vector<Real>>(z.size());
  double total = 0.0;
  for (std::int64_t v = 0; v < voxels; ++v) {
    Real top = z[static_cast<std::size_t>(v)];
    for (std::int64_t c = 1; c < classes; ++c) top = std::max(top, z[static_cast<std::size_t>(c * voxels + v)]);
    Real denom = Real(0);
    for (std::int64_t c = 0; c < classes; ++c) {
      const auto i = static_cast<std::size_t>(c * voxels + v);
      (*probs)[i] = std::exp(z[i] - top);
      denom += (*probs)[i];
    }
    for (std::int64_t c = 0; c < classes; ++c) (*probs)[static_cast<std::size_t>(c * voxels + v)] /= denom;
    const auto label = labels.ids[static_cast<std::size_t>(v)];
    total += static_cast<double>(std::log(denom) + top - z[static_cast<std::size_t>(label * voxels + v)]);
  }
  const Real value = static_cast<Real>(total / static_cast<double>(voxels));
  auto ids = std::make_shared<std::vector<std::uint8_t>>(labels.ids);
  auto src = logits.impl();
  return make_result<Real>(Shape{}, {value}, {logits}, "cross_entropy",
                           [src, probs, ids, voxels, classes](const detail::TensorImpl<Real>& out) {
                             if (!src->requires_grad) return;
                             auto& g = src->ensure_grad();
                             const Real go = out.grad[0] / static_cast<Real>(voxels);
                             for (std::int64_t c = 0; c < classes; ++c)
                               for (std::int64_t v = 0; v < voxels; ++v) {
                                 const auto i = static_cast<std::size_t>(c * voxels + v);
                                 const Real hot = (*ids)[static_cast<std::size_t>(v)] == c ? Real(1) : Real(0);
                                 g[i] += go * ((*probs)[i] - hot);
                               }
                           });
}

template <typename Real>
TotalLoss<Real> loss_total(const ModelOutputs<Real>& outputs, const LabelVolume& gt, const LossWeights& w,
                           const BasicTensor<Real>& frame, const MixFn<Real>& mix) {
  const auto n = static_cast<std::int64_t>(outputs.logits.size());
  w.validate(n);
  TotalLoss<Real> out;
  out.ica = loss_ica(outputs.mixing, outputs.basis, frame, w, mix);
  BasicTensor<Real> total = scale(out.ica.total, static_cast<Real>(w.beta));
  for (std::int64_t k = 0; k < n; ++k) {
    const auto& logits = outputs.logits[static_cast<std::size_t>(k)];
    const Extents3 e = spatial_extents(logits.shape());
    const LabelVolume target = e == gt.extents ? gt : rescale_labels(gt, e);
    out.cross_entropy.push_back(cross_entropy(logits, target));
    total = add(total, scale(out.cross_entropy.back(), static_cast<Real>(w.alpha_k[static_cast<std::size_t>(k)])));
  }
  out.total = total;
  return out;
}

template <typename Real>
LabelVolume predict_labels(const BasicTensor<Real>& logits) {
  if (logits.rank() != 5 || logits.dim(0) != 1)
    throw ShapeError("predict_labels expects (1,C,d,h,w), got " + shape_str(logits.shape()));
  const std::int64_t classes = logits.dim(1);
  if (classes > 256) throw ShapeError("predict_labels: too many classes for u8 labels");
  LabelVolume out(spatial_extents(logits.shape()));
  const std::int64_t voxels = out.extents.voxels();
  auto z = logits.data();
  for (std::int64_t v = 0; v < voxels; ++v) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < classes; ++c)
      if (z[static_cast<std::size_t>(c * voxels + v)] > z[static_cast<std::size_t>(best * voxels + v)]) best = c;
    out.ids[static_cast<std::size_t>(v)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

double dice_score(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t cls) {
  if (!(pred.extents == gt.extents)) throw ShapeError("dice_score: extents differ");
  std::int64_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.ids.size(); ++i) {
    const bool in_p = pred.ids[i] == cls, in_g = gt.ids[i] == cls;
    p += in_p;
    g += in_g;
    both += in_p && in_g;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

std::vector<Voxel> class_voxels(const LabelVolume& labels, std::uint8_t cls) {
  std::vector<Voxel> out;
  const auto& e = labels.extents;
  for (std::int64_t z = 0; z < e.d; ++z)
    for (std::int64_t y = 0; y < e.h; ++y)
      for (std::int64_t x = 0; x < e.w; ++x)
        if (labels.at(z, y, x) == cls) out.push_back({z, y, x});
  return out;
}

namespace {

// max over a of min over b, with the inner scan stopped as soon as it cannot
// raise the running maximum.
double directed_hausdorff_sq(const std::vector<Voxel>& a, const std::vector<Voxel>& b, const Spacing& s) {
  double worst = 0.0;
  for (const auto& p : a) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& q : b) {
      const double dz = static_cast<double>(p[0] - q[0]) * s[0];
      const double dy = static_cast<double>(p[1] - q[1]) * s[1];
      const double dx = static_cast<double>(p[2] - q[2]) * s[2];
      nearest = std::min(nearest, dz * dz + dy * dy + dx * dx);
      if (nearest <= worst) break;
    }
    worst = std::max(worst, nearest);
  }
  return worst;
}

}  // namespace

double hausdorff(const std::vector<Voxel>& a, const std::vector<Voxel>& b, const Spacing& spacing) {
  if (a.empty() || b.empty()) throw MetricUndefined("hausdorff distance of an empty voxel set");
  return std::sqrt(std::max(directed_hausdorff_sq(a, b, spacing), directed_hausdorff_sq(b, a, spacing)));
}

std::vector<ClassMetrics> evaluate_frame(const LabelVolume& pred, const LabelVolume& gt, const Spacing& spacing,
                                         std::int64_t num_classes) {
  std::vector<ClassMetrics> out;
  for (std::int64_t c = 1; c < num_classes; ++c) {
    ClassMetrics m;
    m.cls = static_cast<std::uint8_t>(c);
    m.dice = dice_score(pred, gt, m.cls);
    try {
      m.hausdorff_mm = hausdorff(class_voxels(pred, m.cls), class_voxels(gt, m.cls), spacing);
      m.hausdorff_defined = true;
    } catch (const MetricUndefined&) {
      m.hausdorff_defined = false;
    }
    out.push_back(m);
  }
  return out;
}

std::string metrics_csv_header() { return "frame_index,class,dice,hausdorff_mm\n"; }

std::string metrics_csv_rows(std::int64_t frame_index, const std::vector<ClassMetrics>& metrics) {
  std::ostringstream o;
  o.precision(6);
  o << std::fixed;
  for (const auto& m : metrics) {
    o << frame_index << ',' << static_cast<int>(m.cls) << ',' << m.dice << ',';
    if (m.hausdorff_defined)
      o << m.hausdorff_mm;
    else
      o << "NA";
    o << '\n';
  }
  return o.str();
}

#define ICAUNET_INSTANTIATE(R)                                                                                \
  template MixFn<R> reconstruction_operator<R>(const ModelConfig&);                                           \
  template IcaLoss<R> loss_ica<R>(const BasicTensor<R>&, const BasicTensor<R>&, const BasicTensor<R>&,       \
                                  const LossWeights&, const MixFn<R>&);                                       \
  template BasicTensor<R> cross_entropy<R>(const BasicTensor<R>&, const LabelVolume&);                        \
  template TotalLoss<R> loss_total<R>(const ModelOutputs<R>&, const LabelVolume&, const LossWeights&,         \
                                      const BasicTensor<R>&, const MixFn<R>&);                                \
  template LabelVolume predict_labels<R>(const BasicTensor<R>&);

ICAUNET_INSTANTIATE(float)
ICAUNET_INSTANTIATE(double)
#undef ICAUNET_INSTANTIATE

}  // namespace icaunet
