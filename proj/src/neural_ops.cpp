#include "icaunet/neural_ops.hpp"

#include <algorithm>
#include <cmath>

namespace icaunet {

namespace {

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return -floor_div(-a, b); }

// Geometry of a forward convolution: `in` is the convolution input, `out` its
// output. Transposed convolution reuses it with the roles of input and output
// exchanged.
struct ConvGeometry {
  std::int64_t cin = 1, cout = 1, groups = 1;
  Extents3 in, out;
  Triple k{}, s{}, p{};
};

struct AxisRange {
  std::int64_t lo, hi;  // inclusive bounds on the output index
};

AxisRange valid_range(std::int64_t in_extent, std::int64_t out_extent, std::int64_t tap,
                      std::int64_t stride, std::int64_t pad) {
  return {std::max<std::int64_t>(0, ceil_div(pad - tap, stride)),
          std::min<std::int64_t>(out_extent - 1, floor_div(in_extent - 1 + pad - tap, stride))};
}

// Calls row(oc, ic, weight_index, out_row, in_row_base, lo, hi) for every
// (output channel, input channel, tap, output row) whose reads touch the
// input. For ow in [lo, hi] the input element is in_row_base + ow * s_w.
template <typename RowFn>
void for_each_row(const ConvGeometry& g, RowFn&& row) {
  const std::int64_t cin_g = g.cin / g.groups;
  const std::int64_t cout_g = g.cout / g.groups;
  const std::int64_t taps = g.k[0] * g.k[1] * g.k[2];
  const std::int64_t in_plane = g.in.h * g.in.w;
  const std::int64_t out_plane = g.out.h * g.out.w;
  for (std::int64_t oc = 0; oc < g.cout; ++oc) {
    const std::int64_t group = oc / cout_g;
    for (std::int64_t icl = 0; icl < cin_g; ++icl) {
      const std::int64_t ic = group * cin_g + icl;
      const std::int64_t wbase = (oc * cin_g + icl) * taps;
      for (std::int64_t kd = 0; kd < g.k[0]; ++kd) {
        const auto rd = valid_range(g.in.d, g.out.d, kd, g.s[0], g.p[0]);
        for (std::int64_t kh = 0; kh < g.k[1]; ++kh) {
          const auto rh = valid_range(g.in.h, g.out.h, kh, g.s[1], g.p[1]);
          for (std::int64_t kw = 0; kw < g.k[2]; ++kw) {
            const auto rw = valid_range(g.in.w, g.out.w, kw, g.s[2], g.p[2]);
            if (rw.lo > rw.hi) continue;
            const std::int64_t widx = wbase + (kd * g.k[1] + kh) * g.k[2] + kw;
            for (std::int64_t od = rd.lo; od <= rd.hi; ++od) {
              const std::int64_t id = od * g.s[0] + kd - g.p[0];
              for (std::int64_t oh = rh.lo; oh <= rh.hi; ++oh) {
                const std::int64_t ih = oh * g.s[1] + kh - g.p[1];
                const std::int64_t out_row = oc * g.out.voxels() + od * out_plane + oh * g.out.w;
                const std::int64_t in_row = ic * g.in.voxels() + id * in_plane + ih * g.in.w + kw - g.p[2];
                row(oc, ic, widx, out_row, in_row, rw.lo, rw.hi);
              }
            }
          }
        }
      }
    }
  }
}

// out[out_row + ow] += w * in[in_row + ow * sw]
template <typename Real>
void conv_forward_raw(const ConvGeometry& g, const Real* x, const Real* w, Real* y) {
  const std::int64_t sw = g.s[2];
  for_each_row(g, [&](std::int64_t, std::int64_t, std::int64_t widx, std::int64_t out_row,
                      std::int64_t in_row, std::int64_t lo, std::int64_t hi) {
    const Real wv = w[widx];
    Real* yr = y + out_row;
    const Real* xr = x + in_row;
    if (sw == 1) {
      for (std::int64_t ow = lo; ow <= hi; ++ow) yr[ow] += wv * xr[ow];
    } else {
      for (std::int64_t ow = lo; ow <= hi; ++ow) yr[ow] += wv * xr[ow * sw];
    }
  });
}

template <typename Real>
void conv_input_grad_raw(const ConvGeometry& g, const Real* gy, const Real* w, Real* gx) {
  const std::int64_t sw = g.s[2];
  for_each_row(g, [&](std::int64_t, std::int64_t, std::int64_t widx, std::int64_t out_row,
                      std::int64_t in_row, std::int64_t lo, std::int64_t hi) {
    const Real wv = w[widx];
    const Real* gr = gy + out_row;
    Real* xr = gx + in_row;
    if (sw == 1) {
      for (std::int64_t ow = lo; ow <= hi; ++ow) xr[ow] += wv * gr[ow];
    } else {
      for (std::int64_t ow = lo; ow <= hi; ++ow) xr[ow * sw] += wv * gr[ow];
    }
  });
}

template <typename Real>
void conv_weight_grad_raw(const ConvGeometry& g, const Real* x, const Real* gy, Real* gw) {
  const std::int64_t sw = g.s[2];
  for_each_row(g, [&](std::int64_t, std::int64_t, std::int64_t widx, std::int64_t out_row,
                      std::int64_t in_row, std::int64_t lo, std::int64_t hi) {
    const Real* gr = gy + out_row;
    const Real* xr = x + in_row;
    Real acc = Real(0);
    if (sw == 1) {
      for (std::int64_t ow = lo; ow <= hi; ++ow) acc += gr[ow] * xr[ow];
    } else {
      for (std::int64_t ow = lo; ow <= hi; ++ow) acc += gr[ow] * xr[ow * sw];
    }
    gw[widx] += acc;
  });
}

void check_5d(const Shape& s, const char* what) {
  if (s.size() != 5 || s[0] != 1)
    throw ShapeError(std::string(what) + " expects a (1,C,d,h,w) tensor, got " + shape_str(s));
}

void check_weight(const Shape& ws, std::int64_t lead, std::int64_t second, const Triple& k,
                  const char* what) {
  const Shape expect{lead, second, k[0], k[1], k[2]};
  if (ws != expect)
    throw ShapeError(std::string(what) + " weight shape " + shape_str(ws) + ", expected " + shape_str(expect));
}

}  // namespace

Extents3 spatial_extents(const Shape& shape) {
  if (shape.size() < 3) throw ShapeError("spatial_extents of " + shape_str(shape));
  const std::size_t r = shape.size();
  return {shape[r - 3], shape[r - 2], shape[r - 1]};
}

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || groups <= 0)
    throw ShapeError("ConvSpec: channel counts and groups must be positive");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ShapeError("ConvSpec: groups " + std::to_string(groups) + " must divide " +
                     std::to_string(in_channels) + " and " + std::to_string(out_channels));
  for (int a = 0; a < 3; ++a)
    if (kernel[a] <= 0 || stride[a] <= 0 || padding[a] < 0)
      throw ShapeError("ConvSpec: kernel/stride must be positive and padding non-negative");
}

Extents3 ConvSpec::conv_output(const Extents3& in) const {
  validate();
  const Triple dims{in.d, in.h, in.w};
  Triple out{};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t span = dims[a] - kernel[a] + 2 * padding[a];
    if (span < 0 || span % stride[a] != 0)
      throw ShapeError("conv output extent not a positive integer on axis " + std::to_string(a) +
                       ": (" + std::to_string(dims[a]) + " - " + std::to_string(kernel[a]) + " + 2*" +
                       std::to_string(padding[a]) + ")/" + std::to_string(stride[a]) + " + 1");
    out[a] = span / stride[a] + 1;
  }
  return {out[0], out[1], out[2]};
}

Extents3 ConvSpec::transposed_output(const Extents3& in) const {
  validate();
  const Triple dims{in.d, in.h, in.w};
  Triple out{};
  for (int a = 0; a < 3; ++a) {
    out[a] = (dims[a] - 1) * stride[a] + kernel[a] - 2 * padding[a];
    if (out[a] <= 0) throw ShapeError("transposed conv output extent non-positive on axis " + std::to_string(a));
  }
  return {out[0], out[1], out[2]};
}

template <typename Real>
BasicTensor<Real> conv3d(const BasicTensor<Real>& x, const BasicTensor<Real>& weight,
                         const std::optional<BasicTensor<Real>>& bias, const ConvSpec& spec) {
  check_5d(x.shape(), "conv3d");
  if (x.dim(1) != spec.in_channels)
    throw ShapeError("conv3d input has " + std::to_string(x.dim(1)) + " channels, spec says " +
                     std::to_string(spec.in_channels));
  check_weight(weight.shape(), spec.out_channels, spec.in_channels / std::max<std::int64_t>(spec.groups, 1),
               spec.kernel, "conv3d");
  if (bias && bias->shape() != Shape{spec.out_channels})
    throw ShapeError("conv3d bias shape " + shape_str(bias->shape()));

  ConvGeometry g;
  g.cin = spec.in_channels;
  g.cout = spec.out_channels;
  g.groups = spec.groups;
  g.in = spatial_extents(x.shape());
  g.out = spec.conv_output(g.in);
  g.k = spec.kernel;
  g.s = spec.stride;
  g.p = spec.padding;

  const std::int64_t plane = g.out.voxels();
  std::vector<Real> y(static_cast<std::size_t>(g.cout * plane), Real(0));
  if (bias) {
    auto b = bias->data();
    for (std::int64_t oc = 0; oc < g.cout; ++oc)
      std::fill_n(y.begin() + oc * plane, plane, b[static_cast<std::size_t>(oc)]);
  }
  conv_forward_raw(g, x.data().data(), weight.data().data(), y.data());

  std::vector<BasicTensor<Real>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  auto px = x.impl();
  auto pw = weight.impl();
  auto pb = bias ? bias->impl() : nullptr;
  return make_result<Real>(Shape{1, g.cout, g.out.d, g.out.h, g.out.w}, std::move(y), parents, "conv3d",
                           [g, px, pw, pb, plane](const detail::TensorImpl<Real>& o) {
    const Real* gy = o.grad.data();
    if (px->requires_grad) conv_input_grad_raw(g, gy, pw->data.data(), px->ensure_grad().data());
    if (pw->requires_grad) conv_weight_grad_raw(g, px->data.data(), gy, pw->ensure_grad().data());
    if (pb && pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::int64_t oc = 0; oc < g.cout; ++oc) {
        Real acc = Real(0);
        for (std::int64_t i = 0; i < plane; ++i) acc += gy[oc * plane + i];
        gb[static_cast<std::size_t>(oc)] += acc;
      }
    }
  });
}

template <typename Real>
BasicTensor<Real> transposed_conv3d(const BasicTensor<Real>& x, const BasicTensor<Real>& weight,
                                    const ConvSpec& spec, const std::optional<BasicTensor<Real>>& bias) {
  check_5d(x.shape(), "transposed_conv3d");
  if (x.dim(1) != spec.in_channels)
    throw ShapeError("transposed_conv3d input has " + std::to_string(x.dim(1)) + " channels, spec says " +
                     std::to_string(spec.in_channels));
  check_weight(weight.shape(), spec.in_channels, spec.out_channels / std::max<std::int64_t>(spec.groups, 1),
               spec.kernel, "transposed_conv3d");
  if (bias && bias->shape() != Shape{spec.out_channels})
    throw ShapeError("transposed_conv3d bias shape " + shape_str(bias->shape()));

  // Adjoint of a convolution whose output is `x` and whose input is the result.
  ConvGeometry g;
  g.cout = spec.in_channels;
  g.cin = spec.out_channels;
  g.groups = spec.groups;
  g.out = spatial_extents(x.shape());
  g.in = spec.transposed_output(g.out);
  g.k = spec.kernel;
  g.s = spec.stride;
  g.p = spec.padding;

  const std::int64_t plane = g.in.voxels();
  std::vector<Real> y(static_cast<std::size_t>(g.cin * plane), Real(0));
  if (bias) {
    auto b = bias->data();
    for (std::int64_t c = 0; c < g.cin; ++c) std::fill_n(y.begin() + c * plane, plane, b[static_cast<std::size_t>(c)]);
  }
  conv_input_grad_raw(g, x.data().data(), weight.data().data(), y.data());

  std::vector<BasicTensor<Real>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  auto px = x.impl();
  auto pw = weight.impl();
  auto pb = bias ? bias->impl() : nullptr;
  return make_result<Real>(Shape{1, g.cin, g.in.d, g.in.h, g.in.w}, std::move(y), parents,
                           "transposed_conv3d", [g, px, pw, pb, plane](const detail::TensorImpl<Real>& o) {
    const Real* gy = o.grad.data();
    if (px->requires_grad) conv_forward_raw(g, gy, pw->data.data(), px->ensure_grad().data());
    if (pw->requires_grad) conv_weight_grad_raw(g, gy, px->data.data(), pw->ensure_grad().data());
    if (pb && pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::int64_t c = 0; c < g.cin; ++c) {
        Real acc = Real(0);
        for (std::int64_t i = 0; i < plane; ++i) acc += gy[c * plane + i];
        gb[static_cast<std::size_t>(c)] += acc;
      }
    }
  });
}

template <typename Real>
BasicTensor<Real> batch_norm(const BasicTensor<Real>& x, const BasicTensor<Real>& gamma,
                             const BasicTensor<Real>& beta, BatchNormState<Real>& state, bool training,
                             Real eps) {
  if (x.rank() < 2 || x.dim(0) != 1) throw ShapeError("batch_norm expects (1,C,...), got " + shape_str(x.shape()));
  const std::int64_t channels = x.dim(1);
  const Shape cshape{channels};
  if (gamma.shape() != cshape || beta.shape() != cshape || state.running_mean.shape() != cshape ||
      state.running_var.shape() != cshape)
    throw ShapeError("batch_norm channel mismatch: input has " + std::to_string(channels) + " channels");
  if (!(eps > Real(0))) throw NumericsError("batch_norm eps must be positive");

  const std::int64_t n = x.numel() / channels;
  auto xd = x.data();
  std::vector<Real> mu(static_cast<std::size_t>(channels)), inv_std(static_cast<std::size_t>(channels));
  if (training) {
    auto rm = state.running_mean.mutable_data();
    auto rv = state.running_var.mutable_data();
    for (std::int64_t c = 0; c < channels; ++c) {
      const Real* xc = xd.data() + c * n;
      Real m = Real(0);
      for (std::int64_t i = 0; i < n; ++i) m += xc[i];
      m /= static_cast<Real>(n);
      Real v = Real(0);
      for (std::int64_t i = 0; i < n; ++i) v += (xc[i] - m) * (xc[i] - m);
      v /= static_cast<Real>(n);
      mu[static_cast<std::size_t>(c)] = m;
      inv_std[static_cast<std::size_t>(c)] = Real(1) / std::sqrt(v + eps);
      rm[static_cast<std::size_t>(c)] = (Real(1) - state.momentum) * rm[static_cast<std::size_t>(c)] + state.momentum * m;
      rv[static_cast<std::size_t>(c)] = (Real(1) - state.momentum) * rv[static_cast<std::size_t>(c)] + state.momentum * v;
    }
  } else {
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    for (std::int64_t c = 0; c < channels; ++c) {
      mu[static_cast<std::size_t>(c)] = rm[static_cast<std::size_t>(c)];
      inv_std[static_cast<std::size_t>(c)] = Real(1) / std::sqrt(rv[static_cast<std::size_t>(c)] + eps);
    }
  }

  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<Real> xhat(xd.size());
  std::vector<Real> y(xd.size());
  for (std::int64_t c = 0; c < channels; ++c) {
    const auto cs = static_cast<std::size_t>(c);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto idx = static_cast<std::size_t>(c * n + i);
      xhat[idx] = (xd[idx] - mu[cs]) * inv_std[cs];
      y[idx] = gd[cs] * xhat[idx] + bd[cs];
    }
  }

  auto px = x.impl();
  auto pg = gamma.impl();
  auto pb = beta.impl();
  return make_result<Real>(x.shape(), std::move(y), {x, gamma, beta}, "batch_norm",
                           [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), channels, n,
                            training](const detail::TensorImpl<Real>& o) {
    const auto& gy = o.grad;
    for (std::int64_t c = 0; c < channels; ++c) {
      const auto cs = static_cast<std::size_t>(c);
      Real sum_g = Real(0), sum_gx = Real(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(c * n + i);
        sum_g += gy[idx];
        sum_gx += gy[idx] * xhat[idx];
      }
      if (pg->requires_grad) pg->ensure_grad()[cs] += sum_gx;
      if (pb->requires_grad) pb->ensure_grad()[cs] += sum_g;
      if (px->requires_grad) {
        auto& gx = px->ensure_grad();
        const Real scale_c = pg->data[cs] * inv_std[cs];
        if (training) {
          const Real mean_g = sum_g / static_cast<Real>(n);
          const Real mean_gx = sum_gx / static_cast<Real>(n);
          for (std::int64_t i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(c * n + i);
            gx[idx] += scale_c * (gy[idx] - mean_g - xhat[idx] * mean_gx);
          }
        } else {
          for (std::int64_t i = 0; i < n; ++i) {
            const auto idx = static_cast<std::size_t>(c * n + i);
            gx[idx] += scale_c * gy[idx];
          }
        }
      }
    }
  });
}

template <typename Real>
BasicTensor<Real> leaky_relu(const BasicTensor<Real>& x, Real slope) {
  auto xd = x.data();
  std::vector<Real> y(xd.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] >= Real(0) ? xd[i] : slope * xd[i];
  auto px = x.impl();
  return make_result<Real>(x.shape(), std::move(y), {x}, "leaky_relu",
                           [px, slope](const detail::TensorImpl<Real>& o) {
    auto& gx = px->ensure_grad();
    const auto& xv = px->data;
    // Subgradient at exactly zero is taken from the positive branch.
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += xv[i] >= Real(0) ? o.grad[i] : slope * o.grad[i];
  });
}

template <typename Real>
BasicTensor<Real> correlation3d(const BasicTensor<Real>& f1, const BasicTensor<Real>& f2, const CorrSpec& spec) {
  check_5d(f1.shape(), "correlation3d");
  if (f1.shape() != f2.shape())
    throw ShapeError("correlation3d shape mismatch " + shape_str(f1.shape()) + " vs " + shape_str(f2.shape()));
  if (spec.max_disp < 0) throw ShapeError("correlation3d: negative displacement radius");
  const std::int64_t channels = f1.dim(1);
  const Extents3 e = spatial_extents(f1.shape());
  const std::int64_t radius = spec.max_disp;
  const std::int64_t span = 2 * radius + 1;
  const std::int64_t vox = e.voxels();
  const Real inv_c = Real(1) / static_cast<Real>(channels);

  // Visits every in-bounds (displacement, voxel) pair as a row segment:
  // fn(q, c_offset_a, c_offset_b, x_lo, x_hi) with a = out/f1 row, b = f2 row.
  auto for_each_segment = [=](auto&& fn) {
    for (std::int64_t dh = -radius; dh <= radius; ++dh) {
      for (std::int64_t dw = -radius; dw <= radius; ++dw) {
        const std::int64_t q = (dh + radius) * span + (dw + radius);
        const std::int64_t x_lo = std::max<std::int64_t>(0, -dw);
        const std::int64_t x_hi = std::min<std::int64_t>(e.w, e.w - dw);
        if (x_lo >= x_hi) continue;
        for (std::int64_t z = 0; z < e.d; ++z) {
          for (std::int64_t y = 0; y < e.h; ++y) {
            const std::int64_t y2 = y + dh;
            if (y2 < 0 || y2 >= e.h) continue;
            const std::int64_t row_a = (z * e.h + y) * e.w;
            const std::int64_t row_b = (z * e.h + y2) * e.w + dw;
            fn(q, row_a, row_b, x_lo, x_hi);
          }
        }
      }
    }
  };

  const std::int64_t out_channels = spec.channels();
  std::vector<Real> out(static_cast<std::size_t>(out_channels * vox), Real(0));
  const Real* a = f1.data().data();
  const Real* b = f2.data().data();
  for_each_segment([&](std::int64_t q, std::int64_t row_a, std::int64_t row_b, std::int64_t lo, std::int64_t hi) {
    Real* o = out.data() + q * vox + row_a;
    for (std::int64_t c = 0; c < channels; ++c) {
      const Real* ar = a + c * vox + row_a;
      const Real* br = b + c * vox + row_b;
      for (std::int64_t x = lo; x < hi; ++x) o[x] += ar[x] * br[x];
    }
    for (std::int64_t x = lo; x < hi; ++x) o[x] *= inv_c;
  });

  auto p1 = f1.impl();
  auto p2 = f2.impl();
  return make_result<Real>(Shape{1, out_channels, e.d, e.h, e.w}, std::move(out), {f1, f2}, "correlation3d",
                           [p1, p2, for_each_segment, channels, vox, inv_c](const detail::TensorImpl<Real>& o) {
    const Real* a = p1->data.data();
    const Real* b = p2->data.data();
    Real* ga = p1->requires_grad ? p1->ensure_grad().data() : nullptr;
    Real* gb = p2->requires_grad ? p2->ensure_grad().data() : nullptr;
    for_each_segment([&](std::int64_t q, std::int64_t row_a, std::int64_t row_b, std::int64_t lo, std::int64_t hi) {
      const Real* g = o.grad.data() + q * vox + row_a;
      for (std::int64_t c = 0; c < channels; ++c) {
        const std::int64_t oa = c * vox + row_a;
        const std::int64_t ob = c * vox + row_b;
        if (ga)
          for (std::int64_t x = lo; x < hi; ++x) ga[oa + x] += g[x] * inv_c * b[ob + x];
        if (gb)
          for (std::int64_t x = lo; x < hi; ++x) gb[ob + x] += g[x] * inv_c * a[oa + x];
      }
    });
  });
}

LabelVolume rescale_labels(const LabelVolume& labels, const Extents3& target) {
  const Extents3& src = labels.extents;
  if (target.d <= 0 || target.h <= 0 || target.w <= 0 || src.d % target.d || src.h % target.h ||
      src.w % target.w)
    throw ShapeError("rescale_labels: target extents must divide the source extents");
  const std::int64_t bd = src.d / target.d, bh = src.h / target.h, bw = src.w / target.w;
  LabelVolume out(target);
  for (std::int64_t z = 0; z < target.d; ++z)
    for (std::int64_t y = 0; y < target.h; ++y)
      for (std::int64_t x = 0; x < target.w; ++x)
        out.at(z, y, x) = labels.at(z * bd + (bd - 1) / 2, y * bh + (bh - 1) / 2, x * bw + (bw - 1) / 2);
  return out;
}

#define ICAUNET_INSTANTIATE(Real)                                                                             \
  template BasicTensor<Real> conv3d<Real>(const BasicTensor<Real>&, const BasicTensor<Real>&,                 \
                                          const std::optional<BasicTensor<Real>>&, const ConvSpec&);          \
  template BasicTensor<Real> transposed_conv3d<Real>(const BasicTensor<Real>&, const BasicTensor<Real>&,      \
                                                     const ConvSpec&, const std::optional<BasicTensor<Real>>&); \
  template BasicTensor<Real> batch_norm<Real>(const BasicTensor<Real>&, const BasicTensor<Real>&,             \
                                              const BasicTensor<Real>&, BatchNormState<Real>&, bool, Real);   \
  template BasicTensor<Real> leaky_relu<Real>(const BasicTensor<Real>&, Real);                                \
  template BasicTensor<Real> correlation3d<Real>(const BasicTensor<Real>&, const BasicTensor<Real>&, const CorrSpec&);

ICAUNET_INSTANTIATE(float)
ICAUNET_INSTANTIATE(double)

#undef ICAUNET_INSTANTIATE

}  // namespace icaunet
