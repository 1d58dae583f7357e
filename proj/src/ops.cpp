#include "icaunet/ops.hpp"

#include <cmath>

namespace icaunet {

namespace {

template <typename Real>
Real stable_log_cosh(Real x) {
  const Real ax = std::abs(x);
  return ax + std::log1p(std::exp(Real(-2) * ax)) - std::log(Real(2));
}

bool is_binary(ElementwiseOp op) {
  return op == ElementwiseOp::add || op == ElementwiseOp::sub || op == ElementwiseOp::mul ||
         op == ElementwiseOp::div;
}

template <typename Real>
Real sign_or_zero(Real x) {
  return x > Real(0) ? Real(1) : (x < Real(0) ? Real(-1) : Real(0));
}

std::int64_t channel_count(const Shape& s) {
  if (s.size() < 2) throw ShapeError("channel op needs rank >= 2, got " + shape_str(s));
  if (s[0] != 1) throw ShapeError("channel op expects batch 1, got " + shape_str(s));
  return s[1];
}

std::int64_t inner_size(const Shape& s) {
  std::int64_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  if (!is_binary(op)) return elementwise(op, a, Real(0));
  if (a.shape() != b.shape())
    throw ShapeError("elementwise shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto x = a.data();
  auto y = b.data();
  std::vector<Real> out(x.size());
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
      break;
    case ElementwiseOp::div:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (y[i] == Real(0)) throw NumericsError("elementwise div by zero at element " + std::to_string(i));
        out[i] = x[i] / y[i];
      }
      break;
    default:
      break;
  }
  auto pa = a.impl();
  auto pb = b.impl();
  return make_result<Real>(a.shape(), std::move(out), {a, b}, "elementwise",
                           [op, pa, pb](const detail::TensorImpl<Real>& o) {
    const auto& g = o.grad;
    const auto& xa = pa->data;
    const auto& xb = pb->data;
    if (pa->requires_grad) {
      auto& ga = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case ElementwiseOp::add:
          case ElementwiseOp::sub: ga[i] += g[i]; break;
          case ElementwiseOp::mul: ga[i] += g[i] * xb[i]; break;
          case ElementwiseOp::div: ga[i] += g[i] / xb[i]; break;
          default: break;
        }
      }
    }
    if (pb->requires_grad) {
      auto& gb = pb->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        switch (op) {
          case ElementwiseOp::add: gb[i] += g[i]; break;
          case ElementwiseOp::sub: gb[i] -= g[i]; break;
          case ElementwiseOp::mul: gb[i] += g[i] * xa[i]; break;
          case ElementwiseOp::div: gb[i] -= g[i] * xa[i] / (xb[i] * xb[i]); break;
          default: break;
        }
      }
    }
  });
}

template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, Real b) {
  auto x = a.data();
  std::vector<Real> out(x.size());
  // d out / d x for the linear cases.
  Real slope = Real(1);
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b;
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - b;
      break;
    case ElementwiseOp::mul:
    case ElementwiseOp::scale:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * b;
      slope = b;
      break;
    case ElementwiseOp::div:
      if (b == Real(0)) throw NumericsError("elementwise div by zero scalar");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / b;
      slope = Real(1) / b;
      break;
    case ElementwiseOp::abs:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x[i]);
      break;
    case ElementwiseOp::log_cosh:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_log_cosh(x[i]);
      break;
  }
  auto pa = a.impl();
  return make_result<Real>(a.shape(), std::move(out), {a}, "elementwise_scalar",
                           [op, pa, slope](const detail::TensorImpl<Real>& o) {
    const auto& g = o.grad;
    const auto& xa = pa->data;
    auto& ga = pa->ensure_grad();
    switch (op) {
      case ElementwiseOp::abs:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sign_or_zero(xa[i]);
        break;
      case ElementwiseOp::log_cosh:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::tanh(xa[i]);
        break;
      default:
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * slope;
        break;
    }
  });
}

template <typename Real>
BasicTensor<Real> reduce(ReduceOp op, const BasicTensor<Real>& a) {
  if (!a.defined() || a.numel() == 0) throw ShapeError("reduce on empty tensor");
  auto x = a.data();
  Real acc = Real(0);
  switch (op) {
    case ReduceOp::sum:
    case ReduceOp::mean:
      for (auto v : x) acc += v;
      if (op == ReduceOp::mean) acc /= static_cast<Real>(x.size());
      break;
    case ReduceOp::l1:
      for (auto v : x) acc += std::abs(v);
      break;
    case ReduceOp::l2_squared:
      for (auto v : x) acc += v * v;
      break;
  }
  auto pa = a.impl();
  return make_result<Real>(Shape{}, {acc}, {a}, "reduce", [op, pa](const detail::TensorImpl<Real>& o) {
    const Real g = o.grad[0];
    const auto& xa = pa->data;
    auto& ga = pa->ensure_grad();
    const Real inv_n = Real(1) / static_cast<Real>(xa.size());
    for (std::size_t i = 0; i < xa.size(); ++i) {
      switch (op) {
        case ReduceOp::sum: ga[i] += g; break;
        case ReduceOp::mean: ga[i] += g * inv_n; break;
        case ReduceOp::l1: ga[i] += g * sign_or_zero(xa[i]); break;
        case ReduceOp::l2_squared: ga[i] += Real(2) * g * xa[i]; break;
      }
    }
  });
}

template <typename Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes size");
  std::vector<Real> out(a.data().begin(), a.data().end());
  auto pa = a.impl();
  return make_result<Real>(std::move(shape), std::move(out), {a}, "reshape",
                           [pa](const detail::TensorImpl<Real>& o) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i];
  });
}

template <typename Real>
BasicTensor<Real> concat_channels(const std::vector<BasicTensor<Real>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels of an empty list");
  const Shape& ref = parts.front().shape();
  channel_count(ref);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool same = s.size() == ref.size();
    for (std::size_t i = 0; same && i < s.size(); ++i)
      if (i != 1 && s[i] != ref[i]) same = false;
    if (!same)
      throw ShapeError("concat_channels extent mismatch " + shape_str(s) + " vs " + shape_str(ref));
    total += s[1];
  }
  Shape shape = ref;
  shape[1] = total;
  std::vector<Real> out;
  out.reserve(static_cast<std::size_t>(shape_numel(shape)));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  std::vector<std::shared_ptr<detail::TensorImpl<Real>>> impls;
  for (const auto& p : parts) impls.push_back(p.impl());
  return make_result<Real>(std::move(shape), std::move(out), parts, "concat_channels",
                           [impls](const detail::TensorImpl<Real>& o) {
    std::size_t offset = 0;
    for (const auto& p : impls) {
      const std::size_t n = p->data.size();
      if (p->requires_grad) {
        auto& gp = p->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) gp[i] += o.grad[offset + i];
      }
      offset += n;
    }
  });
}

template <typename Real>
BasicTensor<Real> slice_channels(const BasicTensor<Real>& a, std::int64_t begin, std::int64_t end) {
  const std::int64_t channels = channel_count(a.shape());
  if (begin < 0 || end > channels || begin >= end)
    throw ShapeError("slice_channels [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") out of range for " + shape_str(a.shape()));
  const std::int64_t inner = inner_size(a.shape());
  Shape shape = a.shape();
  shape[1] = end - begin;
  auto first = a.data().begin() + begin * inner;
  std::vector<Real> out(first, first + (end - begin) * inner);
  auto pa = a.impl();
  const std::size_t offset = static_cast<std::size_t>(begin * inner);
  return make_result<Real>(std::move(shape), std::move(out), {a}, "slice_channels",
                           [pa, offset](const detail::TensorImpl<Real>& o) {
    auto& ga = pa->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) ga[offset + i] += o.grad[i];
  });
}

template <typename Real>
BasicTensor<Real> channel_mean(const BasicTensor<Real>& a) {
  const std::int64_t channels = channel_count(a.shape());
  const std::size_t inner = static_cast<std::size_t>(inner_size(a.shape()));
  Shape shape = a.shape();
  shape[1] = 1;
  std::vector<Real> out(inner, Real(0));
  auto x = a.data();
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < inner; ++i) out[i] += x[static_cast<std::size_t>(c) * inner + i];
  const Real inv = Real(1) / static_cast<Real>(channels);
  for (auto& v : out) v *= inv;
  auto pa = a.impl();
  return make_result<Real>(std::move(shape), std::move(out), {a}, "channel_mean",
                           [pa, channels, inner, inv](const detail::TensorImpl<Real>& o) {
    auto& ga = pa->ensure_grad();
    for (std::int64_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) ga[static_cast<std::size_t>(c) * inner + i] += o.grad[i] * inv;
  });
}

#define ICAUNET_INSTANTIATE(Real)                                                                         \
  template BasicTensor<Real> elementwise<Real>(ElementwiseOp, const BasicTensor<Real>&, const BasicTensor<Real>&); \
  template BasicTensor<Real> elementwise<Real>(ElementwiseOp, const BasicTensor<Real>&, Real);            \
  template BasicTensor<Real> reduce<Real>(ReduceOp, const BasicTensor<Real>&);                            \
  template BasicTensor<Real> reshape<Real>(const BasicTensor<Real>&, Shape);                              \
  template BasicTensor<Real> concat_channels<Real>(const std::vector<BasicTensor<Real>>&);                \
  template BasicTensor<Real> slice_channels<Real>(const BasicTensor<Real>&, std::int64_t, std::int64_t);  \
  template BasicTensor<Real> channel_mean<Real>(const BasicTensor<Real>&);

ICAUNET_INSTANTIATE(float)
ICAUNET_INSTANTIATE(double)

#undef ICAUNET_INSTANTIATE

}  // namespace icaunet
