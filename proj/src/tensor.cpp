#include "icaunet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace icaunet {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(shape));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace detail {

std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

}  // namespace detail

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, Real fill) : impl_(std::make_shared<Impl>()) {
  auto n = shape_numel(shape);
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<std::size_t>(n), fill);
}

template <typename Real>
BasicTensor<Real>::BasicTensor(Shape shape, std::vector<Real> data) : impl_(std::make_shared<Impl>()) {
  auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != data.size())
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::scalar(Real value) {
  BasicTensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->data = {value};
  return t;
}

template <typename Real>
Real BasicTensor<Real>::item() const {
  if (impl_->data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

template <typename Real>
BasicTensor<Real>& BasicTensor<Real>::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

template <typename Real>
void BasicTensor<Real>::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), Real(0));
  impl_->consumed = false;
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::detach() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return from_impl(std::move(impl));
}

template <typename Real>
BasicTensor<Real> BasicTensor<Real>::clone() const {
  return detach();
}

template <typename Real>
void BasicTensor<Real>::backward() const {
  if (impl_->data.size() != 1)
    throw ShapeError("backward() needs a scalar, got shape " + shape_str(shape()));
  if (impl_->consumed) throw StateError("backward() called twice on the same graph");
  if (!impl_->grad_fn) {
    if (!impl_->requires_grad) throw StateError("backward() on a tensor without history");
    impl_->ensure_grad()[0] += Real(1);
    impl_->consumed = true;
    return;
  }

  using NodePtr = std::shared_ptr<detail::Node<Real>>;
  std::vector<NodePtr> order;
  std::unordered_set<const detail::Node<Real>*> seen;
  std::vector<NodePtr> stack{impl_->grad_fn};
  seen.insert(impl_->grad_fn.get());
  while (!stack.empty()) {
    NodePtr node = std::move(stack.back());
    stack.pop_back();
    for (const auto& parent : node->parents) {
      const auto& fn = parent->grad_fn;
      if (fn && seen.insert(fn.get()).second) stack.push_back(fn);
    }
    order.push_back(std::move(node));
  }
  std::sort(order.begin(), order.end(),
            [](const NodePtr& a, const NodePtr& b) { return a->seq > b->seq; });

  impl_->ensure_grad()[0] += Real(1);
  for (const auto& node : order) {
    Impl* out = node->output;
    if (out->grad.size() == out->data.size()) node->backward(*out);
    if (!out->retain_grad && out != impl_.get()) {
      out->grad.clear();
      out->grad.shrink_to_fit();
    }
  }
  for (const auto& node : order) node->output->grad_fn.reset();
  impl_->consumed = true;
}

template <typename Real>
BasicTensor<Real> make_result(Shape shape, std::vector<Real> data,
                              std::vector<BasicTensor<Real>> parents, const char* op,
                              std::function<void(const detail::TensorImpl<Real>& out)> backward) {
  BasicTensor<Real> out(std::move(shape), std::move(data));
  if (!grad_enabled()) return out;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (!needs) return out;

  auto node = std::make_shared<detail::Node<Real>>();
  node->seq = detail::next_node_seq();
  node->op = op;
  node->output = out.impl().get();
  node->parents.reserve(parents.size());
  for (const auto& p : parents) node->parents.push_back(p.impl());
  node->backward = std::move(backward);
  out.impl()->requires_grad = true;
  out.impl()->grad_fn = std::move(node);
  return out;
}

template <typename Real>
BasicTensor<Real> finite_diff_grad(const ScalarFn<Real>& f, const BasicTensor<Real>& x, Real eps) {
  if (!(eps > Real(0))) throw NumericsError("finite_diff_grad: eps must be positive");
  NoGradGuard guard;
  BasicTensor<Real> probe = x.detach();
  BasicTensor<Real> result(x.shape());
  auto values = probe.mutable_data();
  auto out = result.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const Real saved = values[i];
    values[i] = saved + eps;
    const Real plus = f(probe).item();
    values[i] = saved - eps;
    const Real minus = f(probe).item();
    values[i] = saved;
    if (!std::isfinite(plus) || !std::isfinite(minus))
      throw NumericsError("finite_diff_grad: non-finite function value at element " +
                          std::to_string(i));
    out[i] = (plus - minus) / (Real(2) * eps);
  }
  return result;
}

template <typename Real>
double max_relative_error(std::span<const Real> analytic, std::span<const Real> reference) {
  if (analytic.size() != reference.size()) throw ShapeError("max_relative_error: size mismatch");
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max(scale, std::abs(static_cast<double>(reference[i])));
    worst = std::max(worst, std::abs(static_cast<double>(analytic[i]) - reference[i]));
  }
  return worst / std::max(scale, 1e-12);
}

template <typename Real>
double gradient_check(const ScalarFn<Real>& f, const BasicTensor<Real>& x, Real eps, bool corrupt) {
  BasicTensor<Real> leaf = x.detach();
  leaf.set_requires_grad(true);
  f(leaf).backward();
  std::vector<Real> analytic(leaf.grad().begin(), leaf.grad().end());
  if (analytic.empty()) analytic.assign(static_cast<std::size_t>(leaf.numel()), Real(0));
  if (corrupt) {
    for (auto& g : analytic) g = g * Real(1.5) + Real(0.1);
  }
  auto numeric = finite_diff_grad(f, x, eps);
  return max_relative_error<Real>(analytic, numeric.data());
}

template class BasicTensor<float>;
template class BasicTensor<double>;

#define ICAUNET_INSTANTIATE(Real)                                                               \
  template BasicTensor<Real> make_result<Real>(Shape, std::vector<Real>,                        \
                                               std::vector<BasicTensor<Real>>, const char*,     \
                                               std::function<void(const detail::TensorImpl<Real>&)>); \
  template BasicTensor<Real> finite_diff_grad<Real>(const ScalarFn<Real>&, const BasicTensor<Real>&, \
                                                    Real);                                      \
  template double max_relative_error<Real>(std::span<const Real>, std::span<const Real>);       \
  template double gradient_check<Real>(const ScalarFn<Real>&, const BasicTensor<Real>&, Real, bool);

ICAUNET_INSTANTIATE(float)
ICAUNET_INSTANTIATE(double)

#undef ICAUNET_INSTANTIATE

}  // namespace icaunet
