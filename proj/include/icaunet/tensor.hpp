#pragma once

// Dense tensors with tape-free reverse-mode differentiation.
//
// Every result of a differentiable op carries a Node recording its parents
// and a vector-Jacobian closure. Nodes are stamped with a global creation
// sequence number; backward() collects the reachable nodes, visits them in
// descending sequence order (a valid reverse topological order because a
// parent always exists before its children) and then releases the graph.
// Independent graphs may be built on different threads.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "icaunet/errors.hpp"

namespace icaunet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename Real>
class BasicTensor;

namespace detail {

template <typename Real>
struct TensorImpl;

template <typename Real>
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  TensorImpl<Real>* output = nullptr;
  std::vector<std::shared_ptr<TensorImpl<Real>>> parents;
  // Reads output->grad and accumulates into the parents that require grad.
  std::function<void(const TensorImpl<Real>& out)> backward;
};

template <typename Real>
struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  bool retain_grad = false;
  bool consumed = false;
  std::shared_ptr<Node<Real>> grad_fn;

  std::vector<Real>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
    return grad;
  }
};

std::uint64_t next_node_seq();

}  // namespace detail

bool grad_enabled();

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename Real>
class BasicTensor {
 public:
  using value_type = Real;
  using Impl = detail::TensorImpl<Real>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, Real fill = Real(0));
  BasicTensor(Shape shape, std::vector<Real> data);

  static BasicTensor scalar(Real value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::int64_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  std::span<const Real> data() const { return impl_->data; }
  // Direct access for leaves: initializers and optimizers write through this.
  std::span<Real> mutable_data() { return impl_->data; }
  Real item() const;
  Real operator[](std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool on = true);
  void retain_grad() { impl_->retain_grad = true; }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<const Real> grad() const { return impl_->grad; }
  std::span<Real> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();
  bool is_leaf() const { return !impl_->grad_fn; }

  // Same data, no history.
  BasicTensor detach() const;
  BasicTensor clone() const;

  // Reverse pass from a scalar. Leaves accumulate into grad(); the graph is
  // released afterwards, and a second call on the same result throws
  // StateError.
  void backward() const;

  const std::shared_ptr<Impl>& impl() const { return impl_; }
  static BasicTensor from_impl(std::shared_ptr<Impl> impl) {
    BasicTensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

// Builds a result tensor and, if recording is on and some parent requires
// grad, attaches a node whose closure propagates gradients to the parents.
template <typename Real>
BasicTensor<Real> make_result(
    Shape shape, std::vector<Real> data, std::vector<BasicTensor<Real>> parents,
    const char* op, std::function<void(const detail::TensorImpl<Real>& out)> backward);

template <typename Real>
using ScalarFn = std::function<BasicTensor<Real>(const BasicTensor<Real>&)>;

// Central differences (f(x+eps e_i) - f(x-eps e_i)) / (2 eps), evaluated
// without graph recording. Throws NumericsError on a non-finite f.
template <typename Real>
BasicTensor<Real> finite_diff_grad(const ScalarFn<Real>& f, const BasicTensor<Real>& x,
                                   Real eps = Real(1e-4));

// max_i |a_i - b_i| / max(max_i |b_i|, tiny). Normwise relative error of a
// gradient against a reference.
template <typename Real>
double max_relative_error(std::span<const Real> analytic, std::span<const Real> reference);

// Runs f on a grad-tracking copy of x, backpropagates, and compares with
// finite_diff_grad. `corrupt` is a test hook that perturbs the analytic
// gradient before comparison.
template <typename Real>
double gradient_check(const ScalarFn<Real>& f, const BasicTensor<Real>& x, Real eps = Real(1e-4),
                      bool corrupt = false);

}  // namespace icaunet
