#pragma once

#include <vector>

#include "icaunet/tensor.hpp"

namespace icaunet {

enum class ElementwiseOp { add, sub, mul, div, abs, log_cosh, scale };
enum class ReduceOp { sum, mean, l1, l2_squared };

// Binary kinds require equal shapes; unary kinds (abs, log_cosh) ignore `b`.
template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, const BasicTensor<Real>& b);
// Tensor-scalar form: add/sub/mul/div/scale by a constant.
template <typename Real>
BasicTensor<Real> elementwise(ElementwiseOp op, const BasicTensor<Real>& a, Real b);

template <typename Real>
BasicTensor<Real> add(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::add, a, b);
}
template <typename Real>
BasicTensor<Real> sub(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::sub, a, b);
}
template <typename Real>
BasicTensor<Real> mul(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::mul, a, b);
}
template <typename Real>
BasicTensor<Real> div(const BasicTensor<Real>& a, const BasicTensor<Real>& b) {
  return elementwise(ElementwiseOp::div, a, b);
}
template <typename Real>
BasicTensor<Real> scale(const BasicTensor<Real>& a, Real factor) {
  return elementwise(ElementwiseOp::scale, a, factor);
}
template <typename Real>
BasicTensor<Real> abs(const BasicTensor<Real>& a) {
  return elementwise(ElementwiseOp::abs, a, Real(0));
}
// log(cosh(x)), evaluated as |x| + log1p(exp(-2|x|)) - log 2.
template <typename Real>
BasicTensor<Real> log_cosh(const BasicTensor<Real>& a) {
  return elementwise(ElementwiseOp::log_cosh, a, Real(0));
}

// Scalar result. Empty input is a ShapeError.
template <typename Real>
BasicTensor<Real> reduce(ReduceOp op, const BasicTensor<Real>& a);

template <typename Real>
BasicTensor<Real> sum(const BasicTensor<Real>& a) { return reduce(ReduceOp::sum, a); }
template <typename Real>
BasicTensor<Real> mean(const BasicTensor<Real>& a) { return reduce(ReduceOp::mean, a); }

template <typename Real>
BasicTensor<Real> reshape(const BasicTensor<Real>& a, Shape shape);

// Channel axis is 1 for rank >= 2 tensors laid out as (batch=1, C, ...).
template <typename Real>
BasicTensor<Real> concat_channels(const std::vector<BasicTensor<Real>>& parts);
template <typename Real>
BasicTensor<Real> slice_channels(const BasicTensor<Real>& a, std::int64_t begin, std::int64_t end);
// (1,C,...) -> (1,1,...), average over channels.
template <typename Real>
BasicTensor<Real> channel_mean(const BasicTensor<Real>& a);

}  // namespace icaunet
