#pragma once

#include <cmath>
#include <random>

#include "icaunet/tensor.hpp"

namespace icaunet::testing {

// Uniform values in [lo, hi]; with `kink_margin` > 0, values closer than that
// to zero are redrawn so non-smooth ops are probed away from their kinks.
template <typename Real = double>
BasicTensor<Real> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                                double kink_margin = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicTensor<Real> t(std::move(shape));
  for (auto& v : t.mutable_data()) {
    double x = dist(rng);
    while (std::abs(x) < kink_margin) x = dist(rng);
    v = static_cast<Real>(x);
  }
  return t;
}

}  // namespace icaunet::testing
