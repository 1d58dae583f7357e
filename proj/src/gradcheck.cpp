#include "icaunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "icaunet/errors.hpp"
#include "icaunet/ica.hpp"
#include "icaunet/losses.hpp"
#include "icaunet/model.hpp"
#include "icaunet/neural_ops.hpp"
#include "icaunet/ops.hpp"

namespace icaunet {

namespace {

using T64 = Tensor64;
using Fn = ScalarFn<double>;
constexpr double kEps = 1e-6;

T64 random64(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0, double kink_margin = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  T64 t(std::move(shape));
  for (auto& v : t.mutable_data()) {
    double x = dist(rng);
    while (std::abs(x) < kink_margin) x = dist(rng);
    v = x;
  }
  return t;
}

// A fixed random projection turns any tensor output into a scalar whose
// gradient exercises every output element with a distinct weight.
T64 project(const T64& y, std::uint64_t seed) {
  return sum(mul(y, random64(y.shape(), seed ^ 0x9e3779b97f4a7c15ULL)));
}

struct OpCase {
  std::string name;
  // Each probe is (function, point); the entry reports the worst probe.
  std::function<std::vector<std::pair<Fn, T64>>()> probes;
};

std::vector<OpCase> op_cases() {
  std::vector<OpCase> cases;
  auto unary = [&](const std::string& name, std::function<T64(const T64&)> op, double kink = 0.0) {
    cases.push_back({name, [op, kink] {
                       return std::vector<std::pair<Fn, T64>>{
                           {[op](const T64& x) { return project(op(x), 1); }, random64({2, 3, 4}, 11, -2, 2, kink)}};
                     }});
  };
  auto binary = [&](const std::string& name, std::function<T64(const T64&, const T64&)> op, double lo_b = -2) {
    cases.push_back({name, [op, lo_b] {
                       auto a = random64({3, 5}, 21, -2, 2);
                       auto b = random64({3, 5}, 22, lo_b, 2, 0.5);
                       return std::vector<std::pair<Fn, T64>>{
                           {[op, b](const T64& x) { return project(op(x, b), 2); }, a},
                           {[op, a](const T64& x) { return project(op(a, x), 2); }, b}};
                     }});
  };
  binary("add", [](const T64& a, const T64& b) { return add(a, b); });
  binary("sub", [](const T64& a, const T64& b) { return sub(a, b); });
  binary("mul", [](const T64& a, const T64& b) { return mul(a, b); });
  binary("div", [](const T64& a, const T64& b) { return div(a, b); }, 0.5);
  unary("scale", [](const T64& x) { return scale(x, -1.75); });
  unary("abs", [](const T64& x) { return icaunet::abs(x); }, 1e-3);
  unary("log_cosh", [](const T64& x) { return log_cosh(x); });
  unary("sum", [](const T64& x) { return scale(sum(x), 1.3); });
  unary("mean", [](const T64& x) { return scale(mean(x), 2.1); });
  unary("l1", [](const T64& x) { return reduce(ReduceOp::l1, x); }, 1e-3);
  unary("l2_squared", [](const T64& x) { return reduce(ReduceOp::l2_squared, x); });
  unary("reshape", [](const T64& x) { return reshape(x, Shape{4, 6}); });
  unary("leaky_relu", [](const T64& x) { return leaky_relu(x, 0.1); }, 1e-3);
  unary("negentropy_term", [](const T64& x) { return ica::negentropy_term(x, 0.75); });

  cases.push_back({"concat_channels", [] {
                     auto a = random64({1, 2, 2, 3, 3}, 31), b = random64({1, 3, 2, 3, 3}, 32);
                     return std::vector<std::pair<Fn, T64>>{
                         {[b](const T64& x) { return project(concat_channels<double>({x, b}), 3); }, a},
                         {[a](const T64& x) { return project(concat_channels<double>({a, x}), 3); }, b}};
                   }});
  cases.push_back({"slice_channels", [] {
                     return std::vector<std::pair<Fn, T64>>{
                         {[](const T64& x) { return project(slice_channels(x, 1, 3), 4); }, random64({1, 4, 2, 3, 3}, 33)}};
                   }});
  cases.push_back({"channel_mean", [] {
                     return std::vector<std::pair<Fn, T64>>{
                         {[](const T64& x) { return project(channel_mean(x), 5); }, random64({1, 3, 2, 3, 3}, 34)}};
                   }});

  auto conv_case = [&](const std::string& name, ConvSpec spec, Shape x_shape, bool transposed) {
    cases.push_back({name, [spec, x_shape, transposed] {
                       const auto& k = spec.kernel;
                       Shape w_shape = transposed ? Shape{spec.in_channels, spec.out_channels / spec.groups, k[0], k[1], k[2]}
                                                  : Shape{spec.out_channels, spec.in_channels / spec.groups, k[0], k[1], k[2]};
                       auto x = random64(x_shape, 41), w = random64(w_shape, 42), b = random64({spec.out_channels}, 43);
                       auto run = [spec, transposed](const T64& xi, const T64& wi, const T64& bi) {
                         return transposed ? transposed_conv3d<double>(xi, wi, spec, bi) : conv3d<double>(xi, wi, bi, spec);
                       };
                       return std::vector<std::pair<Fn, T64>>{
                           {[run, w, b](const T64& t) { return project(run(t, w, b), 6); }, x},
                           {[run, x, b](const T64& t) { return project(run(x, t, b), 6); }, w},
                           {[run, x, w](const T64& t) { return project(run(x, w, t), 6); }, b}};
                     }});
  };
  conv_case("conv3d", ConvSpec{2, 3, {2, 3, 3}, {1, 2, 1}, {0, 1, 1}, 1}, {1, 2, 3, 5, 4}, false);
  conv_case("conv3d_grouped", ConvSpec{4, 6, {1, 3, 3}, {1, 1, 2}, {0, 1, 1}, 2}, {1, 4, 2, 4, 5}, false);
  conv_case("transposed_conv3d", ConvSpec{2, 3, {2, 2, 3}, {2, 2, 1}, {0, 0, 1}, 1}, {1, 2, 2, 3, 3}, true);
  conv_case("transposed_conv3d_grouped", ConvSpec{4, 2, {1, 2, 2}, {1, 2, 2}, {0, 0, 0}, 2}, {1, 4, 2, 2, 3}, true);

  auto bn_case = [&](const std::string& name, bool training) {
    cases.push_back({name, [training] {
                       auto x = random64({1, 3, 2, 3, 4}, 51, -2, 3);
                       auto g = random64({3}, 52, 0.5, 1.5), b = random64({3}, 53);
                       auto run = [training](const T64& xi, const T64& gi, const T64& bi) {
                         BatchNormState<double> state(3);
                         state.running_mean = random64({3}, 54);
                         state.running_var = random64({3}, 55, 0.5, 2);
                         return batch_norm(xi, gi, bi, state, training);
                       };
                       return std::vector<std::pair<Fn, T64>>{
                           {[run, g, b](const T64& t) { return project(run(t, g, b), 7); }, x},
                           {[run, x, b](const T64& t) { return project(run(x, t, b), 7); }, g},
                           {[run, x, g](const T64& t) { return project(run(x, g, t), 7); }, b}};
                     }});
  };
  bn_case("batch_norm_train", true);
  bn_case("batch_norm_eval", false);

  cases.push_back({"correlation3d", [] {
                     auto a = random64({1, 2, 2, 5, 5}, 61), b = random64({1, 2, 2, 5, 5}, 62);
                     const CorrSpec spec{2};
                     return std::vector<std::pair<Fn, T64>>{
                         {[b, spec](const T64& x) { return project(correlation3d(x, b, spec), 8); }, a},
                         {[a, spec](const T64& x) { return project(correlation3d(a, x, spec), 8); }, b}};
                   }});

  cases.push_back({"cross_entropy", [] {
                     LabelVolume labels({2, 2, 3});
                     std::mt19937_64 rng(71);
                     for (auto& id : labels.ids) id = static_cast<std::uint8_t>(rng() % 4);
                     return std::vector<std::pair<Fn, T64>>{
                         {[labels](const T64& x) { return cross_entropy(x, labels); }, random64({1, 4, 2, 2, 3}, 72, -3, 3)}};
                   }});

  cases.push_back({"loss_ica", [] {
                     ModelConfig c;
                     c.n = 2;
                     c.m = 4;
                     c.u = 2;
                     c.extents = {2, 32, 32};
                     const auto mix = reconstruction_operator<double>(c);
                     const auto w = LossWeights::defaults(c.n);
                     const Extents3 a = c.level_extents(c.n), b = c.basis_extents();
                     auto A = random64({1, c.m, a.d, a.h, a.w}, 81);
                     auto X = random64({1, c.u * c.m, b.d, b.h, b.w}, 82, -1, 1, 1e-3);
                     auto F = random64({1, 1, c.extents.d, c.extents.h, c.extents.w}, 83);
                     return std::vector<std::pair<Fn, T64>>{
                         {[X, F, w, mix](const T64& t) { return loss_ica(t, X, F, w, mix).total; }, A},
                         {[A, F, w, mix](const T64& t) { return loss_ica(A, t, F, w, mix).total; }, X}};
                   }});
  return cases;
}

ModelConfig end_to_end_config(GradcheckScale scale) {
  ModelConfig c;
  c.n = scale == GradcheckScale::tiny ? 2 : 3;
  c.m = 4;
  c.u = 2;
  c.stem_channels = 4;
  c.extents = scale == GradcheckScale::tiny ? Extents3{2, 32, 32} : Extents3{2, 64, 64};
  c.seed = 3;
  return c;
}

// Central differences of loss_total on a sample of entries of every
// parameter, compared normwise over the whole sampled gradient vector.
double end_to_end_error(GradcheckScale scale, bool corrupt) {
  const auto config = end_to_end_config(scale);
  IcaUNet<double> model(config);
  const auto& e = config.extents;
  const Shape frame_shape{1, 1, e.d, e.h, e.w};
  const auto prev = random64(frame_shape, 91), cur = random64(frame_shape, 92), next = random64(frame_shape, 93);
  LabelVolume labels(e);
  std::mt19937_64 rng(94);
  for (auto& id : labels.ids) id = static_cast<std::uint8_t>(rng() % static_cast<unsigned>(config.num_classes));
  const auto weights = LossWeights::defaults(config.n);
  const auto mix = reconstruction_operator<double>(config);
  auto loss = [&] {
    auto out = model.forward(prev, cur, next, true);
    return loss_total(out, labels, weights, cur, mix).total;
  };

  model.zero_grad();
  loss().backward();
  const std::size_t samples = 3;
  std::vector<double> analytic, numeric;
  for (auto& p : model.parameters()) {
    auto& t = *p.tensor;
    const auto n = static_cast<std::size_t>(t.numel());
    for (std::size_t s = 0; s < std::min(samples, n); ++s) {
      const auto i = static_cast<std::size_t>(rng() % n);
      double g = t.has_grad() ? t.grad()[i] : 0.0;
      if (corrupt) g = g * 1.5 + 0.1;
      analytic.push_back(g);
      NoGradGuard no_grad;
      auto data = t.mutable_data();
      const double orig = data[i];
      data[i] = orig + kEps;
      const double up = loss().item();
      data[i] = orig - kEps;
      const double down = loss().item();
      data[i] = orig;
      numeric.push_back((up - down) / (2 * kEps));
    }
  }
  return max_relative_error<double>(analytic, numeric);
}

}  // namespace

GradcheckScale parse_gradcheck_scale(const std::string& text) {
  if (text == "tiny") return GradcheckScale::tiny;
  if (text == "small") return GradcheckScale::small;
  throw ConfigError("gradcheck scale must be tiny or small, got '" + text + "'");
}

std::vector<std::string> gradcheck_entry_names() {
  std::vector<std::string> names;
  for (const auto& c : op_cases()) names.push_back(c.name);
  names.push_back("end_to_end");
  return names;
}

std::vector<GradcheckEntry> run_gradcheck(const GradcheckOptions& options,
                                          const std::function<void(const GradcheckEntry&)>& on_entry) {
  std::vector<GradcheckEntry> results;
  auto report = [&](GradcheckEntry entry) {
    if (on_entry) on_entry(entry);
    results.push_back(std::move(entry));
  };
  for (const auto& c : op_cases()) {
    GradcheckEntry entry{c.name, 0.0, kOpTolerance, false};
    for (const auto& [f, x] : c.probes())
      entry.max_rel_error = std::max(entry.max_rel_error, gradient_check<double>(f, x, kEps, options.corrupt == c.name));
    report(entry);
  }
  report({"end_to_end", end_to_end_error(options.scale, options.corrupt == "end_to_end"), kEndToEndTolerance, true});
  return results;
}

}  // namespace icaunet
