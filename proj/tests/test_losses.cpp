#include <cmath>
#include <random>

#include "doctest.h"
#include "icaunet/losses.hpp"
#include "icaunet/ops.hpp"
#include "test_util.hpp"

using namespace icaunet;
using icaunet::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n = 3;
  c.m = 4;
  c.u = 2;
  c.extents = {2, 64, 64};
  return c;
}

LabelVolume random_labels(const Extents3& e, std::uint64_t seed, int classes = 4) {
  LabelVolume l(e);
  std::mt19937_64 rng(seed);
  for (auto& id : l.ids) id = static_cast<std::uint8_t>(rng() % static_cast<unsigned>(classes));
  return l;
}

ModelOutputs<double> fake_outputs(const ModelConfig& c, std::uint64_t seed) {
  ModelOutputs<double> out;
  for (std::int64_t k = 1; k <= c.n; ++k) {
    const Extents3 e = c.output_extents(k);
    out.logits.push_back(random_tensor<double>(Shape{1, c.num_classes, e.d, e.h, e.w}, seed + static_cast<std::uint64_t>(k), -3, 3));
  }
  const Extents3 a = c.level_extents(c.n), b = c.basis_extents();
  out.mixing = random_tensor<double>(Shape{1, c.m, a.d, a.h, a.w}, seed + 10);
  out.basis = random_tensor<double>(Shape{1, c.u * c.m, b.d, b.h, b.w}, seed + 11, -1, 1, 0.05);
  return out;
}

// Independent softmax cross entropy in plain loops.
double reference_ce(const Tensor64& logits, const LabelVolume& labels) {
  const std::int64_t c = logits.dim(1), v = labels.extents.voxels();
  double acc = 0.0;
  for (std::int64_t i = 0; i < v; ++i) {
    double denom = 0.0;
    for (std::int64_t k = 0; k < c; ++k) denom += std::exp(logits[k * v + i]);
    acc += -std::log(std::exp(logits[labels.ids[static_cast<std::size_t>(i)] * v + i]) / denom);
  }
  return acc / static_cast<double>(v);
}

double brute_hausdorff(const std::vector<Voxel>& a, const std::vector<Voxel>& b, const Spacing& s) {
  auto directed = [&](const std::vector<Voxel>& p, const std::vector<Voxel>& q) {
    double worst = 0.0;
    for (const auto& x : p) {
      double best = INFINITY;
      for (const auto& y : q) {
        double d2 = 0.0;
        for (int i = 0; i < 3; ++i) d2 += std::pow(static_cast<double>(x[i] - y[i]) * s[i], 2.0);
        best = std::min(best, std::sqrt(d2));
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace

TEST_CASE("loss weights defaults") {
  const auto w = LossWeights::defaults(3);
  CHECK(w.lambda_s == 1.0);
  CHECK(w.lambda_i == 1.0);
  CHECK(w.lambda_r == 1.0);
  CHECK(w.alpha_neg == 0.75);
  CHECK(w.alpha_k == std::vector<double>{0.1, 0.1, 1.0});
  CHECK(w.beta == 0.2);
  CHECK_NOTHROW(w.validate(3));
  CHECK_THROWS_AS(w.validate(4), ConfigError);
  auto bad = w;
  bad.beta = -1;
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
}

TEST_CASE("loss_ica examples") {
  const auto c = tiny_config();
  const auto mix = reconstruction_operator<double>(c);
  const auto w = LossWeights::defaults(3);
  const Extents3 a = c.level_extents(3), b = c.basis_extents(), e = c.extents;
  auto zero_x = Tensor64(Shape{1, c.u * c.m, b.d, b.h, b.w}, 0.0);
  auto any_a = random_tensor<double>(Shape{1, c.m, a.d, a.h, a.w}, 3);
  auto zero_f = Tensor64(Shape{1, 1, e.d, e.h, e.w}, 0.0);
  CHECK(loss_ica(any_a, zero_x, zero_f, w, mix).total.item() == 0.0);

  // One basis entry at alpha with an exact reconstruction.
  MixFn<double> exact = [](const Tensor64&, const Tensor64&) { return Tensor64(Shape{1, 1, 1, 1, 1}, 0.0); };
  const auto one = loss_ica(Tensor64(Shape{1}, 0.0), Tensor64(Shape{1}, 0.75), Tensor64(Shape{1, 1, 1, 1, 1}, 0.0), w, exact);
  const double expected = 0.75 - 0.75 * std::log(std::cosh(1.0));
  CHECK(std::abs(one.total.item() - expected) < 1e-12);
  CHECK(std::abs(expected - 0.4246644) < 1e-6);
  CHECK(one.reconstruction.item() == 0.0);

  // Parts recombine with the weights.
  auto x = random_tensor<double>(Shape{1, c.u * c.m, b.d, b.h, b.w}, 4, -1, 1, 0.05);
  auto f = random_tensor<double>(Shape{1, 1, e.d, e.h, e.w}, 5);
  auto w2 = w;
  w2.lambda_s = 0.3;
  w2.lambda_i = 2.0;
  w2.lambda_r = 0.7;
  const auto parts = loss_ica(any_a, x, f, w2, mix);
  CHECK(std::abs(parts.total.item() - (0.3 * parts.sparsity.item() + 2.0 * parts.independence.item() +
                                        0.7 * parts.reconstruction.item())) < 1e-9);

  CHECK_THROWS_AS(loss_ica(any_a, x, Tensor64(Shape{1, 1, 2, 32, 32}), w, mix), ShapeError);
}

TEST_CASE("loss_ica gradients match finite differences") {
  const auto c = tiny_config();
  const auto mix = reconstruction_operator<double>(c);
  const auto w = LossWeights::defaults(3);
  const Extents3 a = c.level_extents(3), b = c.basis_extents(), e = c.extents;
  auto A = random_tensor<double>(Shape{1, c.m, a.d, a.h, a.w}, 6);
  auto X = random_tensor<double>(Shape{1, c.u * c.m, b.d, b.h, b.w}, 7, -1, 1, 0.05);
  auto F = random_tensor<double>(Shape{1, 1, e.d, e.h, e.w}, 8);
  CHECK(gradient_check<double>([&](const Tensor64& x) { return loss_ica(A, x, F, w, mix).total; }, X, 1e-6) < 1e-4);
  CHECK(gradient_check<double>([&](const Tensor64& t) { return loss_ica(t, X, F, w, mix).total; }, A, 1e-6) < 1e-4);
}

TEST_CASE("cross entropy examples") {
  const Extents3 e{1, 2, 3};
  const auto labels = random_labels(e, 1);
  CHECK(std::abs(cross_entropy(Tensor64(Shape{1, 4, 1, 2, 3}, 0.5), labels).item() - std::log(4.0)) < 1e-12);

  Tensor64 confident(Shape{1, 4, 1, 2, 3}, 0.0);
  for (std::int64_t v = 0; v < 6; ++v) confident.mutable_data()[static_cast<std::size_t>(labels.ids[static_cast<std::size_t>(v)] * 6 + v)] = 100.0;
  CHECK(cross_entropy(confident, labels).item() < 1e-12);
  CHECK(cross_entropy(confident, labels).item() >= 0.0);

  // Two voxels by hand: logits (1,2,3) label 2 and (0,0,0) label 0.
  LabelVolume two({1, 1, 2});
  two.ids = {2, 0};
  Tensor64 z(Shape{1, 3, 1, 1, 2}, std::vector<double>{1, 0, 2, 0, 3, 0});
  const double by_hand = 0.5 * (-std::log(std::exp(3.0) / (std::exp(1.0) + std::exp(2.0) + std::exp(3.0))) + std::log(3.0));
  CHECK(std::abs(cross_entropy(z, two).item() - by_hand) < 1e-6);

  auto logits = random_tensor<double>(Shape{1, 4, 2, 3, 3}, 9, -4, 4);
  const auto l2 = random_labels({2, 3, 3}, 10);
  CHECK(std::abs(cross_entropy(logits, l2).item() - reference_ce(logits, l2)) < 1e-12);
  CHECK(gradient_check<double>([&](const Tensor64& t) { return cross_entropy(t, l2); }, logits, 1e-6) < 1e-4);

  LabelVolume out_of_range = l2;
  out_of_range.ids[3] = 4;
  CHECK_THROWS_AS(cross_entropy(logits, out_of_range), DataError);
  CHECK_THROWS_AS(cross_entropy(logits, random_labels({2, 3, 4}, 1)), ShapeError);
}

TEST_CASE("loss_total equals its independently recomputed parts") {
  const auto c = tiny_config();
  const auto mix = reconstruction_operator<double>(c);
  const auto out = fake_outputs(c, 20);
  const auto gt = random_labels(c.extents, 21);
  const auto frame = random_tensor<double>(Shape{1, 1, c.extents.d, c.extents.h, c.extents.w}, 22);
  const auto w = LossWeights::defaults(3);
  const auto total = loss_total(out, gt, w, frame, mix);

  double ce[3];
  for (int k = 0; k < 3; ++k) {
    const auto& y = out.logits[static_cast<std::size_t>(k)];
    ce[k] = reference_ce(y, rescale_labels(gt, spatial_extents(y.shape())));
    CHECK(std::abs(total.cross_entropy[static_cast<std::size_t>(k)].item() - ce[k]) < 1e-9);
  }
  const double ica = loss_ica(out.mixing, out.basis, frame, w, mix).total.item();
  const double expected = 0.1 * ce[0] + 0.1 * ce[1] + 1.0 * ce[2] + 0.2 * ica;
  CHECK(std::abs(total.total.item() - expected) < 1e-6 * std::max(1.0, std::abs(expected)));

  auto seg_only = w;
  seg_only.beta = 0.0;
  CHECK(std::abs(loss_total(out, gt, seg_only, frame, mix).total.item() - (0.1 * ce[0] + 0.1 * ce[1] + ce[2])) < 1e-9);

  // Linear in each weight.
  auto doubled = w;
  doubled.alpha_k[1] *= 2;
  CHECK(std::abs(loss_total(out, gt, doubled, frame, mix).total.item() - (expected + 0.1 * ce[1])) <
        1e-6 * std::abs(expected));
  doubled = w;
  doubled.beta *= 3;
  CHECK(std::abs(loss_total(out, gt, doubled, frame, mix).total.item() - (expected + 0.4 * ica)) <
        1e-6 * std::abs(expected));
}

TEST_CASE("dice score") {
  LabelVolume p({1, 1, 4}), g({1, 1, 4});
  p.ids = {1, 1, 0, 0};
  g.ids = {1, 0, 1, 0};
  CHECK(dice_score(p, g, 1) == 0.5);
  CHECK(dice_score(g, p, 1) == 0.5);
  CHECK(dice_score(p, p, 1) == 1.0);
  CHECK(dice_score(p, g, 3) == 1.0);  // absent from both
  LabelVolume q({1, 1, 4});
  q.ids = {0, 0, 2, 2};
  CHECK(dice_score(p, q, 1) == 0.0);
  CHECK_THROWS_AS(dice_score(p, LabelVolume({1, 2, 2}), 1), ShapeError);
}

TEST_CASE("hausdorff distance") {
  const Spacing unit{1, 1, 1};
  std::vector<Voxel> a{{0, 0, 0}}, b{{0, 0, 3}};
  CHECK(hausdorff(a, b, unit) == 3.0);
  CHECK(hausdorff(a, a, unit) == 0.0);
  CHECK(hausdorff(std::vector<Voxel>{{0, 0, 0}}, std::vector<Voxel>{{2, 0, 0}}, Spacing{5, 1, 1}) == 10.0);
  CHECK_THROWS_AS(hausdorff({}, b, unit), MetricUndefined);
  CHECK_THROWS_AS(hausdorff(a, {}, unit), MetricUndefined);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Voxel> p, q;
    for (int i = 0; i < 1 + static_cast<int>(rng() % 30); ++i)
      p.push_back({static_cast<std::int64_t>(rng() % 5), static_cast<std::int64_t>(rng() % 9), static_cast<std::int64_t>(rng() % 9)});
    for (int i = 0; i < 1 + static_cast<int>(rng() % 30); ++i)
      q.push_back({static_cast<std::int64_t>(rng() % 5), static_cast<std::int64_t>(rng() % 9), static_cast<std::int64_t>(rng() % 9)});
    const Spacing s{2.5, 1.25, 1.25};
    CHECK(hausdorff(p, q, s) == brute_hausdorff(p, q, s));
    CHECK(hausdorff(p, q, s) == hausdorff(q, p, s));
  }
}

TEST_CASE("metric rows") {
  LabelVolume p({1, 2, 2}), g({1, 2, 2});
  p.ids = {1, 1, 0, 0};
  g.ids = {1, 0, 0, 2};
  const auto m = evaluate_frame(p, g, {1, 1, 1});
  REQUIRE(m.size() == 3);
  CHECK(m[0].hausdorff_defined);
  CHECK(m[0].hausdorff_mm == 1.0);
  CHECK_FALSE(m[1].hausdorff_defined);  // MYO missing from the prediction
  CHECK_FALSE(m[2].hausdorff_defined);  // LV absent from both
  CHECK(m[2].dice == 1.0);
  CHECK(metrics_csv_header() == "frame_index,class,dice,hausdorff_mm\n");
  CHECK(metrics_csv_rows(7, m) ==
        "7,1,0.666667,1.000000\n7,2,0.000000,NA\n7,3,1.000000,NA\n");
}

TEST_CASE("predict_labels takes the argmax") {
  Tensor64 z(Shape{1, 3, 1, 1, 2}, std::vector<double>{1, 5, 2, 5, 0, 1});
  const auto l = predict_labels(z);
  CHECK(l.ids == std::vector<std::uint8_t>{1, 0});
}
