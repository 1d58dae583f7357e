#include <cmath>
#include <cstring>

#include "doctest.h"
#include "icaunet/ops.hpp"
#include "icaunet/scheduler.hpp"
#include "icaunet/thread_pool.hpp"
#include "icaunet/trainer.hpp"
#include "test_util.hpp"

using namespace icaunet;
using icaunet::testing::random_tensor;

namespace {

ModelConfig small_config(std::int64_t groups) {
  ModelConfig c;
  c.n = 2;
  c.m = 8;
  c.u = 2;
  c.extents = {2, 32, 32};
  c.groups = groups;
  c.seed = 5;
  return c;
}

double max_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double d = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(double(a.data()[i]) - b.data()[i]));
  return d;
}

}  // namespace

TEST_CASE("thread pool") {
  ThreadPool pool(3);
  CHECK(pool.size() == 3);
  std::vector<int> hits(100, 0);
  pool.parallel_for(100, [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) CHECK(h == 1);
  CHECK_THROWS_AS(pool.parallel_for(4, [](std::size_t i) {
    if (i == 2) throw DataError("boom");
  }),
                  DataError);
  std::vector<std::size_t> order;
  run_indexed(nullptr, 4, [&](std::size_t i) { order.push_back(i); });
  CHECK(order == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("split_mixing_tensor") {
  const auto a = random_tensor<float>(Shape{1, 32, 4, 16, 16}, 1);
  const auto parts = split_mixing_tensor(a, 32);
  REQUIRE(parts.size() == 32);
  for (const auto& p : parts) {
    CHECK(p.shape() == Shape{1, 1, 4, 16, 16});
    CHECK(p.numel() * 32 == 8 * 64 * 64);  // a (8,64,64) frame is 32x larger
  }
  const auto joined = concat_channels(parts);
  CHECK(std::memcmp(joined.data().data(), a.data().data(), a.data().size() * 4) == 0);
  const auto one = split_mixing_tensor(a, 1);
  REQUIRE(one.size() == 1);
  CHECK(std::memcmp(one[0].data().data(), a.data().data(), a.data().size() * 4) == 0);
  const auto four = split_mixing_tensor(a, 4);
  CHECK(std::memcmp(concat_channels(four).data().data(), a.data().data(), a.data().size() * 4) == 0);
  CHECK_THROWS_AS(split_mixing_tensor(a, 5), ShapeError);
}

TEST_CASE("plan validation") {
  CHECK(parse_plan_mode("dense") == PlanMode::dense);
  CHECK(parse_plan_mode("grouped") == PlanMode::grouped);
  CHECK_THROWS_AS(parse_plan_mode("sparse"), ConfigError);
  CHECK_NOTHROW((ParallelPlan{PlanMode::dense, 1, 1}.validate(small_config(1))));
  CHECK_THROWS_AS((ParallelPlan{PlanMode::dense, 4, 1}.validate(small_config(4))), ConfigError);
  CHECK_THROWS_AS((ParallelPlan{PlanMode::dense, 1, 1}.validate(small_config(4))), ConfigError);
  CHECK_NOTHROW((ParallelPlan{PlanMode::grouped, 4, 2}.validate(small_config(4))));
  CHECK_THROWS_AS((ParallelPlan{PlanMode::grouped, 2, 2}.validate(small_config(4))), ConfigError);
  CHECK_THROWS_AS((ParallelPlan{PlanMode::grouped, 4, 0}.validate(small_config(4))), ConfigError);
}

TEST_CASE("grouped inference is independent of the worker count") {
  IcaUNet<float> model(small_config(4));
  const auto seq = generate_phantom(3, 4, model.config().extents);
  const auto t = make_triple(seq, {0, 1, 2});
  const ParallelPlan serial{PlanMode::grouped, 4, 1}, wide{PlanMode::grouped, 4, 4};
  ThreadPool pool(4);
  const auto a = grouped_inference(model, t.prev, t.centre, t.next, serial, nullptr);
  const auto b = grouped_inference(model, t.prev, t.centre, t.next, wide, &pool);
  for (std::size_t k = 0; k < a.logits.size(); ++k) CHECK(max_diff(a.logits[k], b.logits[k]) <= 1e-6);
  CHECK(max_diff(a.mixing, b.mixing) == 0.0);

  CHECK_THROWS_AS(grouped_inference(model, t.prev, t.centre, t.next, ParallelPlan{PlanMode::dense, 1, 1}, nullptr),
                  ConfigError);
  CHECK_THROWS_AS(grouped_inference(model, t.prev, t.centre, t.next, ParallelPlan{PlanMode::grouped, 2, 1}, nullptr),
                  ConfigError);
}

TEST_CASE("one group matches the dense model exactly") {
  IcaUNet<float> model(small_config(1));
  const auto seq = generate_phantom(3, 3, model.config().extents);
  const auto t = make_triple(seq, {0, 1, 2});
  const auto g = grouped_inference(model, t.prev, t.centre, t.next, ParallelPlan{PlanMode::grouped, 1, 1}, nullptr);
  NoGradGuard no_grad;
  const auto d = model.forward(t.prev, t.centre, t.next, false);
  for (std::size_t k = 0; k < d.logits.size(); ++k) CHECK(max_diff(g.logits[k], d.logits[k]) == 0.0);
}

TEST_CASE("grouped and dense models share shape contracts and both train") {
  const auto seq = generate_phantom(4, 3, {2, 32, 32});
  for (std::int64_t groups : {1, 4}) {
    IcaUNet<float> model(small_config(groups));
    RunConfig rc;
    rc.model = model.config();
    rc.loss = LossWeights::defaults(2);
    rc.optimizer.kind = OptimizerKind::adam;
    rc.optimizer.learning_rate = 1e-3;
    rc.steps = 30;
    rc.eval_interval = 10;
    const auto result = train(model, seq, rc);
    CHECK(result.history.back().total < result.history.front().total);
    NoGradGuard no_grad;
    const auto t = make_triple(seq, {0, 1, 2});
    const auto out = model.forward(t.prev, t.centre, t.next, false);
    CHECK(out.logits.back().shape() == Shape{1, 4, 2, 32, 32});
    CHECK(out.mixing.shape() == Shape{1, 8, 1, 8, 8});
  }
}

TEST_CASE("percentiles and benchmark report") {
  CHECK(percentile({5, 1, 3, 2, 4}, 0.5) == 3);
  CHECK(percentile({5, 1, 3, 2, 4}, 1.0) == 5);
  CHECK(percentile({5, 1, 3, 2, 4}, 0.2) == 1);
  CHECK_THROWS(percentile({}, 0.5));

  IcaUNet<float> model(small_config(4));
  const auto seq = generate_phantom(3, 3, model.config().extents);
  std::vector<FrameTriple> stream;
  for (const auto& idx : iterate_triples(3, false)) stream.push_back(make_triple(seq, idx));
  const ParallelPlan plan{PlanMode::grouped, 4, 2};
  CHECK_THROWS_AS(benchmark(model, {}, plan, 1, 3), ConfigError);
  CHECK_THROWS_AS(benchmark(model, stream, plan, 1, 0), ConfigError);
  CHECK_THROWS_AS(benchmark(model, stream, plan, 0, 3), ConfigError);

  const auto r = benchmark(model, stream, plan, 1, 7);
  REQUIRE(r.latency_ms.size() == 7);
  double sum = 0;
  for (double l : r.latency_ms) {
    CHECK(std::isfinite(l));
    CHECK(l > 0);
    sum += l;
  }
  CHECK(r.p50 <= r.p90);
  CHECK(r.p90 <= r.p99);
  CHECK(std::abs(r.window_ms - sum) < 1e-9 * sum);
  CHECK(std::abs(r.throughput_fps - 7 * 1000.0 / r.window_ms) < 1e-9 * r.throughput_fps);
  CHECK(r.lookahead);

  const auto csv = bench_csv(r);
  CHECK(csv.rfind("frame,latency_ms\n", 0) == 0);
  CHECK(csv.find("# throughput_fps=") != std::string::npos);
  CHECK(csv.find("mode=grouped, groups=4, workers=2, lookahead=1") != std::string::npos);
  std::int64_t rows = 0;
  for (std::size_t pos = 0; (pos = csv.find('\n', pos)) != std::string::npos; ++pos)
    if (pos + 1 < csv.size() && csv[pos + 1] != '#') ++rows;
  CHECK(rows == 7);
}
