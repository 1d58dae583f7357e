#include "icaunet/scheduler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "icaunet/ops.hpp"
#include "icaunet/thread_pool.hpp"

namespace icaunet {

std::string to_string(PlanMode mode) { return mode == PlanMode::dense ? "dense" : "grouped"; }

PlanMode parse_plan_mode(const std::string& text) {
  if (text == "dense") return PlanMode::dense;
  if (text == "grouped") return PlanMode::grouped;
  throw ConfigError("unknown plan mode '" + text + "' (expected dense or grouped)");
}

void ParallelPlan::validate(const ModelConfig& config) const {
  if (workers < 1) throw ConfigError("plan: workers must be >= 1");
  if (groups < 1 || config.m % groups != 0)
    throw ConfigError("plan: groups=" + std::to_string(groups) + " must divide m=" + std::to_string(config.m));
  if (mode == PlanMode::dense && (groups != 1 || config.groups != 1))
    throw ConfigError("plan: dense mode needs groups=1 and a dense model");
  if (mode == PlanMode::grouped && groups != config.groups)
    throw ConfigError("plan: groups=" + std::to_string(groups) + " but the model was built with " +
                      std::to_string(config.groups));
}

template <typename Real>
std::vector<BasicTensor<Real>> split_mixing_tensor(const BasicTensor<Real>& mixing, std::int64_t groups) {
  if (mixing.rank() < 2) throw ShapeError("split_mixing_tensor expects (1,m,...)");
  const std::int64_t m = mixing.dim(1);
  if (groups < 1 || m % groups != 0)
    throw ShapeError("split_mixing_tensor: " + std::to_string(groups) + " does not divide " + std::to_string(m));
  std::vector<BasicTensor<Real>> out;
  const std::int64_t width = m / groups;
  for (std::int64_t g = 0; g < groups; ++g) out.push_back(slice_channels(mixing, g * width, (g + 1) * width));
  return out;
}

template <typename Real>
ModelOutputs<Real> grouped_inference(IcaUNet<Real>& model, const BasicTensor<Real>& prev,
                                     const BasicTensor<Real>& cur, const BasicTensor<Real>& next,
                                     const ParallelPlan& plan, ThreadPool* pool) {
  if (plan.mode != PlanMode::grouped) throw ConfigError("grouped_inference needs a grouped plan");
  plan.validate(model.config());
  NoGradGuard no_grad;
  return model.forward(prev, cur, next, false, pool);
}

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) throw ConfigError("percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const auto n = static_cast<double>(samples.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(q * n)));
  return samples[std::min(rank, samples.size()) - 1];
}

BenchReport benchmark(IcaUNet<float>& model, const std::vector<FrameTriple>& stream, const ParallelPlan& plan,
                      std::int64_t warmup, std::int64_t iters) {
  if (stream.empty()) throw ConfigError("benchmark: empty frame stream");
  if (warmup < 1) throw ConfigError("benchmark: warmup must be >= 1");
  if (iters < 1) throw ConfigError("benchmark: iters must be >= 1");
  plan.validate(model.config());

  ThreadPool pool(plan.workers);
  NoGradGuard no_grad;
  auto run = [&](std::int64_t i) {
    const auto& f = stream[static_cast<std::size_t>(i) % stream.size()];
    auto out = model.forward(f.prev, f.centre, f.next, false, &pool);
    return out.logits.back().numel();
  };
  for (std::int64_t i = 0; i < warmup; ++i) run(i);

  BenchReport report;
  report.plan = plan;
  report.config = model.config();
  report.hardware_note = hardware_description();
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  auto last = start;
  for (std::int64_t i = 0; i < iters; ++i) {
    run(warmup + i);
    const auto now = clock::now();
    report.latency_ms.push_back(std::chrono::duration<double, std::milli>(now - last).count());
    last = now;
  }
  report.window_ms = std::chrono::duration<double, std::milli>(last - start).count();
  report.throughput_fps = static_cast<double>(iters) / (report.window_ms / 1000.0);
  report.p50 = percentile(report.latency_ms, 0.50);
  report.p90 = percentile(report.latency_ms, 0.90);
  report.p99 = percentile(report.latency_ms, 0.99);
  return report;
}

std::string bench_summary(const BenchReport& r) {
  std::ostringstream o;
  o.precision(4);
  o << std::fixed << "# throughput_fps=" << r.throughput_fps << ", p50=" << r.p50 << ", p90=" << r.p90
    << ", p99=" << r.p99 << ", mode=" << to_string(r.plan.mode) << ", groups=" << r.plan.groups
    << ", workers=" << r.plan.workers << ", lookahead=" << (r.lookahead ? 1 : 0);
  return o.str();
}

std::string bench_csv(const BenchReport& r) {
  std::ostringstream o;
  o.precision(6);
  o << std::fixed << "frame,latency_ms\n";
  for (std::size_t i = 0; i < r.latency_ms.size(); ++i) o << i << ',' << r.latency_ms[i] << '\n';
  o << bench_summary(r) << '\n';
  o << "# window_ms=" << r.window_ms << ", frames=" << r.latency_ms.size() << '\n';
  o << "# target throughput >= " << BenchReport::kTargetFps << " fps: " << (r.meets_throughput() ? "PASS" : "FAIL")
    << '\n';
  o << "# target latency p99 <= " << BenchReport::kTargetLatencyMs << " ms: " << (r.meets_latency() ? "PASS" : "FAIL")
    << '\n';
  o << "# targets are informational; they depend on the host hardware\n";
  o << "# hardware=" << r.hardware_note << '\n';
  o << "# extents=" << r.config.extents.d << 'x' << r.config.extents.h << 'x' << r.config.extents.w
    << ", n=" << r.config.n << ", m=" << r.config.m << ", u=" << r.config.u << '\n';
  return o.str();
}

std::string hardware_description() {
  std::ostringstream o;
  o << "cpu threads=" << std::thread::hardware_concurrency();
#if defined(__VERSION__)
  o << ", compiler=" << __VERSION__;
#endif
  return o.str();
}

template std::vector<BasicTensor<float>> split_mixing_tensor<float>(const BasicTensor<float>&, std::int64_t);
template std::vector<BasicTensor<double>> split_mixing_tensor<double>(const BasicTensor<double>&, std::int64_t);
template ModelOutputs<float> grouped_inference<float>(IcaUNet<float>&, const BasicTensor<float>&,
                                                      const BasicTensor<float>&, const BasicTensor<float>&,
                                                      const ParallelPlan&, ThreadPool*);
template ModelOutputs<double> grouped_inference<double>(IcaUNet<double>&, const BasicTensor<double>&,
                                                        const BasicTensor<double>&, const BasicTensor<double>&,
                                                        const ParallelPlan&, ThreadPool*);

}  // namespace icaunet
