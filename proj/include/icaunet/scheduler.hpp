#pragma once

// Coefficient-group parallel inference and the throughput/latency harness.

#include <cstdint>
#include <string>
#include <vector>

#include "icaunet/data.hpp"
#include "icaunet/model.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet {

class ThreadPool;

enum class PlanMode { dense, grouped };

std::string to_string(PlanMode mode);
PlanMode parse_plan_mode(const std::string& text);  // ConfigError if unknown

struct ParallelPlan {
  PlanMode mode = PlanMode::dense;
  std::int64_t groups = 1;
  std::size_t workers = 1;

  // ConfigError if the plan does not fit the model: groups must divide m and
  // equal the model's backbone groups; dense mode needs a dense model.
  void validate(const ModelConfig& config) const;
};

// g tensors of shape (1, m/g, ...). ShapeError if g does not divide m.
template <typename Real>
std::vector<BasicTensor<Real>> split_mixing_tensor(const BasicTensor<Real>& mixing, std::int64_t groups);

// Eval-mode forward without gradient recording. Per-group backbones run on
// `pool` (when given); results do not depend on the worker count.
template <typename Real>
ModelOutputs<Real> grouped_inference(IcaUNet<Real>& model, const BasicTensor<Real>& prev,
                                     const BasicTensor<Real>& cur, const BasicTensor<Real>& next,
                                     const ParallelPlan& plan, ThreadPool* pool);

struct BenchReport {
  std::vector<double> latency_ms;  // one per timed frame
  double window_ms = 0.0;          // wall time of the timed window
  double throughput_fps = 0.0;
  double p50 = 0.0, p90 = 0.0, p99 = 0.0;
  ParallelPlan plan;
  ModelConfig config;
  std::string hardware_note;
  bool lookahead = true;  // frame t needs frame t+1; the wait is not in latency_ms

  static constexpr double kTargetFps = 22.0;
  static constexpr double kTargetLatencyMs = 50.0;
  bool meets_throughput() const { return throughput_fps >= kTargetFps; }
  bool meets_latency() const { return p99 <= kTargetLatencyMs; }
};

// Nearest-rank percentile of unsorted samples, q in (0, 1].
double percentile(std::vector<double> samples, double q);

// Runs `warmup` untimed then `iters` timed frames, cycling through `stream`.
// Frames are timed back to back, so the window equals the sum of the
// samples. ConfigError for an empty stream, warmup < 1 or iters < 1.
BenchReport benchmark(IcaUNet<float>& model, const std::vector<FrameTriple>& stream, const ParallelPlan& plan,
                      std::int64_t warmup, std::int64_t iters);

std::string bench_csv(const BenchReport& report);
std::string bench_summary(const BenchReport& report);
std::string hardware_description();

}  // namespace icaunet
