#pragma once

// Run configuration: a `key = value` file covering the model, the loss
// weights, the optimizer, the phantom data and the parallel plan.

#include <cstdint>
#include <string>

#include "icaunet/losses.hpp"
#include "icaunet/model.hpp"
#include "icaunet/scheduler.hpp"

namespace icaunet {

enum class OptimizerKind { sgd, adam };
enum class LrSchedule { constant, cosine };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;         // SGD
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;  // Adam
  double grad_clip = 0.0;        // global norm; 0 disables
  LrSchedule schedule = LrSchedule::constant;

  // Learning rate for 1-based `step` of `total`; cosine decays to zero.
  double learning_rate_at(std::int64_t step, std::int64_t total) const;
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss = LossWeights::defaults(3);
  OptimizerConfig optimizer;
  std::int64_t steps = 2000;
  std::int64_t eval_interval = 10;
  std::uint64_t seed = 0;  // data order and step diagnostics
  // Phantom used when no dataset directory is given.
  std::int64_t phantom_frames = 12;
  std::uint64_t phantom_seed = 1;
  std::string data_dir;
  ParallelPlan plan;

  void validate() const;
};

// Keys without a default; a file lacking one is rejected naming the key.
const std::vector<std::string>& required_run_keys();

// ConfigError naming the offending key for unknown keys, missing required
// keys and invalid values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Every key with its default value; parses back to RunConfig{}.
std::string default_run_config_text();
std::string run_config_text(const RunConfig& config);

}  // namespace icaunet
