#include "icaunet/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <set>
#include <sstream>

#include "icaunet/key_value.hpp"

namespace icaunet {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "n", "m", "u", "base_channels", "stem_channels", "corr_max_disp", "num_classes", "depth", "height", "width",
      "model_seed", "leaky_slope", "lambda_s", "lambda_i", "lambda_r", "alpha_neg", "alpha_k", "beta",
      "optimizer", "learning_rate", "lr_schedule", "momentum", "adam_beta1", "adam_beta2", "adam_epsilon", "grad_clip", "steps",
      "eval_interval", "seed", "phantom_frames", "phantom_seed", "data_dir", "plan_mode", "plan_groups",
      "workers"};
  return keys;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream o;
  o.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) o << (i ? "," : "") << v[i];
  return o.str();
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    KeyValueMap one;
    one[key] = {item, 0};
    out.push_back(kv_real(one, key));
  }
  return out;
}

}  // namespace

double OptimizerConfig::learning_rate_at(std::int64_t step, std::int64_t total) const {
  if (schedule == LrSchedule::constant || total <= 1) return learning_rate;
  const double progress = static_cast<double>(step - 1) / static_cast<double>(total - 1);
  return learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void RunConfig::validate() const {
  model.validate();
  loss.validate(model.n);
  if (!(optimizer.learning_rate > 0)) throw ConfigError("learning_rate must be positive");
  if (optimizer.momentum < 0 || optimizer.momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
  if (optimizer.grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (eval_interval < 1) throw ConfigError("eval_interval must be >= 1");
  if (phantom_frames < 3) throw ConfigError("phantom_frames must be >= 3");
  ParallelPlan p = plan;
  p.validate(model);
}

const std::vector<std::string>& required_run_keys() {
  static const std::vector<std::string> keys = {"n", "m", "u", "depth", "height", "width", "learning_rate", "steps"};
  return keys;
}

RunConfig parse_run_config(const std::string& text) {
  const auto kv = parse_key_values(text);
  for (const auto& [key, entry] : kv)
    if (!known_keys().count(key))
      throw ConfigError("unknown key '" + key + "' (line " + std::to_string(entry.line) + ")");
  for (const auto& key : required_run_keys())
    if (!kv_has(kv, key)) throw ConfigError("missing required key '" + key + "'");

  RunConfig c;
  auto opt_int = [&](const char* key, auto& field) {
    if (kv_has(kv, key)) field = static_cast<std::remove_reference_t<decltype(field)>>(kv_int(kv, key));
  };
  auto opt_real = [&](const char* key, double& field) {
    if (kv_has(kv, key)) field = kv_real(kv, key);
  };
  c.model.n = kv_int(kv, "n");
  c.model.m = kv_int(kv, "m");
  c.model.u = kv_int(kv, "u");
  c.model.extents = {kv_int(kv, "depth"), kv_int(kv, "height"), kv_int(kv, "width")};
  opt_int("base_channels", c.model.base_channels);
  opt_int("stem_channels", c.model.stem_channels);
  opt_int("corr_max_disp", c.model.corr.max_disp);
  opt_int("num_classes", c.model.num_classes);
  opt_int("model_seed", c.model.seed);
  opt_real("leaky_slope", c.model.leaky_slope);

  c.loss = LossWeights::defaults(c.model.n);
  opt_real("lambda_s", c.loss.lambda_s);
  opt_real("lambda_i", c.loss.lambda_i);
  opt_real("lambda_r", c.loss.lambda_r);
  opt_real("alpha_neg", c.loss.alpha_neg);
  opt_real("beta", c.loss.beta);
  if (kv_has(kv, "alpha_k")) c.loss.alpha_k = parse_list("alpha_k", kv_string(kv, "alpha_k"));

  if (kv_has(kv, "optimizer")) {
    const auto name = kv_string(kv, "optimizer");
    if (name == "sgd")
      c.optimizer.kind = OptimizerKind::sgd;
    else if (name == "adam")
      c.optimizer.kind = OptimizerKind::adam;
    else
      throw ConfigError("key 'optimizer': expected sgd or adam, got '" + name + "'");
  }
  c.optimizer.learning_rate = kv_real(kv, "learning_rate");
  if (kv_has(kv, "lr_schedule")) {
    const auto name = kv_string(kv, "lr_schedule");
    if (name == "constant")
      c.optimizer.schedule = LrSchedule::constant;
    else if (name == "cosine")
      c.optimizer.schedule = LrSchedule::cosine;
    else
      throw ConfigError("key 'lr_schedule': expected constant or cosine, got '" + name + "'");
  }
  opt_real("momentum", c.optimizer.momentum);
  opt_real("adam_beta1", c.optimizer.beta1);
  opt_real("adam_beta2", c.optimizer.beta2);
  opt_real("adam_epsilon", c.optimizer.epsilon);
  opt_real("grad_clip", c.optimizer.grad_clip);
  c.steps = kv_int(kv, "steps");
  opt_int("eval_interval", c.eval_interval);
  opt_int("seed", c.seed);
  opt_int("phantom_frames", c.phantom_frames);
  opt_int("phantom_seed", c.phantom_seed);
  if (kv_has(kv, "data_dir")) c.data_dir = kv_string(kv, "data_dir");
  if (kv_has(kv, "plan_mode")) c.plan.mode = parse_plan_mode(kv_string(kv, "plan_mode"));
  opt_int("plan_groups", c.plan.groups);
  opt_int("workers", c.plan.workers);
  // The backbone is built with the plan's grouping.
  c.model.groups = c.plan.groups;
  try {
    c.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("depth/height/width: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string run_config_text(const RunConfig& c) {
  std::ostringstream o;
  o.precision(17);
  o << "# model\n"
    << "n = " << c.model.n << "\nm = " << c.model.m << "\nu = " << c.model.u << "\nbase_channels = "
    << c.model.base_channels << "\nstem_channels = " << c.model.stem_channels << "\ncorr_max_disp = "
    << c.model.corr.max_disp << "\nnum_classes = " << c.model.num_classes << "\ndepth = " << c.model.extents.d
    << "\nheight = " << c.model.extents.h << "\nwidth = " << c.model.extents.w << "\nmodel_seed = " << c.model.seed
    << "\nleaky_slope = " << c.model.leaky_slope << "\n\n# loss weights\n"
    << "lambda_s = " << c.loss.lambda_s << "\nlambda_i = " << c.loss.lambda_i << "\nlambda_r = " << c.loss.lambda_r
    << "\nalpha_neg = " << c.loss.alpha_neg << "\nalpha_k = " << join(c.loss.alpha_k) << "\nbeta = " << c.loss.beta
    << "\n\n# optimizer\n"
    << "optimizer = " << (c.optimizer.kind == OptimizerKind::sgd ? "sgd" : "adam")
    << "\nlearning_rate = " << c.optimizer.learning_rate
    << "\nlr_schedule = " << (c.optimizer.schedule == LrSchedule::constant ? "constant" : "cosine") << "\nmomentum = " << c.optimizer.momentum
    << "\nadam_beta1 = " << c.optimizer.beta1 << "\nadam_beta2 = " << c.optimizer.beta2
    << "\nadam_epsilon = " << c.optimizer.epsilon << "\ngrad_clip = " << c.optimizer.grad_clip
    << "\nsteps = " << c.steps << "\neval_interval = " << c.eval_interval << "\nseed = " << c.seed
    << "\n\n# data\n"
    << "phantom_frames = " << c.phantom_frames << "\nphantom_seed = " << c.phantom_seed << "\n";
  if (!c.data_dir.empty()) o << "data_dir = " << c.data_dir << "\n";
  o << "\n# parallel plan\n"
    << "plan_mode = " << to_string(c.plan.mode) << "\nplan_groups = " << c.plan.groups
    << "\nworkers = " << c.plan.workers << "\n";
  return o.str();
}

std::string default_run_config_text() { return run_config_text(RunConfig{}); }

}  // namespace icaunet
