#include "cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icaunet/data.hpp"
#include "icaunet/errors.hpp"
#include "icaunet/gradcheck.hpp"
#include "icaunet/ica.hpp"
#include "icaunet/montage.hpp"
#include "icaunet/run_config.hpp"
#include "icaunet/scheduler.hpp"
#include "icaunet/thread_pool.hpp"
#include "icaunet/trainer.hpp"

namespace icaunet::cli {

namespace fs = std::filesystem;

namespace {

const char* class_name(std::uint8_t cls) {
  switch (cls) {
    case kRV: return "RV";
    case kMYO: return "MYO";
    case kLV: return "LV";
    default: return "BG";
  }
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path);
  f << text;
  if (!f) throw DataError("cannot write " + path.string());
}

// ---- train ----

struct TrainArgs {
  std::string config, data, out, log;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  auto config = load_run_config(a.config);
  if (!a.data.empty()) config.data_dir = a.data;
  const auto seq = config.data_dir.empty()
                       ? generate_phantom(config.phantom_seed, config.phantom_frames, config.model.extents)
                       : load_dataset(config.data_dir);
  if (!(seq.extents() == config.model.extents))
    throw DataError("dataset extents do not match the configured depth/height/width");
  IcaUNet<float> model(config.model);
  out << "training " << model.parameter_count() << " parameters for " << config.steps << " steps on "
      << seq.length() << " frames\n";

  std::ofstream log;
  if (!a.log.empty()) {
    if (fs::path(a.log).has_parent_path()) fs::create_directories(fs::path(a.log).parent_path());
    log.open(a.log);
    if (!log) throw DataError("cannot write " + a.log);
    log << train_log_header();
  }
  const auto start = std::chrono::steady_clock::now();
  train(model, seq, config, [&](const TrainLogRow& row) {
    if (log.is_open()) log << train_log_row(row) << std::flush;
    out << "step " << row.step << " total " << fixed(row.losses.total) << " ce_sum " << fixed(row.losses.ce_sum)
        << " l_ica " << fixed(row.losses.l_ica) << " dice_train " << fixed(row.dice_train) << "\n";
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  save_checkpoint(a.out, model);

  ThreadPool pool(default_worker_count(1));
  const auto ev = evaluate_sequence(model, seq, &pool);
  out << "final dice";
  for (std::size_t c = 0; c < ev.mean_dice.size(); ++c)
    out << " " << class_name(static_cast<std::uint8_t>(c + 1)) << "=" << fixed(ev.mean_dice[c]);
  out << "\ntrain seconds " << fixed(secs, 1) << "\ncheckpoint " << a.out << "\n";
  return kOk;
}

// ---- infer ----

struct InferArgs {
  std::string ckpt, input, output;
  bool png = false;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  auto model = load_checkpoint(a.ckpt);
  const auto seq = load_dataset(a.input);
  if (!(seq.extents() == model->config().extents))
    throw DataError("input extents (" + std::to_string(seq.extents().d) + "," + std::to_string(seq.extents().h) + "," +
                    std::to_string(seq.extents().w) + ") do not match the checkpoint");
  ThreadPool pool(default_worker_count(1));
  const auto ev = evaluate_sequence(*model, seq, &pool);

  const fs::path dir(a.output);
  fs::create_directories(dir / "labels");
  std::string csv = metrics_csv_header();
  for (std::size_t t = 0; t < ev.predictions.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "t%04zu.icav", t);
    save_labels((dir / "labels" / name).string(), ev.predictions[t]);
    csv += metrics_csv_rows(static_cast<std::int64_t>(t), ev.per_frame[t]);
  }
  write_text(dir / "metrics.csv", csv);
  if (a.png) write_png((dir / "montage.png").string(), render_montage(ev.predictions, seq.frames));

  out << "wrote " << ev.predictions.size() << " label volumes to " << (dir / "labels").string() << "\nmean dice";
  for (std::size_t c = 0; c < ev.mean_dice.size(); ++c)
    out << " " << class_name(static_cast<std::uint8_t>(c + 1)) << "=" << fixed(ev.mean_dice[c]);
  out << "\n";
  return kOk;
}

// ---- bench ----

struct BenchArgs {
  std::string ckpt, config, mode = "dense", csv;
  std::int64_t frames = 30, warmup = 3, groups = 1;
  std::size_t workers = 0;
  std::uint64_t seed = 1;
  bool verify = false;
};

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double d = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d = std::max(d, std::abs(double(a.data()[i]) - b.data()[i]));
  return d;
}

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
  ParallelPlan plan{parse_plan_mode(a.mode), a.groups, a.workers ? a.workers : default_worker_count(1)};
  std::unique_ptr<IcaUNet<float>> model;
  if (!a.ckpt.empty()) {
    model = load_checkpoint(a.ckpt);
  } else {
    ModelConfig config = a.config.empty() ? ModelConfig{} : load_run_config(a.config).model;
    config.groups = a.groups;
    if (a.groups < 1 || config.m % a.groups != 0)
      throw ConfigError("--groups " + std::to_string(a.groups) + " must divide m = " + std::to_string(config.m));
    model = std::make_unique<IcaUNet<float>>(config);
  }
  plan.validate(model->config());
  if (a.frames < 1) throw ConfigError("--frames must be >= 1");

  const auto seq = generate_phantom(a.seed, std::clamp<std::int64_t>(a.frames, 3, 12), model->config().extents);
  std::vector<FrameTriple> stream;
  for (const auto& idx : iterate_triples(seq.length(), false)) stream.push_back(make_triple(seq, idx));

  int code = kOk;
  if (a.verify) {
    // Reference: one worker, no pool.
    const auto& t = stream.front();
    auto run = [&](ThreadPool* pool) {
      if (plan.mode == PlanMode::grouped) return grouped_inference(*model, t.prev, t.centre, t.next, plan, pool);
      NoGradGuard no_grad;
      return model->forward(t.prev, t.centre, t.next, false, pool);
    };
    const auto reference = run(nullptr);
    std::vector<std::size_t> counts{2, 4};
    if (plan.workers > 1 && plan.workers != 2 && plan.workers != 4) counts.push_back(plan.workers);
    for (auto workers : counts) {
      ThreadPool pool(workers);
      const auto got = run(&pool);
      double diff = 0;
      for (std::size_t k = 0; k < got.logits.size(); ++k)
        diff = std::max(diff, max_abs_diff(got.logits[k], reference.logits[k]));
      const bool ok = diff <= 1e-6;
      out << "verify workers=" << workers << " vs 1: max_abs_diff=" << diff << (ok ? " PASS" : " FAIL") << "\n";
      if (!ok) code = kVerifyFailed;
    }
  }

  const auto report = benchmark(*model, stream, plan, a.warmup, a.frames);
  out << bench_summary(report) << "\n";
  out << "throughput target " << BenchReport::kTargetFps << " fps: " << (report.meets_throughput() ? "PASS" : "FAIL")
      << "\nlatency target " << BenchReport::kTargetLatencyMs << " ms (p99): " << (report.meets_latency() ? "PASS" : "FAIL")
      << "\n";
  if (plan.mode == PlanMode::grouped && plan.workers > 1) {
    ParallelPlan serial = plan;
    serial.workers = 1;
    const auto base = benchmark(*model, stream, serial, a.warmup, a.frames);
    out << "speedup vs 1 worker: " << fixed(report.throughput_fps / base.throughput_fps, 3) << "\n";
  }
  if (!a.csv.empty()) write_text(a.csv, bench_csv(report));
  if (code != kOk) err << "verification failed: worker counts disagree\n";
  return code;
}

// ---- ica-demo ----

struct IcaArgs {
  std::string input, out, patch = "4";
  std::int64_t components = 8, stride = 0;
  std::uint64_t seed = 0;
};

Extents3 parse_patch(const std::string& text, const Extents3& volume) {
  std::vector<std::int64_t> v;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      v.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ConfigError("--patch: expected p or pd,ph,pw, got '" + text + "'");
    }
  }
  Extents3 p;
  if (v.size() == 1)
    p = {std::min(v[0], volume.d), v[0], v[0]};
  else if (v.size() == 3)
    p = {v[0], v[1], v[2]};
  else
    throw ConfigError("--patch: expected p or pd,ph,pw, got '" + text + "'");
  if (p.d < 1 || p.h < 1 || p.w < 1) throw ConfigError("--patch extents must be positive");
  if (p.d > volume.d || p.h > volume.h || p.w > volume.w) throw DataError("--patch does not fit the volume");
  return p;
}

int cmd_ica_demo(const IcaArgs& a, std::ostream& out) {
  const auto raw = load_volume(a.input);
  if (raw.dtype != VolumeDtype::f32) throw DataError("ica-demo needs an f32 volume");
  const auto vol = volume_to_tensor(raw);
  const auto& s = vol.shape();
  if (s.size() < 3) throw DataError("ica-demo needs a volume of rank >= 3");
  for (std::size_t i = 0; i + 3 < s.size(); ++i)
    if (s[i] != 1) throw DataError("ica-demo needs a single-channel volume");
  const Extents3 e{s[s.size() - 3], s[s.size() - 2], s[s.size() - 1]};
  const Extents3 patch = parse_patch(a.patch, e);
  const std::int64_t stride = a.stride > 0 ? a.stride : 1;
  const std::int64_t len = patch.voxels();
  if (a.components < 1 || a.components > len)
    throw ConfigError("--components must be in [1, " + std::to_string(len) + "]");

  Tensor64 image(Shape{e.d, e.h, e.w});
  std::copy(vol.data().begin(), vol.data().end(), image.mutable_data().begin());
  const auto patches = ica::extract_patches(image, patch, stride);
  ica::FastIcaOptions options;
  options.seed = a.seed;
  const auto model = ica::fit(patches.rows, a.components, options);
  const Eigen::MatrixXd recon = ica::reconstruct(model, ica::unmix(model, patches.rows));
  const double error = ica::relative_error(patches.rows, recon);

  const fs::path dir(a.out);
  fs::create_directories(dir);
  Tensor basis(Shape{model.components, patch.d, patch.h, patch.w});
  auto bd = basis.mutable_data();
  for (std::int64_t c = 0; c < model.components; ++c)
    for (std::int64_t i = 0; i < len; ++i) bd[static_cast<std::size_t>(c * len + i)] = static_cast<float>(model.A(i, c));
  save_volume((dir / "basis.icav").string(), basis);
  ica::PatchMatrix rebuilt = patches;
  rebuilt.rows = recon;
  const auto assembled = ica::assemble_patches(rebuilt);
  Tensor recon_volume(Shape{e.d, e.h, e.w});
  auto rd = recon_volume.mutable_data();
  for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = static_cast<float>(assembled.data()[i]);
  save_volume((dir / "reconstruction.icav").string(), recon_volume);

  char line[160];
  std::snprintf(line, sizeof line, "relative_reconstruction_error=%.6e components=%lld patch_len=%lld patches=%lld\n",
                error, static_cast<long long>(model.components), static_cast<long long>(len),
                static_cast<long long>(patches.rows.rows()));
  out << line;
  if (!model.converged) out << "note: FastICA stopped after " << model.iterations << " iterations without converging\n";
  return kOk;
}

// ---- gradcheck ----

int cmd_gradcheck(const std::string& scale, const std::string& corrupt, std::ostream& out, std::ostream& err) {
  GradcheckOptions options;
  options.scale = parse_gradcheck_scale(scale);
  options.corrupt = corrupt;
  std::vector<std::string> failed;
  const auto start = std::chrono::steady_clock::now();
  run_gradcheck(options, [&](const GradcheckEntry& e) {
    char line[160];
    std::snprintf(line, sizeof line, "%-26s max_rel_err=%.3e tol=%.0e %s\n", e.name.c_str(), e.max_rel_error,
                  e.tolerance, e.passed() ? "PASS" : "FAIL");
    out << line << std::flush;
    if (!e.passed()) failed.push_back(e.name);
  });
  out << "gradcheck seconds " << fixed(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 2)
      << "\n";
  if (failed.empty()) return kOk;
  for (const auto& name : failed) err << "gradient check failed: " << name << "\n";
  return kVerifyFailed;
}

// ---- phantom ----

struct PhantomArgs {
  std::string out;
  std::int64_t frames = 12, depth = 8, height = 64, width = 64;
  std::uint64_t seed = 1;
  std::vector<double> spacing{1.0, 1.0, 1.0};
};

int cmd_phantom(const PhantomArgs& a, std::ostream& out) {
  if (a.spacing.size() != 3) throw ConfigError("--spacing needs three values");
  const auto seq = generate_phantom(a.seed, a.frames, {a.depth, a.height, a.width},
                                    {a.spacing[0], a.spacing[1], a.spacing[2]});
  save_dataset(a.out, seq);
  out << "wrote " << seq.length() << " frames of (" << a.depth << "," << a.height << "," << a.width << ") to " << a.out
      << "\n";
  write_png((fs::path(a.out) / "montage.png").string(), render_montage(seq.labels, seq.frames));
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ICA-UNet: cine segmentation with an ICA-derived backbone"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train on a dataset directory or the configured phantom");
  train_cmd->add_option("--config", train_args.config, "Run configuration (key = value)")->required();
  train_cmd->add_option("--data", train_args.data, "Dataset directory (overrides data_dir)");
  train_cmd->add_option("--out", train_args.out, "Checkpoint path")->required();
  train_cmd->add_option("--log", train_args.log, "Training log CSV");

  InferArgs infer_args;
  auto* infer_cmd = app.add_subcommand("infer", "Predict label volumes for a dataset directory");
  infer_cmd->add_option("--ckpt", infer_args.ckpt, "Checkpoint path")->required();
  infer_cmd->add_option("--input", infer_args.input, "Dataset directory")->required();
  infer_cmd->add_option("--output", infer_args.output, "Output directory")->required();
  infer_cmd->add_flag("--png", infer_args.png, "Also write a slice montage");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Measure throughput and latency");
  bench_cmd->add_option("--ckpt", bench_args.ckpt, "Checkpoint (otherwise a freshly initialised model)");
  bench_cmd->add_option("--config", bench_args.config, "Run configuration supplying the model shape");
  bench_cmd->add_option("--frames", bench_args.frames, "Timed frames");
  bench_cmd->add_option("--warmup", bench_args.warmup, "Untimed warm-up frames");
  bench_cmd->add_option("--workers", bench_args.workers, "Worker threads (default ICAUNET_THREADS or 1)");
  bench_cmd->add_option("--groups", bench_args.groups, "Coefficient groups");
  bench_cmd->add_option("--mode", bench_args.mode, "dense or grouped");
  bench_cmd->add_option("--csv", bench_args.csv, "Report CSV path");
  bench_cmd->add_option("--seed", bench_args.seed, "Phantom seed");
  bench_cmd->add_flag("--verify", bench_args.verify, "Check that outputs do not depend on the worker count");

  IcaArgs ica_args;
  auto* ica_cmd = app.add_subcommand("ica-demo", "Patch FastICA on a volume");
  ica_cmd->add_option("--input", ica_args.input, "ICAV volume")->required();
  ica_cmd->add_option("--patch", ica_args.patch, "Patch size p or pd,ph,pw");
  ica_cmd->add_option("--components", ica_args.components, "Number of components");
  ica_cmd->add_option("--stride", ica_args.stride, "Patch stride (default 1)");
  ica_cmd->add_option("--seed", ica_args.seed, "FastICA seed");
  ica_cmd->add_option("--out", ica_args.out, "Output directory")->required();

  std::string scale = "tiny", corrupt;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every op and the tiny model");
  grad_cmd->add_option("--scale", scale, "tiny or small");
  grad_cmd->add_option("--corrupt", corrupt, "Test hook: perturb the analytic gradient of this entry")->group("");

  PhantomArgs phantom_args;
  auto* phantom_cmd = app.add_subcommand("phantom", "Write a synthetic cine phantom dataset");
  phantom_cmd->add_option("--out", phantom_args.out, "Dataset directory")->required();
  phantom_cmd->add_option("--frames", phantom_args.frames, "Time frames");
  phantom_cmd->add_option("--depth", phantom_args.depth, "Slices");
  phantom_cmd->add_option("--height", phantom_args.height, "Rows");
  phantom_cmd->add_option("--width", phantom_args.width, "Columns");
  phantom_cmd->add_option("--seed", phantom_args.seed, "Seed");
  phantom_cmd->add_option("--spacing", phantom_args.spacing, "Voxel spacing z y x in mm")->expected(3);

  auto* config_cmd = app.add_subcommand("default-config", "Print a run configuration with every default");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*infer_cmd) return cmd_infer(infer_args, out);
    if (*bench_cmd) return cmd_bench(bench_args, out, err);
    if (*ica_cmd) return cmd_ica_demo(ica_args, out);
    if (*grad_cmd) return cmd_gradcheck(scale, corrupt, out, err);
    if (*phantom_cmd) return cmd_phantom(phantom_args, out);
    if (*config_cmd) {
      out << default_run_config_text();
      return kOk;
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericsError& e) {
    err << "numerics error: " << e.what() << "\n";
    return kVerifyFailed;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kDataError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kDataError;
  }
  return kConfigError;
}

}  // namespace icaunet::cli
