#include "icaunet/trainer.hpp"

#include <cmath>
#include <sstream>

#include "icaunet/thread_pool.hpp"

namespace icaunet {

Optimizer::Optimizer(std::vector<NamedTensor<float>> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m1_.emplace_back(static_cast<std::size_t>(p.tensor->numel()), 0.0f);
    if (config_.kind == OptimizerKind::adam) m2_.emplace_back(static_cast<std::size_t>(p.tensor->numel()), 0.0f);
  }
}

void Optimizer::step() {
  ++t_;
  double scale = 1.0;
  if (config_.grad_clip > 0) {
    double norm2 = 0.0;
    for (const auto& p : params_)
      if (p.tensor->has_grad())
        for (float g : p.tensor->grad()) norm2 += static_cast<double>(g) * g;
    const double norm = std::sqrt(norm2);
    if (norm > config_.grad_clip) scale = config_.grad_clip / norm;
  }
  const auto lr = static_cast<float>(config_.learning_rate);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i].tensor;
    if (!p.has_grad()) continue;
    auto data = p.mutable_data();
    auto grad = p.grad();
    auto& v = m1_[i];
    if (config_.kind == OptimizerKind::sgd) {
      const auto mu = static_cast<float>(config_.momentum);
      for (std::size_t j = 0; j < data.size(); ++j) {
        v[j] = mu * v[j] + static_cast<float>(scale) * grad[j];
        data[j] -= lr * v[j];
      }
    } else {
      auto& s = m2_[i];
      const auto b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
      const float c1 = 1.0f - static_cast<float>(std::pow(config_.beta1, static_cast<double>(t_)));
      const float c2 = 1.0f - static_cast<float>(std::pow(config_.beta2, static_cast<double>(t_)));
      const auto eps = static_cast<float>(config_.epsilon);
      for (std::size_t j = 0; j < data.size(); ++j) {
        const float g = static_cast<float>(scale) * grad[j];
        v[j] = b1 * v[j] + (1.0f - b1) * g;
        s[j] = b2 * s[j] + (1.0f - b2) * g * g;
        data[j] -= lr * (v[j] / c1) / (std::sqrt(s[j] / c2) + eps);
      }
    }
  }
}

namespace {

double mean_foreground_dice(const LabelVolume& pred, const LabelVolume& gt, std::int64_t classes) {
  double acc = 0.0;
  for (std::int64_t c = 1; c < classes; ++c) acc += dice_score(pred, gt, static_cast<std::uint8_t>(c));
  return acc / static_cast<double>(classes - 1);
}

}  // namespace

StepLosses train_step(IcaUNet<float>& model, Optimizer& optimizer, const FrameTriple& triple,
                      const LossWeights& weights, const MixFn<float>& mix, double* dice_out) {
  model.zero_grad();
  auto out = model.forward(triple.prev, triple.centre, triple.next, true);
  auto loss = loss_total(out, *triple.labels, weights, triple.centre, mix);
  StepLosses s;
  s.total = loss.total.item();
  for (const auto& ce : loss.cross_entropy) s.ce_sum += ce.item();
  s.l_ica = loss.ica.total.item();
  if (!std::isfinite(s.total)) throw NumericsError("non-finite training loss");
  if (dice_out) *dice_out = mean_foreground_dice(predict_labels(out.logits.back()), *triple.labels,
                                                 model.config().num_classes);
  loss.total.backward();
  optimizer.step();
  return s;
}

TrainResult train(IcaUNet<float>& model, const VolumeSequence& seq, const RunConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_log) {
  seq.validate();
  if (!(seq.extents() == model.config().extents))
    throw DataError("training data extents do not match the model configuration");
  Optimizer optimizer(model.parameters(), config.optimizer);
  const auto mix = reconstruction_operator<float>(model.config());

  // Inputs are normalized once; the triple order is reshuffled every epoch.
  std::vector<FrameTriple> triples;
  for (const auto& idx : iterate_triples(seq.length(), false)) triples.push_back(make_triple(seq, idx));

  TrainResult result;
  std::vector<TripleIndex> order;
  std::size_t cursor = 0;
  std::uint64_t epoch = 0;
  for (std::int64_t step = 1; step <= config.steps; ++step) {
    if (cursor == order.size()) {
      order = iterate_triples(seq.length(), true, config.seed + epoch++);
      cursor = 0;
    }
    const auto& triple = triples[static_cast<std::size_t>(order[cursor++].centre)];
    const bool log_now = step % config.eval_interval == 0 || step == config.steps;
    optimizer.set_learning_rate(config.optimizer.learning_rate_at(step, config.steps));
    double dice = 0.0;
    StepLosses s;
    try {
      s = train_step(model, optimizer, triple, config.loss, mix, log_now ? &dice : nullptr);
    } catch (const NumericsError& e) {
      throw NumericsError(std::string(e.what()) + " at step " + std::to_string(step) + " (order seed " +
                          std::to_string(config.seed + epoch - 1) + ", frame " +
                          std::to_string(order[cursor - 1].centre) + ")");
    }
    result.history.push_back(s);
    if (log_now) {
      TrainLogRow row{step, s, dice};
      result.log.push_back(row);
      if (on_log) on_log(row);
    }
  }
  return result;
}

std::string train_log_header() { return "step,total,ce_sum,l_ica,dice_train\n"; }

std::string train_log_row(const TrainLogRow& row) {
  std::ostringstream o;
  o.precision(8);
  o << row.step << ',' << row.losses.total << ',' << row.losses.ce_sum << ',' << row.losses.l_ica << ','
    << row.dice_train << '\n';
  return o.str();
}

SequenceEvaluation evaluate_sequence(IcaUNet<float>& model, const VolumeSequence& seq, ThreadPool* pool) {
  seq.validate();
  NoGradGuard no_grad;
  SequenceEvaluation ev;
  const std::int64_t classes = model.config().num_classes;
  ev.mean_dice.assign(static_cast<std::size_t>(classes - 1), 0.0);
  for (const auto& idx : iterate_triples(seq.length(), false)) {
    const auto triple = make_triple(seq, idx);
    auto out = model.forward(triple.prev, triple.centre, triple.next, false, pool);
    ev.predictions.push_back(predict_labels(out.logits.back()));
    ev.per_frame.push_back(evaluate_frame(ev.predictions.back(), *triple.labels, seq.spacing, classes));
    for (const auto& m : ev.per_frame.back()) ev.mean_dice[m.cls - 1u] += m.dice;
  }
  for (auto& d : ev.mean_dice) d /= static_cast<double>(seq.length());
  return ev;
}

}  // namespace icaunet
