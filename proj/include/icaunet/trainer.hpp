#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icaunet/data.hpp"
#include "icaunet/losses.hpp"
#include "icaunet/model.hpp"
#include "icaunet/run_config.hpp"

namespace icaunet {

// Updates every trainable parameter from its accumulated gradient.
class Optimizer {
 public:
  Optimizer(std::vector<NamedTensor<float>> params, OptimizerConfig config);
  void step();
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  std::vector<NamedTensor<float>> params_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m1_, m2_;
  std::int64_t t_ = 0;
};

struct StepLosses {
  double total = 0.0;
  double ce_sum = 0.0;  // unweighted sum over levels
  double l_ica = 0.0;
};

struct TrainLogRow {
  std::int64_t step = 0;  // 1-based
  StepLosses losses;
  double dice_train = 0.0;  // mean foreground Dice of the step's level-n prediction
};

struct TrainResult {
  std::vector<StepLosses> history;  // every step
  std::vector<TrainLogRow> log;     // every eval_interval steps and the last step
};

// One training step on a triple: forward in training mode, loss_total,
// backward, optimizer update. NumericsError on a non-finite loss.
StepLosses train_step(IcaUNet<float>& model, Optimizer& optimizer, const FrameTriple& triple,
                      const LossWeights& weights, const MixFn<float>& mix, double* dice_out = nullptr);

// Cycles seeded shuffles of the sequence's triples for config.steps steps.
TrainResult train(IcaUNet<float>& model, const VolumeSequence& seq, const RunConfig& config,
                  const std::function<void(const TrainLogRow&)>& on_log = {});

std::string train_log_header();
std::string train_log_row(const TrainLogRow& row);

struct SequenceEvaluation {
  std::vector<LabelVolume> predictions;
  std::vector<std::vector<ClassMetrics>> per_frame;
  std::vector<double> mean_dice;  // per foreground class, averaged over frames
};

// Eval-mode level-n predictions for every frame of the sequence.
SequenceEvaluation evaluate_sequence(IcaUNet<float>& model, const VolumeSequence& seq, ThreadPool* pool = nullptr);

}  // namespace icaunet
