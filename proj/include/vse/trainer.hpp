#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vse/datagen.hpp"
#include "vse/evaluator.hpp"
#include "vse/loss.hpp"
#include "vse/optimizer.hpp"
#include "vse/sampler.hpp"

namespace vse {

struct TrainConfig {
  LossConfig loss;
  SamplerConfig sampler;
  LrSchedule schedule;
  AdamConfig adam;
  std::optional<int> curriculum_switch_epoch;  // SH before, configured after
  int eval_every = 1;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct Snapshot {
  int epoch = -1;
  ProjectionModel model;
  RetrievalReport report;
  double rsum = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  bool has_validation = false;
  RetrievalReport validation;
  double lr = 0.0;
  double seconds = 0.0;
};

using TrainingTrace = std::vector<EpochRecord>;

LossKind apply_curriculum(const TrainConfig& config, int epoch);

struct TrainResult {
  Snapshot best;
  TrainingTrace trace;
};

// Runs the full loop: per step embeds the StepSample, computes the configured
// loss and gradients and applies one Adam update per projection matrix.
// Validation runs every eval_every epochs and on the last epoch; the snapshot
// with maximal recall-sum wins (ties go to the earliest epoch).
TrainResult train(const PairedFeatureSet& train_set,
                  const PairedFeatureSet& val_set, ProjectionModel model,
                  const TrainConfig& config);

// Trace CSV with the fixed column set. include_timing=false writes zeros in
// the seconds column so repeated runs are byte-identical.
void write_trace_csv(const TrainingTrace& trace, const std::string& path,
                     bool include_timing);

}  // namespace vse
