#pragma once

#include <string>
#include <vector>

#include "vse/trainer.hpp"

namespace vse {

struct SweepRow {
  int neg_size = 0;
  bool ok = false;
  std::string error;          // set when ok is false
  RetrievalReport test_report;  // best snapshot evaluated on the test split
};

// Trains one model per negative-pool size with identical seeds and mini-batch
// size, then evaluates the best snapshot on the test split. A failed size is
// recorded with its error and the sweep continues.
std::vector<SweepRow> sweep_negsize(const PairedFeatureSet& train_set,
                                    const PairedFeatureSet& val_set,
                                    const PairedFeatureSet& test_set,
                                    const TrainConfig& base, int embed_dim,
                                    const std::vector<int>& sizes);

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path);

}  // namespace vse
