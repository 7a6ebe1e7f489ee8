#pragma once

#include <cstdint>
#include <vector>

namespace vse {

struct SamplerConfig {
  int batch_size = 128;
  int neg_pool_size = 128;
  std::uint64_t seed = 0;
  bool shuffle_each_epoch = true;

  void validate() const;
};

// One optimizer step: anchors receive loss terms, pool members serve as
// negative candidates. One list is always a subset of the other.
struct StepSample {
  std::vector<int> anchors;
  std::vector<int> pool;
};

// Partitions a seeded shuffle of [0, n) into consecutive batches and attaches
// a negative pool to each, per the configured pool size. Every index appears
// as an anchor exactly once. A trailing batch of one is merged into the
// previous step.
std::vector<StepSample> epoch_plan(int n, const SamplerConfig& config,
                                   int epoch = 0);

// Argmax over scores excluding the positive; ties break to the lowest index.
int hardest_in_pool(const std::vector<double>& scores, int positive_index);

}  // namespace vse
