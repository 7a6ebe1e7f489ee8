#include "vse/sampler.hpp"

#include <algorithm>
#include <numeric>

#include "vse/errors.hpp"
#include "vse/rng.hpp"

namespace vse {

void SamplerConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (neg_pool_size < 2) throw ConfigError("neg_pool_size must be >= 2");
}

std::vector<StepSample> epoch_plan(int n, const SamplerConfig& config,
                                   int epoch) {
  config.validate();
  if (n < 2) throw ConfigError("dataset too small: need >= 2 pairs");

  const int effective_epoch = config.shuffle_each_epoch ? epoch : 0;
  Rng rng(config.seed +
          0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(effective_epoch));

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);

  std::vector<StepSample> plan;
  for (int start = 0; start < n; start += config.batch_size) {
    int len = std::min(config.batch_size, n - start);
    StepSample step;
    step.anchors.assign(perm.begin() + start, perm.begin() + start + len);
    plan.push_back(std::move(step));
  }
  if (plan.size() > 1 && plan.back().anchors.size() == 1) {
    auto& prev = plan[plan.size() - 2];
    prev.anchors.push_back(plan.back().anchors[0]);
    plan.pop_back();
  }

  for (auto& step : plan) {
    const int a = static_cast<int>(step.anchors.size());
    const int pool_size = std::min(config.neg_pool_size, n);
    if (pool_size <= a) {
      step.pool = rng.sample_without_replacement(step.anchors,
                                                 static_cast<std::size_t>(pool_size));
    } else {
      // anchors plus seeded extras drawn from the rest of the epoch
      step.pool = step.anchors;
      std::vector<bool> in_batch(n, false);
      for (int idx : step.anchors) in_batch[idx] = true;
      std::vector<int> rest;
      rest.reserve(n - a);
      for (int idx : perm) {
        if (!in_batch[idx]) rest.push_back(idx);
      }
      std::vector<int> extras = rng.sample_without_replacement(
          std::move(rest), static_cast<std::size_t>(pool_size - a));
      step.pool.insert(step.pool.end(), extras.begin(), extras.end());
    }
  }
  return plan;
}

int hardest_in_pool(const std::vector<double>& scores, int positive_index) {
  if (scores.size() < 2) {
    throw ContractError("pool of length < 2 has no negatives");
  }
  if (positive_index < 0 ||
      positive_index >= static_cast<int>(scores.size())) {
    throw ContractError("positive_index out of range");
  }
  int best = -1;
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (j == positive_index) continue;
    if (best < 0 || scores[j] > scores[best]) best = j;
  }
  return best;
}

}  // namespace vse
