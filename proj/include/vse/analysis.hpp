#pragma once

#include <cstdint>

namespace vse {

// Probability that none of the M-1 negative candidates in a mini-batch falls
// in the top (1 - q) percentile of a fixed ranking: q^(M-1).
double miss_probability(double q, int m);

// Smallest M with q^(M-1) < eps, verified against miss_probability at the
// boundary.
int min_batch_for(double q, double eps);

struct MonteCarloEstimate {
  double probability = 0.0;
  double stderr_ = 0.0;
};

// Simulates M-1 uniform draws per trial; a trial "misses" when no draw lands
// in the top (1 - q) mass.
MonteCarloEstimate monte_carlo_miss(double q, int m, long trials,
                                    std::uint64_t seed);

}  // namespace vse
