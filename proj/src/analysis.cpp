#include "vse/analysis.hpp"

#include <cmath>

#include "vse/errors.hpp"
#include "vse/rng.hpp"

namespace vse {

namespace {

void check_q(double q) {
  if (!(q > 0.0) || !(q < 1.0)) throw ConfigError("q must lie in (0, 1)");
}

}  // namespace

double miss_probability(double q, int m) {
  check_q(q);
  if (m < 1) throw ConfigError("M must be >= 1");
  return std::pow(q, static_cast<double>(m - 1));
}

int min_batch_for(double q, double eps) {
  check_q(q);
  if (!(eps > 0.0) || !(eps < 1.0)) {
    throw ConfigError("eps must lie in (0, 1)");
  }
  long m = 1 + static_cast<long>(std::ceil(std::log(eps) / std::log(q)));
  if (m < 1) m = 1;
  while (m > 1 && miss_probability(q, static_cast<int>(m) - 1) < eps) --m;
  while (miss_probability(q, static_cast<int>(m)) >= eps) ++m;
  return static_cast<int>(m);
}

MonteCarloEstimate monte_carlo_miss(double q, int m, long trials,
                                    std::uint64_t seed) {
  check_q(q);
  if (m < 1) throw ConfigError("M must be >= 1");
  if (trials < 1000) throw ConfigError("need >= 1000 trials");
  Rng rng(seed);
  long misses = 0;
  for (long t = 0; t < trials; ++t) {
    bool hit = false;
    for (int d = 0; d < m - 1; ++d) {
      if (rng.next_double() >= q) {
        hit = true;
        // keep consuming draws so the stream position is trial-independent
      }
    }
    if (!hit) ++misses;
  }
  MonteCarloEstimate est;
  est.probability = static_cast<double>(misses) / static_cast<double>(trials);
  est.stderr_ = std::sqrt(est.probability * (1.0 - est.probability) /
                          static_cast<double>(trials));
  return est;
}

}  // namespace vse
