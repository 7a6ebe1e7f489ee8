#pragma once

#include <Eigen/Dense>

namespace vse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment accumulators for one parameter tensor.
struct AdamState {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  long t = 0;
  AdamConfig config;

  explicit AdamState(Eigen::Index rows, Eigen::Index cols,
                     AdamConfig cfg = {})
      : m(Eigen::MatrixXd::Zero(rows, cols)),
        v(Eigen::MatrixXd::Zero(rows, cols)),
        config(cfg) {}
};

// Bias-corrected Adam update. Refuses the step (params and state untouched)
// when grads contain non-finite entries; throws NumericError.
void adam_step(AdamState& state, Eigen::MatrixXd& params,
               const Eigen::Ref<const Eigen::MatrixXd>& grads, double lr);

// Two-phase schedule: base_lr until drop_epoch, then base_lr / drop_factor.
struct LrSchedule {
  double base_lr = 0.0002;
  int drop_epoch = 15;
  double drop_factor = 10.0;
  int total_epochs = 30;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, int epoch);

}  // namespace vse
