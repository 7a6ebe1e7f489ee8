#include "vse/optimizer.hpp"

#include <cmath>
#include <string>

#include "vse/errors.hpp"

namespace vse {

void adam_step(AdamState& state, Eigen::MatrixXd& params,
               const Eigen::Ref<const Eigen::MatrixXd>& grads, double lr) {
  if (params.rows() != grads.rows() || params.cols() != grads.cols() ||
      state.m.rows() != grads.rows() || state.m.cols() != grads.cols()) {
    throw ContractError("adam_step: shape mismatch");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw ContractError("adam_step: lr must be positive and finite");
  }
  if (!grads.allFinite()) {
    throw NumericError("adam_step: non-finite gradient, step refused");
  }
  const AdamConfig& c = state.config;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  state.t += 1;
  const double m_corr = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double v_corr = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  params.array() -=
      lr * (state.m.array() / m_corr) /
      ((state.v.array() / v_corr).sqrt() + c.epsilon);
}

void LrSchedule::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be > 0");
  if (drop_factor < 1.0) throw ConfigError("drop_factor must be >= 1");
  if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (drop_epoch < 0 || drop_epoch > total_epochs) {
    throw ConfigError("drop_epoch must lie in [0, total_epochs]");
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  schedule.validate();
  if (epoch < 0 || epoch >= schedule.total_epochs) {
    throw ContractError("epoch " + std::to_string(epoch) +
                        " outside schedule range");
  }
  return epoch < schedule.drop_epoch ? schedule.base_lr
                                     : schedule.base_lr / schedule.drop_factor;
}

}  // namespace vse
