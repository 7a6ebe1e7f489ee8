#include "vse/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <unordered_map>

#include "vse/errors.hpp"

namespace vse {

void TrainConfig::validate() const {
  loss.validate();
  sampler.validate();
  schedule.validate();
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (curriculum_switch_epoch &&
      (*curriculum_switch_epoch < 1 ||
       *curriculum_switch_epoch >= schedule.total_epochs)) {
    throw ConfigError("curriculum_switch_epoch must lie in [1, total_epochs)");
  }
}

LossKind apply_curriculum(const TrainConfig& config, int epoch) {
  if (config.curriculum_switch_epoch && epoch < *config.curriculum_switch_epoch) {
    return LossKind::kSumOfHinges;
  }
  return config.loss.kind;
}

namespace {

Eigen::MatrixXf gather_rows(const Eigen::MatrixXf& src,
                            const std::vector<int>& rows) {
  Eigen::MatrixXf out(rows.size(), src.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = src.row(rows[i]);
  }
  return out;
}

}  // namespace

TrainResult train(const PairedFeatureSet& train_set,
                  const PairedFeatureSet& val_set, ProjectionModel model,
                  const TrainConfig& config) {
  config.validate();
  model.validate();
  train_set.validate();
  val_set.validate();
  if (val_set.n_images() < 2) {
    throw ConfigError("validation split needs >= 2 images");
  }

  const int n_pairs = train_set.n_pairs();
  const int cpi = train_set.cpi;

  AdamState state_img(model.w_img.rows(), model.w_img.cols(), config.adam);
  AdamState state_cap(model.w_cap.rows(), model.w_cap.cols(), config.adam);

  EvalProtocol val_protocol;
  val_protocol.cpi = val_set.cpi;

  TrainResult result;
  for (int epoch = 0; epoch < config.schedule.total_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at(config.schedule, epoch);

    LossConfig step_loss = config.loss;
    step_loss.kind = apply_curriculum(config, epoch);

    double loss_sum = 0.0;
    long steps = 0;
    for (const StepSample& step : epoch_plan(n_pairs, config.sampler, epoch)) {
      std::vector<int> anchor_img_rows(step.anchors.size());
      std::vector<int> pool_img_rows(step.pool.size());
      for (std::size_t i = 0; i < step.anchors.size(); ++i) {
        anchor_img_rows[i] = step.anchors[i] / cpi;
      }
      std::unordered_map<int, int> pool_pos;
      for (std::size_t j = 0; j < step.pool.size(); ++j) {
        pool_img_rows[j] = step.pool[j] / cpi;
        pool_pos.emplace(step.pool[j], static_cast<int>(j));
      }
      std::vector<int> self_col(step.anchors.size(), -1);
      for (std::size_t i = 0; i < step.anchors.size(); ++i) {
        auto it = pool_pos.find(step.anchors[i]);
        if (it != pool_pos.end()) self_col[i] = it->second;
      }

      ModelGradients grads = loss_gradients(
          model, gather_rows(train_set.image_features, anchor_img_rows),
          gather_rows(train_set.caption_features, step.anchors),
          gather_rows(train_set.image_features, pool_img_rows),
          gather_rows(train_set.caption_features, step.pool), self_col,
          step_loss);
      adam_step(state_img, model.w_img, grads.grad_w_img, lr);
      adam_step(state_cap, model.w_cap, grads.grad_w_cap, lr);
      loss_sum += grads.total;
      ++steps;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    rec.lr = lr;

    const bool last = epoch + 1 == config.schedule.total_epochs;
    if ((epoch + 1) % config.eval_every == 0 || last) {
      rec.validation = evaluate(model, config.loss.similarity,
                                val_set.image_features,
                                val_set.caption_features, val_protocol,
                                config.threads);
      rec.has_validation = true;
      if (rec.validation.rsum > result.best.rsum || result.best.epoch < 0) {
        result.best.epoch = epoch;
        result.best.model = model;
        result.best.report = rec.validation;
        result.best.rsum = rec.validation.rsum;
      }
    }

    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.trace.push_back(rec);
  }
  return result;
}

void write_trace_csv(const TrainingTrace& trace, const std::string& path,
                     bool include_timing) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open trace CSV for writing: " + path);
  out << "epoch,train_loss,r1_cap,r5_cap,r10_cap,r1_img,r5_img,r10_img,"
         "medr_cap,medr_img,meanr_cap,meanr_img,rsum,lr,seconds\n";
  char buf[512];
  for (const EpochRecord& r : trace) {
    const auto& c = r.validation.caption_retrieval;
    const auto& i = r.validation.image_retrieval;
    std::snprintf(buf, sizeof(buf),
                  "%d,%.10g,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.6f,"
                  "%.6f,%.6f,%.8g,%.3f\n",
                  r.epoch, r.train_loss, c.r1, c.r5, c.r10, i.r1, i.r5, i.r10,
                  c.med_r, i.med_r, c.mean_r, i.mean_r, r.validation.rsum,
                  r.lr, include_timing ? r.seconds : 0.0);
    out << buf;
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace vse
