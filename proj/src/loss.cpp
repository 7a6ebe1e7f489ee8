#include "vse/loss.hpp"

#include <algorithm>
#include <cmath>

#include "vse/errors.hpp"

namespace vse {

void LossConfig::validate() const {
  if (margin < 0.0 || !std::isfinite(margin)) {
    throw ConfigError("margin must be finite and >= 0");
  }
  if (kind == LossKind::kWeighted &&
      (!(temperature > 0.0) || !std::isfinite(temperature))) {
    throw ConfigError("temperature must be finite and > 0");
  }
}

namespace {

// One direction (caption or image) for a single anchor. Writes gradient
// coefficients for the unreduced loss into grad_row / grad_pos; the caller
// applies the 1/n reduction afterwards.
struct DirectionResult {
  double loss = 0.0;
  int hardest = -1;
};

DirectionResult hinge_direction(
    const Eigen::Ref<const Eigen::MatrixXd>& score_matrix, Eigen::Index k,
    double pos, int self, const LossConfig& cfg, Eigen::MatrixXd& grad_matrix,
    double& grad_pos) {
  const auto scores = score_matrix.row(k);
  auto grad_row = grad_matrix.row(k);
  const Eigen::Index p = scores.size();
  DirectionResult res;

  if (cfg.kind == LossKind::kMaxOfHinges) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j == self) continue;
      double v = cfg.margin - pos + scores[j];
      if (v > best) {  // ties keep the lowest index
        best = v;
        res.hardest = static_cast<int>(j);
      }
    }
    if (res.hardest < 0) {
      throw ContractError("no negative candidates in pool");
    }
    if (best > 0.0) {
      res.loss = best;
      grad_row[res.hardest] += 1.0;
      grad_pos -= 1.0;
    }
    return res;
  }

  if (cfg.kind == LossKind::kSumOfHinges) {
    bool any = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j == self) continue;
      any = true;
      double v = cfg.margin - pos + scores[j];
      if (v > 0.0) {
        res.loss += v;
        grad_row[j] += 1.0;
        grad_pos -= 1.0;
      }
    }
    if (!any) throw ContractError("no negative candidates in pool");
    return res;
  }

  // kWeighted: softmax weights over the strictly positive violations.
  std::vector<Eigen::Index> active;
  std::vector<double> viols;
  bool any = false;
  double vmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < p; ++j) {
    if (j == self) continue;
    any = true;
    double v = cfg.margin - pos + scores[j];
    if (v > 0.0) {
      active.push_back(j);
      viols.push_back(v);
      vmax = std::max(vmax, v);
    }
  }
  if (!any) throw ContractError("no negative candidates in pool");
  if (active.empty()) return res;

  const double tau = cfg.temperature;
  double z = 0.0;
  std::vector<double> w(active.size());
  for (std::size_t a = 0; a < active.size(); ++a) {
    w[a] = std::exp((viols[a] - vmax) / tau);
    z += w[a];
  }
  for (double& wa : w) wa /= z;
  for (std::size_t a = 0; a < active.size(); ++a) {
    res.loss += w[a] * viols[a];
  }
  // d/dv_k of sum_j w_j v_j = w_k + (w_k / tau) (v_k - loss)
  for (std::size_t a = 0; a < active.size(); ++a) {
    double g = w[a] + (w[a] / tau) * (viols[a] - res.loss);
    grad_row[active[a]] += g;
    grad_pos -= g;
  }
  return res;
}

}  // namespace

TripletBatchLoss triplet_batch_loss(
    const Eigen::Ref<const Eigen::VectorXd>& pos_scores,
    const Eigen::Ref<const Eigen::MatrixXd>& cap_scores,
    const Eigen::Ref<const Eigen::MatrixXd>& img_scores,
    const std::vector<int>& self_col, const LossConfig& config) {
  config.validate();
  const Eigen::Index a = pos_scores.size();
  const Eigen::Index p = cap_scores.cols();
  if (a == 0) throw ContractError("empty anchor set");
  if (cap_scores.rows() != a || img_scores.rows() != a ||
      img_scores.cols() != p || static_cast<Eigen::Index>(self_col.size()) != a) {
    throw ContractError("triplet_batch_loss: inconsistent shapes");
  }
  if (p < 2) throw ContractError("negative pool must contain >= 2 candidates");

  TripletBatchLoss out;
  out.per_anchor.setZero(a);
  out.grad_cap_scores.setZero(a, p);
  out.grad_img_scores.setZero(a, p);
  out.grad_pos_scores.setZero(a);
  out.hardest_caption.assign(a, -1);
  out.hardest_image.assign(a, -1);

  for (Eigen::Index k = 0; k < a; ++k) {
    double gpos = 0.0;
    DirectionResult cap = hinge_direction(cap_scores, k, pos_scores[k],
                                          self_col[k], config,
                                          out.grad_cap_scores, gpos);
    DirectionResult img = hinge_direction(img_scores, k, pos_scores[k],
                                          self_col[k], config,
                                          out.grad_img_scores, gpos);
    out.per_anchor[k] = cap.loss + img.loss;
    out.grad_pos_scores[k] = gpos;
    out.hardest_caption[k] = cap.hardest;
    out.hardest_image[k] = img.hardest;
  }
  const double scale = 1.0 / static_cast<double>(a);
  out.total = out.per_anchor.sum() * scale;
  out.grad_cap_scores *= scale;
  out.grad_img_scores *= scale;
  out.grad_pos_scores *= scale;
  return out;
}

namespace {

BatchLossResult square_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                            const LossConfig& cfg) {
  if (s.rows() != s.cols()) {
    throw ContractError("similarity matrix must be square");
  }
  if (s.rows() < 2) {
    throw ContractError("need at least 2 pairs for a triplet loss");
  }
  const Eigen::Index n = s.rows();
  std::vector<int> self(n);
  for (Eigen::Index k = 0; k < n; ++k) self[k] = static_cast<int>(k);

  TripletBatchLoss t =
      triplet_batch_loss(s.diagonal(), s, s.transpose(), self, cfg);

  BatchLossResult res;
  res.total = t.total;
  res.per_pair = t.per_anchor;
  res.hardest_caption = std::move(t.hardest_caption);
  res.hardest_image = std::move(t.hardest_image);
  // Image-direction entry (k, j) refers to s(j, k).
  res.grad_similarity = t.grad_cap_scores + t.grad_img_scores.transpose();
  res.grad_similarity.diagonal() += t.grad_pos_scores;
  return res;
}

}  // namespace

BatchLossResult sh_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                        double margin) {
  LossConfig cfg;
  cfg.margin = margin;
  cfg.kind = LossKind::kSumOfHinges;
  return square_loss(s, cfg);
}

BatchLossResult mh_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                        double margin) {
  LossConfig cfg;
  cfg.margin = margin;
  cfg.kind = LossKind::kMaxOfHinges;
  return square_loss(s, cfg);
}

BatchLossResult weighted_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                              double margin, double temperature) {
  LossConfig cfg;
  cfg.margin = margin;
  cfg.kind = LossKind::kWeighted;
  cfg.temperature = temperature;
  return square_loss(s, cfg);
}

namespace {

// d(similarity)/d(embeddings) for a weighted sum of pairwise scores.
// weights(k, j) multiplies s(f_j, g_k) when transpose_roles, else s(f_k, g_j).
void backprop_scores(SimilarityKind kind, const Eigen::MatrixXd& queries,
                     const Eigen::MatrixXd& items,
                     const Eigen::MatrixXd& weights, Eigen::MatrixXd& grad_q,
                     Eigen::MatrixXd& grad_i, bool query_is_image) {
  if (kind == SimilarityKind::kInnerProduct) {
    grad_q.noalias() += weights * items;
    grad_i.noalias() += weights.transpose() * queries;
    return;
  }
  // order similarity s(f, g) = -|max(0, g - f)|^2, ds/df = 2r, ds/dg = -2r
  for (Eigen::Index k = 0; k < weights.rows(); ++k) {
    for (Eigen::Index j = 0; j < weights.cols(); ++j) {
      double w = weights(k, j);
      if (w == 0.0) continue;
      const auto& f = query_is_image ? queries.row(k) : items.row(j);
      const auto& g = query_is_image ? items.row(j) : queries.row(k);
      Eigen::RowVectorXd r = (g - f).cwiseMax(0.0);
      if (query_is_image) {
        grad_q.row(k) += 2.0 * w * r;
        grad_i.row(j) -= 2.0 * w * r;
      } else {
        grad_i.row(j) += 2.0 * w * r;
        grad_q.row(k) -= 2.0 * w * r;
      }
    }
  }
}

}  // namespace

ModelGradients loss_gradients(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::MatrixXf>& anchor_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& anchor_cap,
                              const Eigen::Ref<const Eigen::MatrixXf>& pool_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& pool_cap,
                              const std::vector<int>& self_col,
                              const LossConfig& config) {
  model.validate();
  config.validate();
  if (anchor_img.rows() != anchor_cap.rows()) {
    throw ContractError("anchor image/caption counts differ");
  }
  if (pool_img.rows() != pool_cap.rows()) {
    throw ContractError("pool image/caption counts differ");
  }

  EmbeddingBatch fa = embed_batch(model.w_img, anchor_img,
                                  model.normalize_image,
                                  model.abs_before_similarity);
  EmbeddingBatch ga = embed_batch(model.w_cap, anchor_cap,
                                  model.normalize_caption,
                                  model.abs_before_similarity);
  EmbeddingBatch fp = embed_batch(model.w_img, pool_img,
                                  model.normalize_image,
                                  model.abs_before_similarity);
  EmbeddingBatch gp = embed_batch(model.w_cap, pool_cap,
                                  model.normalize_caption,
                                  model.abs_before_similarity);

  const Eigen::Index a = fa.out.rows();
  Eigen::VectorXd pos(a);
  for (Eigen::Index k = 0; k < a; ++k) {
    pos[k] = similarity(config.similarity, fa.out.row(k).transpose(),
                        ga.out.row(k).transpose());
  }
  Eigen::MatrixXd cap_scores =
      similarity_matrix(config.similarity, fa.out, gp.out);
  // img_scores(k, j) = s(i_pool_j, c_k)
  Eigen::MatrixXd img_scores =
      similarity_matrix(config.similarity, fp.out, ga.out).transpose();

  TripletBatchLoss t =
      triplet_batch_loss(pos, cap_scores, img_scores, self_col, config);

  Eigen::MatrixXd d_fa = Eigen::MatrixXd::Zero(fa.out.rows(), fa.out.cols());
  Eigen::MatrixXd d_ga = Eigen::MatrixXd::Zero(ga.out.rows(), ga.out.cols());
  Eigen::MatrixXd d_fp = Eigen::MatrixXd::Zero(fp.out.rows(), fp.out.cols());
  Eigen::MatrixXd d_gp = Eigen::MatrixXd::Zero(gp.out.rows(), gp.out.cols());

  // caption direction: queries are anchor images, items are pool captions
  backprop_scores(config.similarity, fa.out, gp.out, t.grad_cap_scores, d_fa,
                  d_gp, /*query_is_image=*/true);
  // image direction: queries are anchor captions, items are pool images
  backprop_scores(config.similarity, ga.out, fp.out, t.grad_img_scores, d_ga,
                  d_fp, /*query_is_image=*/false);
  // positive scores: anchor image k with anchor caption k
  for (Eigen::Index k = 0; k < a; ++k) {
    double w = t.grad_pos_scores[k];
    if (w == 0.0) continue;
    if (config.similarity == SimilarityKind::kInnerProduct) {
      d_fa.row(k) += w * ga.out.row(k);
      d_ga.row(k) += w * fa.out.row(k);
    } else {
      Eigen::RowVectorXd r = (ga.out.row(k) - fa.out.row(k)).cwiseMax(0.0);
      d_fa.row(k) += 2.0 * w * r;
      d_ga.row(k) -= 2.0 * w * r;
    }
  }

  Eigen::MatrixXd d_fa_raw = embed_batch_backward(
      fa, d_fa, model.normalize_image, model.abs_before_similarity);
  Eigen::MatrixXd d_ga_raw = embed_batch_backward(
      ga, d_ga, model.normalize_caption, model.abs_before_similarity);
  Eigen::MatrixXd d_fp_raw = embed_batch_backward(
      fp, d_fp, model.normalize_image, model.abs_before_similarity);
  Eigen::MatrixXd d_gp_raw = embed_batch_backward(
      gp, d_gp, model.normalize_caption, model.abs_before_similarity);

  ModelGradients out;
  out.total = t.total;
  out.grad_w_img = anchor_img.cast<double>().transpose() * d_fa_raw +
                   pool_img.cast<double>().transpose() * d_fp_raw;
  out.grad_w_cap = anchor_cap.cast<double>().transpose() * d_ga_raw +
                   pool_cap.cast<double>().transpose() * d_gp_raw;
  return out;
}

ModelGradients loss_gradients(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::MatrixXf>& batch_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& batch_cap,
                              const LossConfig& config) {
  std::vector<int> self(batch_img.rows());
  for (std::size_t k = 0; k < self.size(); ++k) self[k] = static_cast<int>(k);
  return loss_gradients(model, batch_img, batch_cap, batch_img, batch_cap,
                        self, config);
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "sh") return LossKind::kSumOfHinges;
  if (name == "mh") return LossKind::kMaxOfHinges;
  if (name == "weighted") return LossKind::kWeighted;
  throw ConfigError("unknown loss kind: " + name);
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSumOfHinges:
      return "sh";
    case LossKind::kMaxOfHinges:
      return "mh";
    case LossKind::kWeighted:
      return "weighted";
  }
  return "?";
}

}  // namespace vse
