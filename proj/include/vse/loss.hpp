#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "vse/model.hpp"

namespace vse {

enum class LossKind {
  kSumOfHinges,  // sums every violating triplet in both directions
  kMaxOfHinges,  // only the hardest negative per direction
  kWeighted,     // softmax-over-violations interpolation between the two
};

struct LossConfig {
  double margin = 0.2;
  LossKind kind = LossKind::kMaxOfHinges;
  double temperature = 1.0;  // kWeighted only
  SimilarityKind similarity = SimilarityKind::kInnerProduct;

  void validate() const;
};

// Result of a loss evaluation over a square similarity matrix with positives
// on the diagonal. Reduction over pairs is MEAN.
struct BatchLossResult {
  double total = 0.0;
  Eigen::VectorXd per_pair;
  std::vector<int> hardest_caption;  // argmax negative per pair, MH only
  std::vector<int> hardest_image;
  Eigen::MatrixXd grad_similarity;  // d(total)/dS
};

BatchLossResult sh_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                        double margin);
BatchLossResult mh_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                        double margin);
BatchLossResult weighted_loss(const Eigen::Ref<const Eigen::MatrixXd>& s,
                              double margin, double temperature);

// Generalized batch loss where the negative candidates (the pool) need not
// coincide with the anchors receiving loss terms.
//
//   pos_scores[k]       s(i_k, c_k) for anchor k
//   cap_scores(k, j)    s(i_k, c_pool_j)
//   img_scores(k, j)    s(i_pool_j, c_k)
//   self_col[k]         pool column holding anchor k's own pair, or -1
struct TripletBatchLoss {
  double total = 0.0;
  Eigen::VectorXd per_anchor;
  Eigen::MatrixXd grad_cap_scores;
  Eigen::MatrixXd grad_img_scores;
  Eigen::VectorXd grad_pos_scores;
  std::vector<int> hardest_caption;
  std::vector<int> hardest_image;
};

TripletBatchLoss triplet_batch_loss(
    const Eigen::Ref<const Eigen::VectorXd>& pos_scores,
    const Eigen::Ref<const Eigen::MatrixXd>& cap_scores,
    const Eigen::Ref<const Eigen::MatrixXd>& img_scores,
    const std::vector<int>& self_col, const LossConfig& config);

// Full chain rule: loss value plus gradients with respect to both projection
// matrices, through similarity, the optional abs flag and normalization.
// Pool rows may overlap the anchors; self_col identifies those columns.
struct ModelGradients {
  double total = 0.0;
  Eigen::MatrixXd grad_w_img;
  Eigen::MatrixXd grad_w_cap;
};

ModelGradients loss_gradients(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::MatrixXf>& anchor_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& anchor_cap,
                              const Eigen::Ref<const Eigen::MatrixXf>& pool_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& pool_cap,
                              const std::vector<int>& self_col,
                              const LossConfig& config);

// Square case: the pool is the batch itself.
ModelGradients loss_gradients(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::MatrixXf>& batch_img,
                              const Eigen::Ref<const Eigen::MatrixXf>& batch_cap,
                              const LossConfig& config);

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

}  // namespace vse
