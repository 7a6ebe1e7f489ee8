#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace vse {

enum class SimilarityKind {
  kInnerProduct,  // f . g
  kOrder,         // -|max(0, g - f)|^2, asymmetric
};

// Linear projections from precomputed feature space into the joint
// embedding space, with optional unit-sphere normalization and an optional
// elementwise absolute value applied after normalization.
struct ProjectionModel {
  Eigen::MatrixXd w_img;  // D_phi x D
  Eigen::MatrixXd w_cap;  // D_psi x D
  bool normalize_image = true;
  bool normalize_caption = true;
  bool abs_before_similarity = false;

  int image_feature_dim() const { return static_cast<int>(w_img.rows()); }
  int caption_feature_dim() const { return static_cast<int>(w_cap.rows()); }
  int embed_dim() const { return static_cast<int>(w_img.cols()); }

  void validate() const;  // throws ConfigError on shape/finiteness violations

  // Entries uniform in [-1/sqrt(D_in), 1/sqrt(D_in)].
  static ProjectionModel random_init(int d_img, int d_cap, int d,
                                     std::uint64_t seed);
};

// Forward pass through one projection, kept around for the backward pass.
struct EmbeddingBatch {
  Eigen::MatrixXd raw;   // rows x D, before normalization
  Eigen::MatrixXd unit;  // after normalization (== raw when disabled)
  Eigen::MatrixXd out;   // after abs flag (== unit when disabled)
};

// Projects feature rows (n x D_in) through w (D_in x D). Throws ConfigError
// on dimension mismatch and DegenerateInputError when a zero-norm row meets
// normalization.
EmbeddingBatch embed_batch(const Eigen::MatrixXd& w,
                           const Eigen::Ref<const Eigen::MatrixXf>& features,
                           bool normalize, bool abs_flag);

// Propagates d(loss)/d(out) back to d(loss)/d(raw) for a batch produced by
// embed_batch with the same flags.
Eigen::MatrixXd embed_batch_backward(const EmbeddingBatch& fwd,
                                     const Eigen::MatrixXd& grad_out,
                                     bool normalize, bool abs_flag);

Eigen::MatrixXd embed_images(const ProjectionModel& model,
                             const Eigen::Ref<const Eigen::MatrixXf>& features);
Eigen::MatrixXd embed_captions(
    const ProjectionModel& model,
    const Eigen::Ref<const Eigen::MatrixXf>& features);

Eigen::VectorXd embed_image(const ProjectionModel& model,
                            const Eigen::Ref<const Eigen::VectorXf>& phi);
Eigen::VectorXd embed_caption(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::VectorXf>& psi);

double similarity(SimilarityKind kind,
                  const Eigen::Ref<const Eigen::VectorXd>& f,
                  const Eigen::Ref<const Eigen::VectorXd>& g);

// Entry (m, n) is similarity(kind, image m, caption n). Embedding rows are
// the inputs; throws ContractError on empty batches.
Eigen::MatrixXd similarity_matrix(SimilarityKind kind,
                                  const Eigen::Ref<const Eigen::MatrixXd>& f,
                                  const Eigen::Ref<const Eigen::MatrixXd>& g);

// Binary model snapshot (magic "VSES"), including the similarity kind the
// model was trained with.
void write_snapshot(const ProjectionModel& model, SimilarityKind kind,
                    const std::string& path);
struct LoadedSnapshot {
  ProjectionModel model;
  SimilarityKind kind;
};
LoadedSnapshot read_snapshot(const std::string& path);

SimilarityKind similarity_kind_from_string(const std::string& name);
std::string to_string(SimilarityKind kind);

}  // namespace vse
