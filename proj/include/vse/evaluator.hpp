#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vse/model.hpp"

namespace vse {

struct DirectionReport {
  double r1 = 0.0;  // percentages in [0, 100]
  double r5 = 0.0;
  double r10 = 0.0;
  double med_r = 0.0;
  double mean_r = 0.0;
};

struct RetrievalReport {
  DirectionReport caption_retrieval;  // image queries caption corpus
  DirectionReport image_retrieval;    // caption queries image corpus
  double rsum = 0.0;
};

struct EvalProtocol {
  int cpi = 5;        // captions per image; caption block j*cpi.. belongs to j
  int folds = 1;
  int fold_size = 0;  // required when folds > 1

  void validate() const;
};

// Rank of the best-scoring positive. rank(p) counts strictly greater scores,
// so equal scores do not worsen the rank.
int rank_of_positive(const std::vector<double>& scores,
                     const std::vector<int>& positive_indices);

RetrievalReport evaluate(const ProjectionModel& model, SimilarityKind kind,
                         const Eigen::Ref<const Eigen::MatrixXf>& images,
                         const Eigen::Ref<const Eigen::MatrixXf>& captions,
                         const EvalProtocol& protocol, int threads = 1);

// Contiguous folds evaluated independently; every report field is averaged.
RetrievalReport evaluate_folds(const ProjectionModel& model,
                               SimilarityKind kind,
                               const Eigen::Ref<const Eigen::MatrixXf>& images,
                               const Eigen::Ref<const Eigen::MatrixXf>& captions,
                               const EvalProtocol& protocol, int threads = 1);

// Ranks for both directions computed from a precomputed score matrix
// (rows = images, cols = captions); shared by evaluate and the tests' oracle.
struct RankLists {
  std::vector<int> caption_ranks;  // one per image query
  std::vector<int> image_ranks;    // one per caption query
};
RankLists rank_all(const Eigen::Ref<const Eigen::MatrixXd>& scores, int cpi,
                   int threads = 1);

RetrievalReport report_from_ranks(const RankLists& ranks);

}  // namespace vse
