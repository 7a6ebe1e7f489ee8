#include "vse/evaluator.hpp"

#include <algorithm>
#include <functional>
#include <thread>

#include "vse/errors.hpp"

namespace vse {

void EvalProtocol::validate() const {
  if (cpi < 1) throw ConfigError("cpi must be >= 1");
  if (folds < 1) throw ConfigError("folds must be >= 1");
  if (folds > 1 && fold_size < 1) {
    throw ConfigError("fold_size must be >= 1 when folds > 1");
  }
}

int rank_of_positive(const std::vector<double>& scores,
                     const std::vector<int>& positive_indices) {
  if (positive_indices.empty()) {
    throw ContractError("rank_of_positive: empty positive set");
  }
  int best = static_cast<int>(scores.size()) + 1;
  for (int p : positive_indices) {
    if (p < 0 || p >= static_cast<int>(scores.size())) {
      throw ContractError("rank_of_positive: index out of range");
    }
    int rank = 1;
    for (double s : scores) {
      if (s > scores[p]) ++rank;
    }
    best = std::min(best, rank);
  }
  return best;
}

namespace {

// Runs fn(i) for i in [0, count); results must go to disjoint slots.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      for (int i = w; i < count; i += threads) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

DirectionReport direction_report(std::vector<int> ranks) {
  DirectionReport rep;
  const double n = static_cast<double>(ranks.size());
  int c1 = 0, c5 = 0, c10 = 0;
  long sum = 0;
  for (int r : ranks) {
    if (r <= 1) ++c1;
    if (r <= 5) ++c5;
    if (r <= 10) ++c10;
    sum += r;
  }
  rep.r1 = 100.0 * c1 / n;
  rep.r5 = 100.0 * c5 / n;
  rep.r10 = 100.0 * c10 / n;
  rep.mean_r = static_cast<double>(sum) / n;
  std::sort(ranks.begin(), ranks.end());
  const std::size_t m = ranks.size();
  rep.med_r = (m % 2 == 1)
                  ? ranks[m / 2]
                  : 0.5 * (ranks[m / 2 - 1] + ranks[m / 2]);
  return rep;
}

}  // namespace

RankLists rank_all(const Eigen::Ref<const Eigen::MatrixXd>& scores, int cpi,
                   int threads) {
  const int n_img = static_cast<int>(scores.rows());
  const int n_cap = static_cast<int>(scores.cols());
  if (n_cap != n_img * cpi) {
    throw ContractError("caption count must equal n_images * cpi");
  }
  RankLists out;
  out.caption_ranks.assign(n_img, 0);
  out.image_ranks.assign(n_cap, 0);

  parallel_for(n_img, threads, [&](int j) {
    // query image j against all captions; its cpi captions are positive
    int best = n_cap + 1;
    for (int p = j * cpi; p < (j + 1) * cpi; ++p) {
      int rank = 1;
      double sp = scores(j, p);
      for (int c = 0; c < n_cap; ++c) {
        if (scores(j, c) > sp) ++rank;
      }
      best = std::min(best, rank);
    }
    out.caption_ranks[j] = best;
  });

  parallel_for(n_cap, threads, [&](int m) {
    // query caption m against all images; image m / cpi is positive
    double sp = scores(m / cpi, m);
    int rank = 1;
    for (int i = 0; i < n_img; ++i) {
      if (scores(i, m) > sp) ++rank;
    }
    out.image_ranks[m] = rank;
  });

  return out;
}

RetrievalReport report_from_ranks(const RankLists& ranks) {
  RetrievalReport rep;
  rep.caption_retrieval = direction_report(ranks.caption_ranks);
  rep.image_retrieval = direction_report(ranks.image_ranks);
  rep.rsum = rep.caption_retrieval.r1 + rep.caption_retrieval.r5 +
             rep.caption_retrieval.r10 + rep.image_retrieval.r1 +
             rep.image_retrieval.r5 + rep.image_retrieval.r10;
  return rep;
}

RetrievalReport evaluate(const ProjectionModel& model, SimilarityKind kind,
                         const Eigen::Ref<const Eigen::MatrixXf>& images,
                         const Eigen::Ref<const Eigen::MatrixXf>& captions,
                         const EvalProtocol& protocol, int threads) {
  protocol.validate();
  if (captions.rows() != images.rows() * protocol.cpi) {
    throw ContractError("caption count must equal n_images * cpi");
  }
  Eigen::MatrixXd f = embed_images(model, images);
  Eigen::MatrixXd g = embed_captions(model, captions);
  Eigen::MatrixXd scores = similarity_matrix(kind, f, g);
  return report_from_ranks(rank_all(scores, protocol.cpi, threads));
}

RetrievalReport evaluate_folds(const ProjectionModel& model,
                               SimilarityKind kind,
                               const Eigen::Ref<const Eigen::MatrixXf>& images,
                               const Eigen::Ref<const Eigen::MatrixXf>& captions,
                               const EvalProtocol& protocol, int threads) {
  protocol.validate();
  if (protocol.folds == 1) {
    return evaluate(model, kind, images, captions, protocol, threads);
  }
  const long needed =
      static_cast<long>(protocol.folds) * protocol.fold_size;
  if (needed > images.rows()) {
    throw ContractError("folds * fold_size exceeds image count");
  }
  EvalProtocol single = protocol;
  single.folds = 1;
  single.fold_size = 0;

  RetrievalReport avg;
  for (int fold = 0; fold < protocol.folds; ++fold) {
    const int i0 = fold * protocol.fold_size;
    RetrievalReport rep = evaluate(
        model, kind, images.middleRows(i0, protocol.fold_size),
        captions.middleRows(i0 * protocol.cpi,
                            protocol.fold_size * protocol.cpi),
        single, threads);
    auto add = [](DirectionReport& acc, const DirectionReport& r) {
      acc.r1 += r.r1;
      acc.r5 += r.r5;
      acc.r10 += r.r10;
      acc.med_r += r.med_r;
      acc.mean_r += r.mean_r;
    };
    add(avg.caption_retrieval, rep.caption_retrieval);
    add(avg.image_retrieval, rep.image_retrieval);
    avg.rsum += rep.rsum;
  }
  auto scale = [&](DirectionReport& r) {
    r.r1 /= protocol.folds;
    r.r5 /= protocol.folds;
    r.r10 /= protocol.folds;
    r.med_r /= protocol.folds;
    r.mean_r /= protocol.folds;
  };
  scale(avg.caption_retrieval);
  scale(avg.image_retrieval);
  avg.rsum /= protocol.folds;
  return avg;
}

}  // namespace vse
