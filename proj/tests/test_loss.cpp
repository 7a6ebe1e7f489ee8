#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>

#include "test_util.hpp"
#include "vse/errors.hpp"
#include "vse/loss.hpp"

using namespace vse;

namespace {

Eigen::MatrixXd spec_matrix() {
  Eigen::MatrixXd s(3, 3);
  s << 0.9, 0.6, 0.7, 0.3, 0.8, 0.55, 0.2, 0.4, 0.6;
  return s;
}

// True when every hinge argument is far from its kink and, for argmax-style
// losses, the winner is clear; finite differences are unreliable otherwise.
bool kink_safe(const Eigen::MatrixXd& s, double margin, double tol) {
  const Eigen::Index n = s.rows();
  for (Eigen::Index k = 0; k < n; ++k) {
    std::vector<double> caps, imgs;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == k) continue;
      caps.push_back(margin - s(k, k) + s(k, j));
      imgs.push_back(margin - s(k, k) + s(j, k));
    }
    for (double v : caps) {
      if (std::abs(v) < tol) return false;
    }
    for (double v : imgs) {
      if (std::abs(v) < tol) return false;
    }
    auto gap_ok = [&](std::vector<double> v) {
      std::sort(v.begin(), v.end(), std::greater<double>());
      return v.size() < 2 || v[0] - v[1] > tol;
    };
    if (!gap_ok(caps) || !gap_ok(imgs)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sh_loss on the 3x3 reference matrix") {
  BatchLossResult res = sh_loss(spec_matrix(), 0.1);
  CHECK(res.per_pair(0) == doctest::Approx(0.0));
  CHECK(res.per_pair(1) == doctest::Approx(0.0));
  CHECK(res.per_pair(2) == doctest::Approx(0.25));
  CHECK(res.total == doctest::Approx(0.25 / 3.0));
  CHECK(res.total ==
        doctest::Approx(testutil::sh_oracle(spec_matrix(), 0.1)));
}

TEST_CASE("sh_loss is zero when the margin is respected everywhere") {
  Eigen::MatrixXd s(3, 3);
  s << 1.0, 0.1, 0.2, 0.15, 1.0, 0.05, 0.2, 0.1, 1.0;
  BatchLossResult res = sh_loss(s, 0.5);
  CHECK(res.total == 0.0);
  CHECK(res.grad_similarity.isZero(0.0));
}

TEST_CASE("sh_loss n=2, values frozen from the enumeration oracle") {
  Eigen::MatrixXd s(2, 2);
  s << 0.5, 0.6, 0.4, 0.7;
  // pair 1: caption 0.2-0.5+0.6=0.3, image 0.2-0.5+0.4=0.1
  // pair 2: caption 0.2-0.7+0.4=-0.1 clipped, image 0.2-0.7+0.6=0.1
  BatchLossResult res = sh_loss(s, 0.2);
  CHECK(res.per_pair(0) == doctest::Approx(0.4));
  CHECK(res.per_pair(1) == doctest::Approx(0.1));
  CHECK(res.total == doctest::Approx(testutil::sh_oracle(s, 0.2)));
  CHECK(res.total == doctest::Approx(0.25));
}

TEST_CASE("sh_loss contract errors") {
  CHECK_THROWS_AS(sh_loss(Eigen::MatrixXd::Identity(1, 1), 0.1),
                  ContractError);
  CHECK_THROWS_AS(sh_loss(Eigen::MatrixXd::Zero(2, 3), 0.1), ContractError);
  CHECK_THROWS_AS(sh_loss(Eigen::MatrixXd::Identity(2, 2), -0.5), ConfigError);
}

TEST_CASE("mh_loss on the 3x3 reference matrix") {
  BatchLossResult res = mh_loss(spec_matrix(), 0.1);
  CHECK(res.per_pair(0) == doctest::Approx(0.0));
  CHECK(res.per_pair(1) == doctest::Approx(0.0));
  CHECK(res.per_pair(2) == doctest::Approx(0.2));
  CHECK(res.total == doctest::Approx(0.2 / 3.0));
  // hardest negative image for pair 3 holds score 0.7
  CHECK(res.hardest_image[2] == 0);
  CHECK(res.hardest_image[2] != 2);
  CHECK(res.hardest_caption[2] != 2);
}

TEST_CASE("mh equals sh for n=2") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd s = testutil::random_matrix(rng, 2, 2);
    double margin = 0.5 * rng.next_double();
    CHECK(mh_loss(s, margin).total == sh_loss(s, margin).total);
  }
}

TEST_CASE("equal violations: mh = sh / (n-1) per pair") {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(5));
    const double margin = 0.1;
    const double diag = 0.5;
    const double off = 0.55;  // uniform violating score
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n, n, off);
    s.diagonal().setConstant(diag);
    BatchLossResult mh = mh_loss(s, margin);
    BatchLossResult sh = sh_loss(s, margin);
    for (int k = 0; k < n; ++k) {
      CHECK(mh.per_pair(k) ==
            doctest::Approx(sh.per_pair(k) / static_cast<double>(n - 1)));
    }
  }
}

TEST_CASE("mh <= sh on random matrices; per-pair zero iff margin satisfied") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.next_below(8));
    Eigen::MatrixXd s = testutil::random_matrix(rng, n, n);
    double margin = 0.5 * rng.next_double();
    BatchLossResult mh = mh_loss(s, margin);
    BatchLossResult sh = sh_loss(s, margin);
    CHECK(mh.total >= 0.0);
    CHECK(mh.total <= sh.total + 1e-12);
    for (int k = 0; k < n; ++k) {
      bool satisfied = true;
      for (int j = 0; j < n; ++j) {
        if (j == k) continue;
        if (s(k, k) < s(k, j) + margin || s(k, k) < s(j, k) + margin) {
          satisfied = false;
        }
      }
      CHECK((mh.per_pair(k) == 0.0) == satisfied);
    }
  }
}

TEST_CASE("weighted_loss approaches mh as tau -> 0") {
  Eigen::MatrixXd s = spec_matrix();
  double mh_total = mh_loss(s, 0.1).total;
  CHECK(std::abs(weighted_loss(s, 0.1, 1e-6).total - mh_total) < 1e-4);

  // monotone gap shrinkage
  double prev_gap = std::numeric_limits<double>::infinity();
  for (double tau : {1.0, 0.1, 0.01, 0.001}) {
    double gap = std::abs(weighted_loss(s, 0.1, tau).total - mh_total);
    CHECK(gap <= prev_gap + 1e-12);
    prev_gap = gap;
  }
}

TEST_CASE("weighted_loss approaches the mean of violations as tau -> inf") {
  // pair 3 image-direction violations are 0.2 and 0.05
  BatchLossResult res = weighted_loss(spec_matrix(), 0.1, 1e6);
  CHECK(std::abs(res.per_pair(2) - 0.125) < 1e-4);
}

TEST_CASE("weighted_loss with no violations is zero for any tau") {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(3, 3);
  for (double tau : {1e-6, 1.0, 1e6}) {
    CHECK(weighted_loss(s, 0.05, tau).total == 0.0);
  }
}

TEST_CASE("weighted_loss rejects nonpositive tau") {
  CHECK_THROWS_AS(weighted_loss(spec_matrix(), 0.1, 0.0), ConfigError);
  CHECK_THROWS_AS(weighted_loss(spec_matrix(), 0.1, -1.0), ConfigError);
}

TEST_CASE("grad_similarity matches finite differences for all loss kinds") {
  Rng rng(31);
  auto run_loss = [](const Eigen::MatrixXd& s, LossKind kind) {
    switch (kind) {
      case LossKind::kSumOfHinges:
        return sh_loss(s, 0.2);
      case LossKind::kMaxOfHinges:
        return mh_loss(s, 0.2);
      default:
        return weighted_loss(s, 0.2, 0.7);
    }
  };
  for (LossKind kind : {LossKind::kSumOfHinges, LossKind::kMaxOfHinges,
                        LossKind::kWeighted}) {
    int done = 0;
    while (done < 20) {
      Eigen::MatrixXd s = testutil::random_matrix(rng, 5, 5);
      if (!kink_safe(s, 0.2, 1e-3)) continue;
      ++done;
      Eigen::MatrixXd analytic = run_loss(s, kind).grad_similarity;
      Eigen::MatrixXd fd = testutil::finite_difference(
          s, [&] { return run_loss(s, kind).total; }, 1e-6);
      CHECK((analytic - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("loss_gradients: zero loss region gives zero gradients") {
  // orthonormal one-hot features, margin small enough to be satisfied
  const int n = 3;
  Eigen::MatrixXf feats = Eigen::MatrixXf::Identity(n, n);
  ProjectionModel m;
  m.w_img = Eigen::MatrixXd::Identity(n, n);
  m.w_cap = Eigen::MatrixXd::Identity(n, n);
  LossConfig cfg;
  cfg.margin = 0.3;
  cfg.kind = LossKind::kSumOfHinges;
  ModelGradients g = loss_gradients(m, feats, feats, cfg);
  CHECK(g.total == 0.0);
  CHECK(g.grad_w_img.isZero(0.0));
  CHECK(g.grad_w_cap.isZero(0.0));
}

TEST_CASE("loss_gradients matches finite differences") {
  Rng rng(41);
  struct Combo {
    LossKind kind;
    SimilarityKind sim;
    bool normalize;
    bool abs_flag;
  };
  const Combo combos[] = {
      {LossKind::kSumOfHinges, SimilarityKind::kInnerProduct, true, false},
      {LossKind::kMaxOfHinges, SimilarityKind::kInnerProduct, true, false},
      {LossKind::kWeighted, SimilarityKind::kInnerProduct, true, false},
      {LossKind::kSumOfHinges, SimilarityKind::kInnerProduct, false, false},
      {LossKind::kMaxOfHinges, SimilarityKind::kOrder, true, false},
      {LossKind::kSumOfHinges, SimilarityKind::kOrder, false, false},
      {LossKind::kMaxOfHinges, SimilarityKind::kInnerProduct, true, true},
  };
  for (const Combo& combo : combos) {
    CAPTURE(static_cast<int>(combo.kind));
    CAPTURE(static_cast<int>(combo.sim));
    int done = 0;
    while (done < 5) {
      ProjectionModel m = ProjectionModel::random_init(
          5, 5, 3, rng.next_u64());
      m.normalize_image = m.normalize_caption = combo.normalize;
      m.abs_before_similarity = combo.abs_flag;
      Eigen::MatrixXf img = testutil::random_matrix_f(rng, 4, 5);
      Eigen::MatrixXf cap = testutil::random_matrix_f(rng, 4, 5);
      LossConfig cfg;
      cfg.margin = 0.2;
      cfg.kind = combo.kind;
      cfg.similarity = combo.sim;
      cfg.temperature = 0.5;

      // reject kink-adjacent instances
      Eigen::MatrixXd f = embed_images(m, img);
      Eigen::MatrixXd g = embed_captions(m, cap);
      Eigen::MatrixXd s = similarity_matrix(cfg.similarity, f, g);
      if (!kink_safe(s, cfg.margin, 1e-3)) continue;
      if (combo.abs_flag &&
          (f.cwiseAbs().minCoeff() < 1e-3 || g.cwiseAbs().minCoeff() < 1e-3)) {
        continue;
      }
      if (cfg.similarity == SimilarityKind::kOrder) {
        // order has its own kink at g_d == f_d
        bool ok = true;
        for (int a = 0; a < f.rows() && ok; ++a) {
          for (int b = 0; b < g.rows() && ok; ++b) {
            if (((g.row(b) - f.row(a)).cwiseAbs().minCoeff()) < 1e-3) {
              ok = false;
            }
          }
        }
        if (!ok) continue;
      }
      ++done;

      ModelGradients analytic = loss_gradients(m, img, cap, cfg);
      auto value = [&] { return loss_gradients(m, img, cap, cfg).total; };
      Eigen::MatrixXd fd_img =
          testutil::finite_difference(m.w_img, value, 1e-5);
      Eigen::MatrixXd fd_cap =
          testutil::finite_difference(m.w_cap, value, 1e-5);
      double scale = std::max({1.0, fd_img.cwiseAbs().maxCoeff(),
                               fd_cap.cwiseAbs().maxCoeff()});
      CHECK((analytic.grad_w_img - fd_img).cwiseAbs().maxCoeff() / scale <
            1e-4);
      CHECK((analytic.grad_w_cap - fd_cap).cwiseAbs().maxCoeff() / scale <
            1e-4);
    }
  }
}

TEST_CASE("normalization removes parameter scale from gradient direction") {
  Rng rng(51);
  ProjectionModel m = ProjectionModel::random_init(5, 5, 3, 77);
  Eigen::MatrixXf img = testutil::random_matrix_f(rng, 4, 5);
  Eigen::MatrixXf cap = testutil::random_matrix_f(rng, 4, 5);
  LossConfig cfg;
  cfg.kind = LossKind::kSumOfHinges;
  ModelGradients g1 = loss_gradients(m, img, cap, cfg);
  ProjectionModel scaled = m;
  scaled.w_img *= 3.0;
  scaled.w_cap *= 3.0;
  ModelGradients g2 = loss_gradients(scaled, img, cap, cfg);
  // same loss value and parallel gradients (scaled by 1/3)
  CHECK(g1.total == doctest::Approx(g2.total));
  CHECK((g2.grad_w_img * 3.0 - g1.grad_w_img).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((g2.grad_w_cap * 3.0 - g1.grad_w_cap).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("generalized pool: gradients flow through extra pool members") {
  Rng rng(61);
  ProjectionModel m = ProjectionModel::random_init(4, 4, 3, 5);
  Eigen::MatrixXf img = testutil::random_matrix_f(rng, 6, 4);
  Eigen::MatrixXf cap = testutil::random_matrix_f(rng, 6, 4);
  // anchors = rows 0..2, pool = rows 0..5
  std::vector<int> self = {0, 1, 2};
  LossConfig cfg;
  cfg.kind = LossKind::kSumOfHinges;
  cfg.margin = 0.2;
  ModelGradients analytic = loss_gradients(
      m, img.topRows(3), cap.topRows(3), img, cap, self, cfg);
  auto value = [&] {
    return loss_gradients(m, img.topRows(3), cap.topRows(3), img, cap, self,
                          cfg)
        .total;
  };
  Eigen::MatrixXd fd = testutil::finite_difference(m.w_img, value, 1e-5);
  CHECK((analytic.grad_w_img - fd).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("hardest-vs-many-small-violations geometry") {
  // similarity = negative distance, zero margin; only the first pair's
  // caption direction carries violations
  auto planted = [](const std::vector<double>& neg_dist) {
    const int n = 1 + static_cast<int>(neg_dist.size());
    Eigen::MatrixXd s = Eigen::MatrixXd::Constant(n, n, -10.0);
    s.diagonal().setConstant(0.0);
    s(0, 0) = -1.5;  // positive pair at the dashed radius
    for (std::size_t j = 0; j < neg_dist.size(); ++j) {
      s(0, static_cast<int>(j) + 1) = -neg_dist[j];
    }
    return s;
  };
  // (a): one hard negative well inside, two just outside
  Eigen::MatrixXd sa = planted({0.5, 1.6, 1.6});
  // (b): six negatives slightly inside
  Eigen::MatrixXd sb = planted({1.3, 1.3, 1.3, 1.3, 1.3, 1.3});
  double sh_a = sh_loss(sa, 0.0).per_pair(0);
  double sh_b = sh_loss(sb, 0.0).per_pair(0);
  double mh_a = mh_loss(sa, 0.0).per_pair(0);
  double mh_b = mh_loss(sb, 0.0).per_pair(0);
  CHECK(sh_b > sh_a);
  CHECK(mh_a > mh_b);
}
