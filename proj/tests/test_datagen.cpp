#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <vector>

#include "vse/datagen.hpp"
#include "vse/errors.hpp"
#include "vse/evaluator.hpp"

using namespace vse;

namespace {

SyntheticSpec base_spec() {
  SyntheticSpec s;
  s.n_images = 60;
  s.cpi = 2;
  s.latent_dim = 8;
  s.d_img = 16;
  s.d_cap = 12;
  s.noise_sigma = 0.05;
  s.confuser_cluster_size = 4;
  s.confuser_fraction = 0.4;
  s.confuser_angle_deg = 8.0;
  s.seed = 99;
  return s;
}

ProjectionModel oracle_model(const GeneratedDataset& ds) {
  ProjectionModel m;
  m.w_img = ds.img_basis;
  m.w_cap = ds.cap_basis;
  m.normalize_image = true;
  m.normalize_caption = true;
  return m;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("generate: shapes, finiteness, unit-sphere latents") {
  GeneratedDataset ds = generate(base_spec());
  CHECK(ds.data.n_images() == 60);
  CHECK(ds.data.n_pairs() == 120);
  CHECK(ds.data.image_features.cols() == 16);
  CHECK(ds.data.caption_features.cols() == 12);
  CHECK(ds.data.image_features.allFinite());
  CHECK(ds.data.caption_features.allFinite());
  for (int i = 0; i < ds.latents.rows(); ++i) {
    CHECK(std::abs(ds.latents.row(i).norm() - 1.0) < 1e-9);
  }
  // orthonormal columns
  CHECK((ds.img_basis.transpose() * ds.img_basis)
            .isApprox(Eigen::MatrixXd::Identity(8, 8), 1e-9));
  CHECK((ds.cap_basis.transpose() * ds.cap_basis)
            .isApprox(Eigen::MatrixXd::Identity(8, 8), 1e-9));
}

TEST_CASE("generate is deterministic, seed changes the output") {
  GeneratedDataset a = generate(base_spec());
  GeneratedDataset b = generate(base_spec());
  CHECK(a.data.image_features == b.data.image_features);
  CHECK(a.data.caption_features == b.data.caption_features);
  SyntheticSpec other = base_spec();
  other.seed = 100;
  GeneratedDataset c = generate(other);
  CHECK(a.data.image_features != c.data.image_features);
}

TEST_CASE("generate rejects invalid specs") {
  SyntheticSpec s = base_spec();
  s.n_images = 0;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = base_spec();
  s.latent_dim = 20;  // exceeds d_cap
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = base_spec();
  s.confuser_fraction = 1.5;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s = base_spec();
  s.noise_sigma = -0.1;
  CHECK_THROWS_AS(generate(s), ConfigError);
}

TEST_CASE("noiseless recovery: oracle model scores R@1 = 100") {
  SyntheticSpec s = base_spec();
  s.noise_sigma = 0.0;
  s.cpi = 1;
  s.confuser_fraction = 0.0;
  s.confuser_cluster_size = 1;
  GeneratedDataset ds = generate(s);
  EvalProtocol protocol;
  protocol.cpi = 1;
  RetrievalReport rep =
      evaluate(oracle_model(ds), SimilarityKind::kInnerProduct,
               ds.data.image_features, ds.data.caption_features, protocol);
  CHECK(rep.caption_retrieval.r1 == doctest::Approx(100.0));
  CHECK(rep.image_retrieval.r1 == doctest::Approx(100.0));
  CHECK(rep.rsum == doctest::Approx(600.0));
}

TEST_CASE("confuser clusters are genuinely hard") {
  SyntheticSpec s = base_spec();
  s.n_images = 200;
  s.noise_sigma = 0.0;
  s.confuser_fraction = 0.3;
  s.confuser_cluster_size = 5;
  s.confuser_angle_deg = 6.0;
  GeneratedDataset ds = generate(s);

  // group images by shared latent cluster: latent cosine above the in-cluster
  // floor cos(2 * angle)
  Eigen::MatrixXd cos = ds.latents * ds.latents.transpose();
  const double in_cluster = std::cos(2.0 * 6.0 * M_PI / 180.0);
  std::vector<double> cluster_sims, background_sims;
  for (int a = 0; a < s.n_images; ++a) {
    for (int b = a + 1; b < s.n_images; ++b) {
      if (cos(a, b) >= in_cluster) {
        cluster_sims.push_back(cos(a, b));
      } else {
        background_sims.push_back(cos(a, b));
      }
    }
  }
  // 0.3 * 200 = 60 clustered images in clusters of 5 -> C(5,2)*12 = 120 pairs
  CHECK(cluster_sims.size() == 120);
  std::sort(background_sims.begin(), background_sims.end());
  double p99 = background_sims[static_cast<std::size_t>(
      0.99 * static_cast<double>(background_sims.size() - 1))];
  double cluster_min =
      *std::min_element(cluster_sims.begin(), cluster_sims.end());
  CHECK(cluster_min > p99);
}

TEST_CASE("slice keeps caption blocks aligned") {
  GeneratedDataset ds = generate(base_spec());
  PairedFeatureSet part = ds.data.slice(10, 20);
  CHECK(part.n_images() == 20);
  CHECK(part.n_pairs() == 40);
  CHECK(part.image_features.row(0) == ds.data.image_features.row(10));
  CHECK(part.caption_features.row(0) == ds.data.caption_features.row(20));
  CHECK_THROWS_AS(ds.data.slice(50, 20), ContractError);
}

TEST_CASE("feature file round-trip is bit-exact") {
  GeneratedDataset ds = generate(base_spec());
  TempFile f("roundtrip_test.vsef");
  write_features(ds.data, f.path);
  PairedFeatureSet back = read_features(f.path);
  CHECK(back.cpi == ds.data.cpi);
  CHECK(back.image_features == ds.data.image_features);
  CHECK(back.caption_features == ds.data.caption_features);
}

TEST_CASE("corrupted feature files are rejected") {
  GeneratedDataset ds = generate(base_spec());
  TempFile f("corrupt_test.vsef");
  write_features(ds.data, f.path);

  SUBCASE("bad magic") {
    std::fstream io(f.path, std::ios::in | std::ios::out | std::ios::binary);
    io.write("XXXX", 4);
    io.close();
    CHECK_THROWS_WITH_AS(read_features(f.path),
                         doctest::Contains("bad magic"), FormatError);
  }
  SUBCASE("truncated payload") {
    std::ifstream in(f.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(f.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(),
              static_cast<std::streamsize>(bytes.size() - 100));
    out.close();
    CHECK_THROWS_WITH_AS(read_features(f.path),
                         doctest::Contains("truncated payload"), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_features("no_such_file.vsef"), FormatError);
  }
}
