#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace vse {

// Aligned image/caption feature rows. Caption rows are image-major: block
// [j*cpi, (j+1)*cpi) belongs to image j. Stored as float32, matching the
// on-disk format.
struct PairedFeatureSet {
  Eigen::MatrixXf image_features;    // n_images x d_img
  Eigen::MatrixXf caption_features;  // n_images*cpi x d_cap
  int cpi = 1;

  int n_images() const { return static_cast<int>(image_features.rows()); }
  int n_pairs() const { return static_cast<int>(caption_features.rows()); }

  void validate() const;

  // Images [begin, begin + count) with their caption blocks.
  PairedFeatureSet slice(int begin, int count) const;
};

struct SyntheticSpec {
  int n_images = 0;
  int cpi = 5;
  int latent_dim = 16;
  int d_img = 64;
  int d_cap = 48;
  double noise_sigma = 0.0;
  int confuser_cluster_size = 1;
  double confuser_fraction = 0.0;
  double confuser_angle_deg = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Generated set plus the planted structure: latents live on the unit sphere
// in R^L, features are orthonormal-column mixes of them. With sigma = 0 the
// pair (img_basis, cap_basis) is an exact oracle model.
struct GeneratedDataset {
  PairedFeatureSet data;
  Eigen::MatrixXd img_basis;  // d_img x L, orthonormal columns
  Eigen::MatrixXd cap_basis;  // d_cap x L
  Eigen::MatrixXd latents;    // n_images x L
};

GeneratedDataset generate(const SyntheticSpec& spec);

// VSEF feature file: magic "VSEF", u32 LE version=1, n_images, d_img, d_cap,
// cpi, then row-major float32 image features followed by caption features.
void write_features(const PairedFeatureSet& set, const std::string& path);
PairedFeatureSet read_features(const std::string& path);

}  // namespace vse
