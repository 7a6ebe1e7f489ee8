#include "vse/datagen.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <vector>

#include "vse/errors.hpp"
#include "vse/rng.hpp"

namespace vse {

namespace {
constexpr char kMagic[4] = {'V', 'S', 'E', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 24;
}  // namespace

void PairedFeatureSet::validate() const {
  if (cpi < 1) throw ConfigError("cpi must be >= 1");
  if (caption_features.rows() !=
      static_cast<Eigen::Index>(image_features.rows()) * cpi) {
    throw ConfigError("caption rows must equal n_images * cpi");
  }
  if (!image_features.allFinite() || !caption_features.allFinite()) {
    throw ConfigError("feature set contains non-finite entries");
  }
}

PairedFeatureSet PairedFeatureSet::slice(int begin, int count) const {
  if (begin < 0 || count < 0 || begin + count > n_images()) {
    throw ContractError("slice out of range");
  }
  PairedFeatureSet out;
  out.cpi = cpi;
  out.image_features = image_features.middleRows(begin, count);
  out.caption_features = caption_features.middleRows(begin * cpi, count * cpi);
  return out;
}

void SyntheticSpec::validate() const {
  if (n_images < 1) throw ConfigError("n_images must be >= 1");
  if (cpi < 1) throw ConfigError("cpi must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (latent_dim > std::min(d_img, d_cap)) {
    throw ConfigError("latent_dim must be <= min(d_img, d_cap)");
  }
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (confuser_cluster_size < 1) {
    throw ConfigError("confuser_cluster_size must be >= 1");
  }
  if (confuser_fraction < 0.0 || confuser_fraction > 1.0) {
    throw ConfigError("confuser_fraction must lie in [0, 1]");
  }
  if (confuser_angle_deg <= 0.0 || confuser_angle_deg >= 90.0) {
    throw ConfigError("confuser_angle_deg must lie in (0, 90)");
  }
}

namespace {

Eigen::VectorXd random_unit(Rng& rng, int dim) {
  Eigen::VectorXd v(dim);
  double norm;
  do {
    for (int d = 0; d < dim; ++d) v[d] = rng.next_gaussian();
    norm = v.norm();
  } while (norm < 1e-9);
  return v / norm;
}

// Unit vector orthogonal to axis.
Eigen::VectorXd random_unit_orthogonal(Rng& rng, const Eigen::VectorXd& axis) {
  Eigen::VectorXd u;
  double norm;
  do {
    u = random_unit(rng, static_cast<int>(axis.size()));
    u -= u.dot(axis) * axis;
    norm = u.norm();
  } while (norm < 1e-9);
  return u / norm;
}

Eigen::MatrixXd orthonormal_columns(Rng& rng, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.next_gaussian();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(rows, cols);
}

}  // namespace

GeneratedDataset generate(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  const int n = spec.n_images;
  const int ell = spec.latent_dim;

  GeneratedDataset out;
  out.img_basis = orthonormal_columns(rng, spec.d_img, ell);
  out.cap_basis = orthonormal_columns(rng, spec.d_cap, ell);

  // Clustered latents first, then background; a final shuffle of the image
  // order spreads clusters across the index range (and hence across folds).
  const int g = spec.confuser_cluster_size;
  const int n_clusters =
      static_cast<int>(spec.confuser_fraction * n) / g;
  const int n_clustered = n_clusters * g;
  const double angle_rad = spec.confuser_angle_deg * M_PI / 180.0;

  Eigen::MatrixXd latents(n, ell);
  int row = 0;
  for (int c = 0; c < n_clusters; ++c) {
    Eigen::VectorXd center = random_unit(rng, ell);
    for (int k = 0; k < g; ++k) {
      double theta = angle_rad * rng.next_double();
      Eigen::VectorXd perp = random_unit_orthogonal(rng, center);
      latents.row(row++) =
          (std::cos(theta) * center + std::sin(theta) * perp).transpose();
    }
  }
  for (; row < n; ++row) {
    latents.row(row) = random_unit(rng, ell).transpose();
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  out.latents.resize(n, ell);
  for (int i = 0; i < n; ++i) {
    out.latents.row(i) = latents.row(order[i]);
  }
  (void)n_clustered;

  out.data.cpi = spec.cpi;
  out.data.image_features.resize(n, spec.d_img);
  out.data.caption_features.resize(static_cast<Eigen::Index>(n) * spec.cpi,
                                   spec.d_cap);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd base = out.img_basis * out.latents.row(i).transpose();
    for (int d = 0; d < spec.d_img; ++d) {
      double v = base[d] + spec.noise_sigma * rng.next_gaussian();
      out.data.image_features(i, d) = static_cast<float>(v);
    }
    for (int c = 0; c < spec.cpi; ++c) {
      Eigen::VectorXd cap = out.cap_basis * out.latents.row(i).transpose();
      for (int d = 0; d < spec.d_cap; ++d) {
        double v = cap[d] + spec.noise_sigma * rng.next_gaussian();
        out.data.caption_features(static_cast<Eigen::Index>(i) * spec.cpi + c,
                                  d) = static_cast<float>(v);
      }
    }
  }
  return out;
}

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const char* field) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw FormatError(std::string("truncated payload: ") + field);
  return v;
}

void write_rows(std::ostream& out, const Eigen::MatrixXf& m) {
  std::vector<float> buf(m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) buf[j] = m(i, j);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
}

Eigen::MatrixXf read_rows(std::istream& in, std::uint64_t rows,
                          std::uint32_t cols, const char* field) {
  Eigen::MatrixXf m(rows, cols);
  std::vector<float> buf(cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError(std::string("truncated payload: ") + field);
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = buf[j];
  }
  return m;
}

}  // namespace

void write_features(const PairedFeatureSet& set, const std::string& path) {
  set.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open feature file for writing: " + path);
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(set.n_images()));
  write_u32(out, static_cast<std::uint32_t>(set.image_features.cols()));
  write_u32(out, static_cast<std::uint32_t>(set.caption_features.cols()));
  write_u32(out, static_cast<std::uint32_t>(set.cpi));
  write_rows(out, set.image_features);
  write_rows(out, set.caption_features);
  if (!out) throw FormatError("write failed: " + path);
}

PairedFeatureSet read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("bad magic");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    throw FormatError("unsupported version " + std::to_string(version));
  }
  const std::uint32_t n_images = read_u32(in, "n_images");
  const std::uint32_t d_img = read_u32(in, "d_img");
  const std::uint32_t d_cap = read_u32(in, "d_cap");
  const std::uint32_t cpi = read_u32(in, "cpi");
  if (d_img == 0 || d_img > kMaxDim || d_cap == 0 || d_cap > kMaxDim ||
      cpi == 0 || cpi > kMaxDim || n_images > kMaxDim) {
    throw FormatError("dimension overflow in header");
  }
  PairedFeatureSet set;
  set.cpi = static_cast<int>(cpi);
  set.image_features = read_rows(in, n_images, d_img, "image features");
  set.caption_features = read_rows(
      in, static_cast<std::uint64_t>(n_images) * cpi, d_cap,
      "caption features");
  return set;
}

}  // namespace vse
