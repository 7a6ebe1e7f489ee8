#include "vse/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "vse/errors.hpp"
#include "vse/rng.hpp"

namespace vse {

namespace {
constexpr double kMinNorm = 1e-12;
constexpr char kSnapshotMagic[4] = {'V', 'S', 'E', 'S'};
constexpr std::uint32_t kSnapshotVersion = 1;
}  // namespace

void ProjectionModel::validate() const {
  if (w_img.rows() < 1 || w_img.cols() < 1 || w_cap.rows() < 1 ||
      w_cap.cols() < 1) {
    throw ConfigError("projection matrices must be non-empty");
  }
  if (w_img.cols() != w_cap.cols()) {
    throw ConfigError("image and caption projections disagree on embedding dim");
  }
  if (!w_img.allFinite() || !w_cap.allFinite()) {
    throw ConfigError("projection matrices contain non-finite entries");
  }
}

ProjectionModel ProjectionModel::random_init(int d_img, int d_cap, int d,
                                             std::uint64_t seed) {
  if (d_img < 1 || d_cap < 1 || d < 1) {
    throw ConfigError("dimensions must be positive");
  }
  Rng rng(seed);
  auto fill = [&rng](Eigen::MatrixXd& m, int d_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        m(i, j) = (2.0 * rng.next_double() - 1.0) * bound;
      }
    }
  };
  ProjectionModel model;
  model.w_img.resize(d_img, d);
  model.w_cap.resize(d_cap, d);
  fill(model.w_img, d_img);
  fill(model.w_cap, d_cap);
  return model;
}

EmbeddingBatch embed_batch(const Eigen::MatrixXd& w,
                           const Eigen::Ref<const Eigen::MatrixXf>& features,
                           bool normalize, bool abs_flag) {
  if (features.cols() != w.rows()) {
    throw ConfigError("feature dimension " + std::to_string(features.cols()) +
                      " does not match projection rows " +
                      std::to_string(w.rows()));
  }
  EmbeddingBatch b;
  b.raw = features.cast<double>() * w;
  if (normalize) {
    b.unit = b.raw;
    for (Eigen::Index i = 0; i < b.unit.rows(); ++i) {
      double norm = b.unit.row(i).norm();
      if (norm < kMinNorm) {
        throw DegenerateInputError("cannot normalize zero-norm embedding (row " +
                                   std::to_string(i) + ")");
      }
      b.unit.row(i) /= norm;
    }
  } else {
    b.unit = b.raw;
  }
  b.out = abs_flag ? b.unit.cwiseAbs() : b.unit;
  return b;
}

Eigen::MatrixXd embed_batch_backward(const EmbeddingBatch& fwd,
                                     const Eigen::MatrixXd& grad_out,
                                     bool normalize, bool abs_flag) {
  Eigen::MatrixXd g = grad_out;
  if (abs_flag) {
    // subgradient of |u|: sign(u), 0 at the kink
    g = g.cwiseProduct(fwd.unit.unaryExpr(
        [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }));
  }
  if (!normalize) {
    return g;
  }
  Eigen::MatrixXd out(g.rows(), g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    double norm = fwd.raw.row(i).norm();
    double along = g.row(i).dot(fwd.unit.row(i));
    out.row(i) = (g.row(i) - along * fwd.unit.row(i)) / norm;
  }
  return out;
}

Eigen::MatrixXd embed_images(
    const ProjectionModel& model,
    const Eigen::Ref<const Eigen::MatrixXf>& features) {
  return embed_batch(model.w_img, features, model.normalize_image,
                     model.abs_before_similarity)
      .out;
}

Eigen::MatrixXd embed_captions(
    const ProjectionModel& model,
    const Eigen::Ref<const Eigen::MatrixXf>& features) {
  return embed_batch(model.w_cap, features, model.normalize_caption,
                     model.abs_before_similarity)
      .out;
}

Eigen::VectorXd embed_image(const ProjectionModel& model,
                            const Eigen::Ref<const Eigen::VectorXf>& phi) {
  Eigen::MatrixXf row = phi.transpose();
  return embed_images(model, row).row(0).transpose();
}

Eigen::VectorXd embed_caption(const ProjectionModel& model,
                              const Eigen::Ref<const Eigen::VectorXf>& psi) {
  Eigen::MatrixXf row = psi.transpose();
  return embed_captions(model, row).row(0).transpose();
}

double similarity(SimilarityKind kind,
                  const Eigen::Ref<const Eigen::VectorXd>& f,
                  const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (f.size() != g.size()) {
    throw ConfigError("embedding dimensions differ");
  }
  if (kind == SimilarityKind::kInnerProduct) {
    return f.dot(g);
  }
  double acc = 0.0;
  for (Eigen::Index d = 0; d < f.size(); ++d) {
    double v = g[d] - f[d];
    if (v > 0.0) acc += v * v;
  }
  return -acc;
}

Eigen::MatrixXd similarity_matrix(SimilarityKind kind,
                                  const Eigen::Ref<const Eigen::MatrixXd>& f,
                                  const Eigen::Ref<const Eigen::MatrixXd>& g) {
  if (f.rows() == 0 || g.rows() == 0) {
    throw ContractError("empty batch in similarity_matrix");
  }
  if (f.cols() != g.cols()) {
    throw ConfigError("embedding dimensions differ");
  }
  if (kind == SimilarityKind::kInnerProduct) {
    return f * g.transpose();
  }
  Eigen::MatrixXd s(f.rows(), g.rows());
  for (Eigen::Index m = 0; m < f.rows(); ++m) {
    for (Eigen::Index n = 0; n < g.rows(); ++n) {
      double acc = 0.0;
      for (Eigen::Index d = 0; d < f.cols(); ++d) {
        double v = g(n, d) - f(m, d);
        if (v > 0.0) acc += v * v;
      }
      s(m, n) = -acc;
    }
  }
  return s;
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

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, int rows, int cols,
                            const char* field) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      double v;
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw FormatError(std::string("truncated payload: ") + field);
      m(i, j) = v;
    }
  }
  return m;
}

}  // namespace

void write_snapshot(const ProjectionModel& model, SimilarityKind kind,
                    const std::string& path) {
  model.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open snapshot for writing: " + path);
  out.write(kSnapshotMagic, 4);
  write_u32(out, kSnapshotVersion);
  write_u32(out, static_cast<std::uint32_t>(model.w_img.rows()));
  write_u32(out, static_cast<std::uint32_t>(model.w_cap.rows()));
  write_u32(out, static_cast<std::uint32_t>(model.w_img.cols()));
  std::uint8_t flags[4] = {
      static_cast<std::uint8_t>(model.normalize_image),
      static_cast<std::uint8_t>(model.normalize_caption),
      static_cast<std::uint8_t>(model.abs_before_similarity),
      static_cast<std::uint8_t>(kind == SimilarityKind::kOrder ? 1 : 0)};
  out.write(reinterpret_cast<const char*>(flags), sizeof(flags));
  write_matrix(out, model.w_img);
  write_matrix(out, model.w_cap);
  if (!out) throw FormatError("write failed: " + path);
}

LoadedSnapshot read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open snapshot: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSnapshotMagic, 4) != 0) {
    throw FormatError("bad magic");
  }
  std::uint32_t version = read_u32(in, "version");
  if (version != kSnapshotVersion) {
    throw FormatError("unsupported snapshot version " + std::to_string(version));
  }
  int d_img = static_cast<int>(read_u32(in, "d_img"));
  int d_cap = static_cast<int>(read_u32(in, "d_cap"));
  int d = static_cast<int>(read_u32(in, "dim"));
  if (d_img < 1 || d_cap < 1 || d < 1 || d_img > (1 << 24) ||
      d_cap > (1 << 24) || d > (1 << 24)) {
    throw FormatError("dimension overflow in snapshot header");
  }
  std::uint8_t flags[4];
  in.read(reinterpret_cast<char*>(flags), sizeof(flags));
  if (!in) throw FormatError("truncated payload: flags");
  LoadedSnapshot snap;
  snap.model.normalize_image = flags[0] != 0;
  snap.model.normalize_caption = flags[1] != 0;
  snap.model.abs_before_similarity = flags[2] != 0;
  snap.kind =
      flags[3] != 0 ? SimilarityKind::kOrder : SimilarityKind::kInnerProduct;
  snap.model.w_img = read_matrix(in, d_img, d, "w_img");
  snap.model.w_cap = read_matrix(in, d_cap, d, "w_cap");
  snap.model.validate();
  return snap;
}

SimilarityKind similarity_kind_from_string(const std::string& name) {
  if (name == "ip" || name == "inner_product") {
    return SimilarityKind::kInnerProduct;
  }
  if (name == "order") return SimilarityKind::kOrder;
  throw ConfigError("unknown similarity kind: " + name);
}

std::string to_string(SimilarityKind kind) {
  return kind == SimilarityKind::kInnerProduct ? "ip" : "order";
}

}  // namespace vse
