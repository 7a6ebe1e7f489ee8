#include "vse/sweep.hpp"

#include <cstdio>
#include <fstream>

#include "vse/errors.hpp"

namespace vse {

std::vector<SweepRow> sweep_negsize(const PairedFeatureSet& train_set,
                                    const PairedFeatureSet& val_set,
                                    const PairedFeatureSet& test_set,
                                    const TrainConfig& base, int embed_dim,
                                    const std::vector<int>& sizes) {
  if (sizes.empty()) throw ConfigError("sweep needs at least one size");
  std::vector<SweepRow> rows;
  for (int size : sizes) {
    SweepRow row;
    row.neg_size = size;
    try {
      TrainConfig config = base;
      config.sampler.neg_pool_size = size;
      ProjectionModel model = ProjectionModel::random_init(
          static_cast<int>(train_set.image_features.cols()),
          static_cast<int>(train_set.caption_features.cols()), embed_dim,
          config.seed);
      TrainResult result = train(train_set, val_set, std::move(model), config);
      EvalProtocol protocol;
      protocol.cpi = test_set.cpi;
      row.test_report = evaluate(result.best.model, config.loss.similarity,
                                 test_set.image_features,
                                 test_set.caption_features, protocol,
                                 config.threads);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open sweep CSV for writing: " + path);
  out << "neg_size,r1_cap,r5_cap,r10_cap,r1_img,r5_img,r10_img,medr_cap,"
         "medr_img,meanr_cap,meanr_img,rsum,status\n";
  char buf[512];
  for (const SweepRow& row : rows) {
    if (row.ok) {
      const auto& c = row.test_report.caption_retrieval;
      const auto& i = row.test_report.image_retrieval;
      std::snprintf(buf, sizeof(buf),
                    "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.6f,%.6f,"
                    "%.6f,ok\n",
                    row.neg_size, c.r1, c.r5, c.r10, i.r1, i.r5, i.r10,
                    c.med_r, i.med_r, c.mean_r, i.mean_r, row.test_report.rsum);
      out << buf;
    } else {
      out << row.neg_size << ",,,,,,,,,,,,error: " << row.error << "\n";
    }
  }
  if (!out) throw FormatError("write failed: " + path);
}

}  // namespace vse
