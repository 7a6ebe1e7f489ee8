// Command-line front end: synthetic data generation, training, retrieval
// evaluation, negative-set-size sweeps and hard-negative probability tables.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vse/analysis.hpp"
#include "vse/datagen.hpp"
#include "vse/errors.hpp"
#include "vse/sweep.hpp"
#include "vse/trainer.hpp"

namespace {

constexpr const char* kToolVersion = "1.0.0";

int run(std::vector<std::string> args);

// Flat key=value run manifest; replaying one re-executes the command with
// the recorded, fully resolved flag set.
class Manifest {
 public:
  void set(const std::string& key, const std::string& value) {
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    set(key, std::string(buf));
  }
  void set(const std::string& key, long long value) {
    set(key, std::to_string(value));
  }
  void set(const std::string& key, bool value) {
    set(key, value ? std::string("true") : std::string("false"));
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) {
      throw vse::FormatError("cannot open manifest for writing: " + path);
    }
    for (const auto& [k, v] : entries_) out << k << "=" << v << "\n";
  }

  static std::vector<std::string> replay_args(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vse::FormatError("cannot open manifest: " + path);
    std::string command;
    std::vector<std::string> args;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw vse::FormatError("malformed manifest line: " + line);
      }
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      if (key == "command") {
        command = value;
      } else if (key.rfind("arg.", 0) == 0) {
        std::string flag = key.substr(4);
        if (value == "true") {
          args.push_back("--" + flag);
        } else if (value == "false") {
          args.push_back("--no-" + flag);
        } else if (!value.empty()) {
          args.push_back("--" + flag);
          args.push_back(value);
        }
      }
    }
    if (command.empty()) {
      throw vse::FormatError("manifest has no command entry");
    }
    args.insert(args.begin(), command);
    return args;
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct TrainFlags {
  std::string train_path, val_path;
  std::string out_snapshot = "snapshot.vses";
  std::string out_trace = "trace.csv";
  std::string out_manifest;
  std::string loss = "mh";
  std::string similarity = "ip";
  double margin = 0.2;
  int batch_size = 128;
  int neg_size = -1;  // defaults to batch size
  bool abs_flag = false;
  bool normalize_image = true;
  bool normalize_caption = true;
  int dim = 1024;
  int epochs = 30;
  double lr = 0.0002;
  int lr_drop_epoch = 15;
  double lr_drop_factor = 10.0;
  int curriculum_switch = -1;
  double temperature = 1.0;
  int eval_every = 1;
  std::uint64_t seed = 0;
  int threads = 1;
  bool timing = true;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_io) {
  if (with_io) {
    cmd->add_option("--train", f.train_path, "training VSEF file")->required();
    cmd->add_option("--val", f.val_path, "validation VSEF file")->required();
    cmd->add_option("--out-snapshot", f.out_snapshot, "best-model output");
    cmd->add_option("--out-trace", f.out_trace, "per-epoch trace CSV");
    cmd->add_option("--out-manifest", f.out_manifest,
                    "run manifest (default: <out-trace>.manifest)");
  }
  cmd->add_option("--loss", f.loss, "sh | mh | weighted")
      ->check(CLI::IsMember({"sh", "mh", "weighted"}));
  cmd->add_option("--margin", f.margin, "hinge margin alpha");
  cmd->add_option("--batch-size", f.batch_size);
  cmd->add_option("--neg-size", f.neg_size,
                  "negative pool size (default: batch size)");
  cmd->add_option("--similarity", f.similarity, "ip | order")
      ->check(CLI::IsMember({"ip", "order"}));
  cmd->add_flag("--abs,!--no-abs", f.abs_flag,
                "absolute value of embeddings before similarity");
  cmd->add_flag("--normalize-image,!--no-normalize-image", f.normalize_image);
  cmd->add_flag("--normalize-caption,!--no-normalize-caption",
                f.normalize_caption);
  cmd->add_option("--dim", f.dim, "joint embedding dimension");
  cmd->add_option("--epochs", f.epochs);
  cmd->add_option("--lr", f.lr);
  cmd->add_option("--lr-drop-epoch", f.lr_drop_epoch);
  cmd->add_option("--lr-drop-factor", f.lr_drop_factor);
  cmd->add_option("--curriculum-switch", f.curriculum_switch,
                  "epoch to switch from SH to the configured loss");
  cmd->add_option("--temperature", f.temperature,
                  "softmax temperature (weighted loss)");
  cmd->add_option("--eval-every", f.eval_every);
  cmd->add_option("--seed", f.seed);
  cmd->add_option("--threads", f.threads);
  cmd->add_flag("--timing,!--no-timing", f.timing,
                "wall-clock seconds in the trace CSV");
}

vse::TrainConfig make_train_config(const TrainFlags& f) {
  vse::TrainConfig config;
  config.loss.kind = vse::loss_kind_from_string(f.loss);
  config.loss.margin = f.margin;
  config.loss.temperature = f.temperature;
  config.loss.similarity = vse::similarity_kind_from_string(f.similarity);
  config.sampler.batch_size = f.batch_size;
  config.sampler.neg_pool_size = f.neg_size > 0 ? f.neg_size : f.batch_size;
  config.sampler.seed = f.seed;
  config.schedule.base_lr = f.lr;
  // no drop when the run is shorter than the drop epoch
  config.schedule.drop_epoch = std::min(f.lr_drop_epoch, f.epochs);
  config.schedule.drop_factor = f.lr_drop_factor;
  config.schedule.total_epochs = f.epochs;
  if (f.curriculum_switch >= 0) {
    config.curriculum_switch_epoch = f.curriculum_switch;
  }
  config.eval_every = f.eval_every;
  config.seed = f.seed;
  config.threads = f.threads;
  return config;
}

void fill_train_manifest(Manifest& m, const TrainFlags& f) {
  m.set("arg.train", f.train_path);
  m.set("arg.val", f.val_path);
  m.set("arg.out-snapshot", f.out_snapshot);
  m.set("arg.out-trace", f.out_trace);
  m.set("arg.out-manifest", f.out_manifest);
  m.set("arg.loss", f.loss);
  m.set("arg.margin", f.margin);
  m.set("arg.batch-size", static_cast<long long>(f.batch_size));
  m.set("arg.neg-size", static_cast<long long>(f.neg_size));
  m.set("arg.similarity", f.similarity);
  m.set("arg.abs", f.abs_flag);
  m.set("arg.normalize-image", f.normalize_image);
  m.set("arg.normalize-caption", f.normalize_caption);
  m.set("arg.dim", static_cast<long long>(f.dim));
  m.set("arg.epochs", static_cast<long long>(f.epochs));
  m.set("arg.lr", f.lr);
  m.set("arg.lr-drop-epoch", static_cast<long long>(f.lr_drop_epoch));
  m.set("arg.lr-drop-factor", f.lr_drop_factor);
  if (f.curriculum_switch >= 0) {
    m.set("arg.curriculum-switch", static_cast<long long>(f.curriculum_switch));
  }
  m.set("arg.temperature", f.temperature);
  m.set("arg.eval-every", static_cast<long long>(f.eval_every));
  m.set("arg.seed", static_cast<long long>(f.seed));
  m.set("arg.timing", f.timing);
}

void print_report(const vse::RetrievalReport& rep) {
  auto dir = [](const char* prefix, const vse::DirectionReport& d) {
    std::printf("%s.r1=%.2f\n%s.r5=%.2f\n%s.r10=%.2f\n%s.medr=%.2f\n"
                "%s.meanr=%.2f\n",
                prefix, d.r1, prefix, d.r5, prefix, d.r10, prefix, d.med_r,
                prefix, d.mean_r);
  };
  dir("caption_retrieval", rep.caption_retrieval);
  dir("image_retrieval", rep.image_retrieval);
  std::printf("rsum=%.2f\n", rep.rsum);
}

struct GenFlags {
  vse::SyntheticSpec spec;
  std::string out, out_val, out_test;
  int val_images = 0, test_images = 0;
};

int cmd_gen(CLI::App& app) {
  auto g = std::make_shared<GenFlags>();
  vse::SyntheticSpec& spec = g->spec;
  app.add_option("--n-images", spec.n_images)->required();
  app.add_option("--cpi", spec.cpi);
  app.add_option("--latent", spec.latent_dim);
  app.add_option("--d-img", spec.d_img);
  app.add_option("--d-cap", spec.d_cap);
  app.add_option("--sigma", spec.noise_sigma);
  app.add_option("--confuser-size", spec.confuser_cluster_size);
  app.add_option("--confuser-fraction", spec.confuser_fraction);
  app.add_option("--confuser-angle", spec.confuser_angle_deg);
  app.add_option("--seed", spec.seed);
  app.add_option("--out", g->out, "output VSEF file")->required();
  app.add_option("--val-images", g->val_images,
                 "extra images written to --out-val");
  app.add_option("--out-val", g->out_val);
  app.add_option("--test-images", g->test_images,
                 "extra images written to --out-test");
  app.add_option("--out-test", g->out_test);

  app.callback([g] {
    const vse::SyntheticSpec& spec = g->spec;
    const std::string& out = g->out;
    const std::string& out_val = g->out_val;
    const std::string& out_test = g->out_test;
    const int val_images = g->val_images;
    const int test_images = g->test_images;
    if ((val_images > 0) != !out_val.empty() ||
        (test_images > 0) != !out_test.empty()) {
      throw vse::ConfigError(
          "--val-images/--out-val and --test-images/--out-test go together");
    }
    Manifest manifest;
    manifest.set("command", std::string("gen"));
    manifest.set("tool_version", std::string(kToolVersion));
    manifest.set("arg.n-images", static_cast<long long>(spec.n_images));
    manifest.set("arg.cpi", static_cast<long long>(spec.cpi));
    manifest.set("arg.latent", static_cast<long long>(spec.latent_dim));
    manifest.set("arg.d-img", static_cast<long long>(spec.d_img));
    manifest.set("arg.d-cap", static_cast<long long>(spec.d_cap));
    manifest.set("arg.sigma", spec.noise_sigma);
    manifest.set("arg.confuser-size",
                 static_cast<long long>(spec.confuser_cluster_size));
    manifest.set("arg.confuser-fraction", spec.confuser_fraction);
    manifest.set("arg.confuser-angle", spec.confuser_angle_deg);
    manifest.set("arg.seed", static_cast<long long>(spec.seed));
    manifest.set("arg.out", out);
    if (val_images > 0) {
      manifest.set("arg.val-images", static_cast<long long>(val_images));
      manifest.set("arg.out-val", out_val);
    }
    if (test_images > 0) {
      manifest.set("arg.test-images", static_cast<long long>(test_images));
      manifest.set("arg.out-test", out_test);
    }
    manifest.write(out + ".manifest");

    vse::SyntheticSpec full = spec;
    full.n_images = spec.n_images + val_images + test_images;
    full.validate();
    vse::GeneratedDataset gen = vse::generate(full);
    vse::write_features(gen.data.slice(0, spec.n_images), out);
    if (val_images > 0) {
      vse::write_features(gen.data.slice(spec.n_images, val_images), out_val);
    }
    if (test_images > 0) {
      vse::write_features(
          gen.data.slice(spec.n_images + val_images, test_images), out_test);
    }
  });
  return 0;
}

int cmd_train(CLI::App& app) {
  auto flags = std::make_shared<TrainFlags>();
  add_train_flags(&app, *flags, /*with_io=*/true);
  app.callback([flags] {
    TrainFlags& f = *flags;
    if (f.out_manifest.empty()) f.out_manifest = f.out_trace + ".manifest";
    Manifest manifest;
    manifest.set("command", std::string("train"));
    manifest.set("tool_version", std::string(kToolVersion));
    fill_train_manifest(manifest, f);
    manifest.write(f.out_manifest);  // written even if the run fails

    vse::TrainConfig config = make_train_config(f);
    vse::PairedFeatureSet train_set = vse::read_features(f.train_path);
    vse::PairedFeatureSet val_set = vse::read_features(f.val_path);
    vse::ProjectionModel model = vse::ProjectionModel::random_init(
        static_cast<int>(train_set.image_features.cols()),
        static_cast<int>(train_set.caption_features.cols()), f.dim, f.seed);
    model.normalize_image = f.normalize_image;
    model.normalize_caption = f.normalize_caption;
    model.abs_before_similarity = f.abs_flag;

    vse::TrainResult result =
        vse::train(train_set, val_set, std::move(model), config);
    vse::write_trace_csv(result.trace, f.out_trace, f.timing);
    vse::write_snapshot(result.best.model, config.loss.similarity,
                        f.out_snapshot);
    std::printf("best_epoch=%d\n", result.best.epoch);
    print_report(result.best.report);
  });
  return 0;
}

int cmd_eval(CLI::App& app) {
  auto snapshot = std::make_shared<std::string>();
  auto data = std::make_shared<std::string>();
  auto out_csv = std::make_shared<std::string>();
  auto protocol = std::make_shared<vse::EvalProtocol>();
  auto threads = std::make_shared<int>(1);
  app.add_option("--snapshot", *snapshot)->required();
  app.add_option("--data", *data, "test VSEF file")->required();
  app.add_option("--folds", protocol->folds);
  app.add_option("--fold-size", protocol->fold_size);
  app.add_option("--threads", *threads);
  app.add_option("--out-csv", *out_csv, "append the report as one CSV row");
  app.callback([=] {
    Manifest manifest;
    manifest.set("command", std::string("eval"));
    manifest.set("tool_version", std::string(kToolVersion));
    manifest.set("arg.snapshot", *snapshot);
    manifest.set("arg.data", *data);
    manifest.set("arg.folds", static_cast<long long>(protocol->folds));
    manifest.set("arg.fold-size", static_cast<long long>(protocol->fold_size));
    if (!out_csv->empty()) manifest.set("arg.out-csv", *out_csv);
    manifest.write(*data + ".eval.manifest");

    vse::LoadedSnapshot snap = vse::read_snapshot(*snapshot);
    vse::PairedFeatureSet set = vse::read_features(*data);
    vse::EvalProtocol proto = *protocol;
    proto.cpi = set.cpi;
    vse::RetrievalReport rep = vse::evaluate_folds(
        snap.model, snap.kind, set.image_features, set.caption_features,
        proto, *threads);
    print_report(rep);
    if (!out_csv->empty()) {
      const bool fresh = !std::ifstream(*out_csv).good();
      std::ofstream csv(*out_csv, std::ios::app);
      if (!csv) throw vse::FormatError("cannot open " + *out_csv);
      if (fresh) {
        csv << "r1_cap,r5_cap,r10_cap,r1_img,r5_img,r10_img,medr_cap,"
               "medr_img,meanr_cap,meanr_img,rsum\n";
      }
      char buf[512];
      const auto& c = rep.caption_retrieval;
      const auto& i = rep.image_retrieval;
      std::snprintf(buf, sizeof(buf),
                    "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.4f,%.4f,%.6f,%.6f,%.6f\n",
                    c.r1, c.r5, c.r10, i.r1, i.r5, i.r10, c.med_r, i.med_r,
                    c.mean_r, i.mean_r, rep.rsum);
      csv << buf;
    }
  });
  return 0;
}

int cmd_sweep(CLI::App& app) {
  auto flags = std::make_shared<TrainFlags>();
  auto test_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>("sweep.csv");
  auto sizes = std::make_shared<std::vector<int>>(
      std::vector<int>{2, 4, 8, 16, 32, 64, 128, 256, 512});
  app.add_option("--train", flags->train_path)->required();
  app.add_option("--val", flags->val_path)->required();
  app.add_option("--test", *test_path)->required();
  app.add_option("--out", *out, "sweep CSV output");
  app.add_option("--sizes", *sizes, "negative set sizes")
      ->delimiter(',')
      ->expected(1, -1);
  add_train_flags(&app, *flags, /*with_io=*/false);
  app.callback([=] {
    if (sizes->empty()) {
      throw CLI::ValidationError("--sizes", "sizes list is empty");
    }
    Manifest manifest;
    manifest.set("command", std::string("sweep-negsize"));
    manifest.set("tool_version", std::string(kToolVersion));
    fill_train_manifest(manifest, *flags);
    manifest.set("arg.test", *test_path);
    manifest.set("arg.out", *out);
    std::ostringstream joined;
    for (std::size_t i = 0; i < sizes->size(); ++i) {
      if (i) joined << ",";
      joined << (*sizes)[i];
    }
    manifest.set("arg.sizes", joined.str());
    manifest.write(*out + ".manifest");

    vse::TrainConfig config = make_train_config(*flags);
    vse::PairedFeatureSet train_set = vse::read_features(flags->train_path);
    vse::PairedFeatureSet val_set = vse::read_features(flags->val_path);
    vse::PairedFeatureSet test_set = vse::read_features(*test_path);
    std::vector<vse::SweepRow> rows = vse::sweep_negsize(
        train_set, val_set, test_set, config, flags->dim, *sizes);
    vse::write_sweep_csv(rows, *out);
    for (const auto& row : rows) {
      if (row.ok) {
        std::printf("neg_size=%d r1_cap=%.2f rsum=%.2f\n", row.neg_size,
                    row.test_report.caption_retrieval.r1,
                    row.test_report.rsum);
      } else {
        std::printf("neg_size=%d error=%s\n", row.neg_size, row.error.c_str());
      }
    }
  });
  return 0;
}

int cmd_analyze(CLI::App& app) {
  auto q = std::make_shared<double>(0.9);
  auto eps = std::make_shared<double>(0.01);
  auto ms = std::make_shared<std::vector<int>>();
  auto trials = std::make_shared<long>(0);
  auto seed = std::make_shared<std::uint64_t>(0);
  auto out = std::make_shared<std::string>("-");
  app.add_option("--q", *q, "per-draw miss probability");
  app.add_option("--eps", *eps, "target probability threshold");
  app.add_option("--m", *ms, "mini-batch sizes to tabulate")
      ->delimiter(',')
      ->expected(1, -1);
  app.add_option("--monte-carlo", *trials, "simulation trials (0 = skip)");
  app.add_option("--seed", *seed);
  app.add_option("--out", *out, "CSV output path, - for stdout");
  app.callback([=] {
    if (ms->empty()) *ms = {2, 4, 8, 16, 32, 44, 45, 64, 128, 256, 512};
    std::ostringstream csv;
    csv << "q,M,closed_form,simulated,stderr\n";
    char buf[256];
    for (int m : *ms) {
      double closed = vse::miss_probability(*q, m);
      if (*trials > 0) {
        vse::MonteCarloEstimate est =
            vse::monte_carlo_miss(*q, m, *trials, *seed);
        std::snprintf(buf, sizeof(buf), "%.6g,%d,%.8g,%.8g,%.8g\n", *q, m,
                      closed, est.probability, est.stderr_);
      } else {
        std::snprintf(buf, sizeof(buf), "%.6g,%d,%.8g,,\n", *q, m, closed);
      }
      csv << buf;
    }
    csv << "min_batch_for," << *eps << "," << vse::min_batch_for(*q, *eps)
        << ",,\n";
    if (*out == "-") {
      std::cout << csv.str();
    } else {
      std::ofstream file(*out);
      if (!file) throw vse::FormatError("cannot open " + *out);
      file << csv.str();
      Manifest manifest;
      manifest.set("command", std::string("analyze"));
      manifest.set("tool_version", std::string(kToolVersion));
      manifest.set("arg.q", *q);
      manifest.set("arg.eps", *eps);
      std::ostringstream joined;
      for (std::size_t i = 0; i < ms->size(); ++i) {
        if (i) joined << ",";
        joined << (*ms)[i];
      }
      manifest.set("arg.m", joined.str());
      manifest.set("arg.monte-carlo", static_cast<long long>(*trials));
      manifest.set("arg.seed", static_cast<long long>(*seed));
      manifest.set("arg.out", *out);
      manifest.write(*out + ".manifest");
    }
  });
  return 0;
}

int run(std::vector<std::string> args) {
  CLI::App app{"joint-embedding training and retrieval evaluation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  cmd_gen(*app.add_subcommand("gen", "generate a synthetic feature file"));
  cmd_train(*app.add_subcommand("train", "train a joint embedding"));
  cmd_eval(*app.add_subcommand("eval", "evaluate a snapshot"));
  cmd_sweep(*app.add_subcommand("sweep-negsize",
                                "train across negative set sizes"));
  cmd_analyze(*app.add_subcommand(
      "analyze", "hard-negative sampling probability table"));

  CLI::App* replay =
      app.add_subcommand("replay", "re-run a command from its manifest");
  auto manifest_path = std::make_shared<std::string>();
  replay->add_option("manifest", *manifest_path)->required();
  replay->callback(
      [=] { std::exit(run(Manifest::replay_args(*manifest_path))); });

  // CLI11 consumes arguments in reverse
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(std::move(args));
}
