// Command-line front end: dataset synthesis, training, evaluation, cluster
// inspection, and the cluster-count sweep. Every run emits one manifest so
// results can be reproduced from the recorded config and seed.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "eventfuse/encoders.hpp"
#include "eventfuse/errors.hpp"
#include "eventfuse/metrics.hpp"
#include "eventfuse/model.hpp"
#include "eventfuse/tmm.hpp"
#include "eventfuse/train.hpp"

namespace fs = std::filesystem;
using namespace eventfuse;

namespace {

constexpr const char* kOutDirEnv = "EVENTFUSE_OUT_DIR";

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  std::string config_path;

  // Individual flag overrides; applied after the config file.
  std::optional<Index> T, M, K, batch_size, epochs;
  std::optional<double> learning_rate, l2_lambda, val_fraction;
  std::optional<bool> use_nonvisual, use_tmm, use_cab;

  PipelineConfig resolve() const {
    PipelineConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) {
        throw IoError("cannot open config file '" + config_path + "'");
      }
      Json j;
      try {
        in >> j;
      } catch (const Json::parse_error& e) {
        throw ParseError("config file '" + config_path + "': " + e.what());
      }
      cfg = j.get<PipelineConfig>();
    }
    if (seed) cfg.seed = *seed;
    if (T) cfg.T = *T;
    if (M) cfg.M = *M;
    if (K) cfg.K = *K;
    if (batch_size) cfg.batch_size = *batch_size;
    if (epochs) cfg.epochs = *epochs;
    if (learning_rate) cfg.learning_rate = *learning_rate;
    if (l2_lambda) cfg.l2_lambda = *l2_lambda;
    if (val_fraction) cfg.val_fraction = *val_fraction;
    if (use_nonvisual) cfg.use_nonvisual = *use_nonvisual;
    if (use_tmm) cfg.use_tmm = *use_tmm;
    if (use_cab) cfg.use_cab = *use_cab;
    cfg.validate();
    return cfg;
  }
};

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot hash '" + path + "'");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string("fnv1a64:") + buf;
}

void write_text(const std::string& path, const std::string& text) {
  if (fs::path(path).has_parent_path()) {
    fs::create_directories(fs::path(path).parent_path());
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write '" + path + "'");
  }
  out << text;
  if (!out) {
    throw IoError("write failed for '" + path + "'");
  }
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, const PipelineConfig& cfg)
      : start_(std::chrono::steady_clock::now()) {
    manifest_["command"] = std::move(command);
    manifest_["config"] = cfg;
    manifest_["seed"] = cfg.seed;
    manifest_["inputs"] = Json::array();
    manifest_["outputs"] = Json::array();
    manifest_["artifact_hashes"] = Json::object();
  }

  void add_input(const std::string& path) {
    manifest_["inputs"].push_back(path);
  }
  void add_output(const std::string& path) {
    manifest_["outputs"].push_back(path);
    manifest_["artifact_hashes"][path] = file_hash(path);
  }

  void write(const std::string& path) {
    const auto elapsed = std::chrono::steady_clock::now() - start_;
    manifest_["duration_seconds"] =
        std::chrono::duration<double>(elapsed).count();
    write_text(path, manifest_.dump(2) + "\n");
  }

 private:
  Json manifest_;
  std::chrono::steady_clock::time_point start_;
};

std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env != nullptr && *env != '\0' ? std::string(env) : std::string(".");
}

std::string manifest_path_for(const std::string& out,
                              const std::string& command) {
  if (out.empty()) {
    return (fs::path(default_out_dir()) / ("manifest-" + command + ".json"))
        .string();
  }
  if (fs::is_directory(out) || !fs::path(out).has_extension()) {
    return (fs::path(out) / "manifest.json").string();
  }
  return out + ".manifest.json";
}

int run_synth(const GlobalOptions& global, const std::string& out,
              Index count, Index segments, double noise) {
  const PipelineConfig cfg = global.resolve();
  ManifestWriter manifest("synth", cfg);
  const std::vector<SampleRecord> records =
      generate_synthetic(cfg, count, segments, noise);
  save_dataset(records, out);
  manifest.add_output(out);
  manifest.write(manifest_path_for(out, "synth"));
  std::cout << "wrote " << records.size() << " samples to " << out << "\n";
  return 0;
}

int run_train(const GlobalOptions& global, const std::string& data,
              const std::string& out_dir) {
  const PipelineConfig cfg = global.resolve();
  ManifestWriter manifest("train", cfg);
  manifest.add_input(data);
  const std::vector<SampleRecord> dataset = load_dataset(data);
  const TrainResult result = train(dataset, cfg);

  fs::create_directories(out_dir);
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.json").string();
  const std::string report_path =
      (fs::path(out_dir) / "train_report.json").string();
  save_checkpoint(ckpt_path, result.params, cfg, result.schema);
  write_text(report_path, json_from_report(result.report).dump(2) + "\n");
  manifest.add_output(ckpt_path);
  manifest.add_output(report_path);
  manifest.write((fs::path(out_dir) / "manifest.json").string());

  std::cout << "trained " << cfg.epochs << " epochs on " << dataset.size()
            << " samples";
  if (!result.report.epoch_loss.empty()) {
    std::cout << "; final loss " << result.report.epoch_loss.back();
  }
  if (result.report.final_val) {
    const MetricReport& v = *result.report.final_val;
    std::cout << "; held-out acc " << v.acc;
    if (v.auc) std::cout << ", auc " << *v.auc;
  }
  std::cout << "\n";
  return 0;
}

int run_eval(const GlobalOptions& global, const std::string& data,
             const std::string& ckpt_path, const std::string& out) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  PipelineConfig cfg = ckpt.config;
  if (!global.config_path.empty() || global.T || global.M || global.K) {
    // An explicit config must agree with the stored parameter shapes.
    cfg = global.resolve();
    check_param_shapes(ckpt.params, cfg, ckpt.schema);
  }
  ManifestWriter manifest("eval", cfg);
  manifest.add_input(data);
  manifest.add_input(ckpt_path);

  const std::vector<SampleRecord> dataset = load_dataset(data);
  if (dataset.empty()) {
    throw ArgumentError("eval: dataset is empty");
  }
  ckpt.schema.check_sample(dataset.front());
  std::vector<int> labels;
  for (const SampleRecord& r : dataset) {
    labels.push_back(r.label);
  }
  const MetricReport metrics =
      evaluate(predict_all(dataset, ckpt.params, cfg), labels);
  const std::string text = json_from_metrics(metrics).dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    write_text(out, text);
    manifest.add_output(out);
  }
  manifest.write(manifest_path_for(out, "eval"));
  return 0;
}

int run_sweep(const GlobalOptions& global, const std::string& data,
              std::vector<Index> m_list, const std::string& out) {
  const PipelineConfig base = global.resolve();
  if (m_list.empty()) {
    m_list = {2, 3, 4, 5};
  }
  ManifestWriter manifest("sweep-m", base);
  manifest.add_input(data);
  const std::vector<SampleRecord> dataset = load_dataset(data);

  Json table = Json::array();
  std::cout << "M      auc      acc       f1     prec      rec\n";
  for (Index m : m_list) {
    PipelineConfig cfg = base;
    cfg.M = m;
    cfg.validate();
    const TrainResult result = train(dataset, cfg);
    const MetricReport metrics = result.report.final_val
                                     ? *result.report.final_val
                                     : result.report.final_train;
    table.push_back(Json{{"M", m},
                         {"metrics", json_from_metrics(metrics)},
                         {"split", result.report.final_val ? "validation"
                                                           : "train"}});
    char line[96];
    std::snprintf(line, sizeof(line), "%-4lld %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                  static_cast<long long>(m), metrics.auc.value_or(0.0),
                  metrics.acc, metrics.f1, metrics.precision, metrics.recall);
    std::cout << line;
  }
  if (!out.empty()) {
    write_text(out, table.dump(2) + "\n");
    manifest.add_output(out);
  }
  manifest.write(manifest_path_for(out, "sweep-m"));
  return 0;
}

int run_inspect(const GlobalOptions& global, const std::string& data,
                const std::string& sample_id, const std::string& ckpt_path,
                const std::string& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  PipelineConfig cfg = ckpt.config;
  if (!global.config_path.empty()) {
    cfg = global.resolve();
    check_param_shapes(ckpt.params, cfg, ckpt.schema);
  }
  ManifestWriter manifest("inspect", cfg);
  manifest.add_input(data);
  manifest.add_input(ckpt_path);

  const std::vector<SampleRecord> dataset = load_dataset(data);
  const SampleRecord* sample = nullptr;
  for (const SampleRecord& r : dataset) {
    if (r.id == sample_id) {
      sample = &r;
      break;
    }
  }
  if (sample == nullptr) {
    throw NotFoundError("inspect: no sample with id '" + sample_id + "'");
  }

  const SampleForward fwd = forward_sample(*sample, ckpt.params, cfg);
  Json dump;
  dump["sample_id"] = sample_id;
  dump["label"] = sample->label;
  Json visual;
  if (cfg.use_tmm) {
    visual["density_profile"] =
        json_from_profile(compute_density(fwd.visual.data, cfg.K));
  }
  visual["event_set"] = json_from_events(fwd.events_visual);
  dump["visual"] = std::move(visual);
  if (cfg.use_nonvisual) {
    Json nonvisual;
    if (cfg.use_tmm) {
      nonvisual["density_profile"] =
          json_from_profile(compute_density(fwd.nonvisual.data, cfg.K));
    }
    nonvisual["event_set"] = json_from_events(fwd.events_nonvisual);
    dump["nonvisual"] = std::move(nonvisual);
  }
  dump["attention_trace"] = json_from_trace(fwd.trace);

  const std::string text = dump.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    write_text(out, text);
    manifest.add_output(out);
  }
  manifest.write(manifest_path_for(out, "inspect"));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequence classifier built on temporal event merging and "
               "attention fusion"};
  app.require_subcommand(1);

  GlobalOptions global;
  app.add_option("--seed", global.seed, "Seed overriding the config file");
  app.add_option("--config", global.config_path,
                 "JSON config file (flags override its values)");
  app.add_option("--T", global.T, "Observation length");
  app.add_option("--M", global.M, "Number of merged events");
  app.add_option("--K", global.K, "Density neighbors");
  app.add_option("--batch-size", global.batch_size, "Mini-batch size");
  app.add_option("--epochs", global.epochs, "Training epochs");
  app.add_option("--learning-rate", global.learning_rate, "RMSProp step size");
  app.add_option("--l2-lambda", global.l2_lambda, "L2 regularization weight");
  app.add_option("--val-fraction", global.val_fraction,
                 "Held-out fraction for validation");
  app.add_option("--use-nonvisual", global.use_nonvisual,
                 "Enable the non-visual branch");
  app.add_option("--use-tmm", global.use_tmm, "Enable temporal merging");
  app.add_option("--use-cab", global.use_cab, "Enable learned attention");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  std::string synth_out;
  Index synth_count = 100;
  Index synth_segments = 3;
  double synth_noise = 0.1;
  synth->add_option("--out", synth_out, "Output dataset path")->required();
  synth->add_option("--count", synth_count, "Number of samples");
  synth->add_option("--segments", synth_segments, "Planted segments per sample");
  synth->add_option("--noise", synth_noise, "Gaussian noise scale");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  std::string train_data, train_out = "run";
  train_cmd->add_option("--data", train_data, "Training dataset")->required();
  train_cmd->add_option("--out", train_out, "Output directory");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_out;
  eval_cmd->add_option("--data", eval_data, "Evaluation dataset")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--out", eval_out, "Metrics JSON output path");

  auto* sweep = app.add_subcommand("sweep-m",
                                   "Train once per event count and compare");
  std::string sweep_data, sweep_out;
  std::vector<Index> sweep_m;
  sweep->add_option("--data", sweep_data, "Training dataset")->required();
  sweep->add_option("--m-list", sweep_m, "Event counts to try (default 2 3 4 5)");
  sweep->add_option("--out", sweep_out, "Table JSON output path");

  auto* inspect = app.add_subcommand("inspect",
                                     "Dump clustering and attention internals "
                                     "for one sample");
  std::string inspect_data, inspect_id, inspect_ckpt, inspect_out;
  inspect->add_option("--data", inspect_data, "Dataset path")->required();
  inspect->add_option("--sample-id", inspect_id, "Sample id")->required();
  inspect->add_option("--checkpoint", inspect_ckpt, "Checkpoint file")
      ->required();
  inspect->add_option("--out", inspect_out, "Dump JSON output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth->parsed()) {
      return run_synth(global, synth_out, synth_count, synth_segments,
                       synth_noise);
    }
    if (train_cmd->parsed()) {
      return run_train(global, train_data, train_out);
    }
    if (eval_cmd->parsed()) {
      return run_eval(global, eval_data, eval_ckpt, eval_out);
    }
    if (sweep->parsed()) {
      return run_sweep(global, sweep_data, sweep_m, sweep_out);
    }
    if (inspect->parsed()) {
      return run_inspect(global, inspect_data, inspect_id, inspect_ckpt,
                         inspect_out);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
