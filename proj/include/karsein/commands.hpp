#pragma once

#include "karsein/analysis.hpp"
#include "karsein/checkpoint.hpp"
#include "karsein/reference_nets.hpp"
#include "karsein/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace karsein {

struct DatasetConfig {
  // A MovieLens-1M directory (ratings.dat, users.dat, movies.dat), an
  // encoded dataset directory (manifest.json) or a delimited text file.
  std::string path;
  std::string schema = "ml1m";
  std::uint64_t split_seed = 2024;
  std::string cache;  // optional encoded-dataset cache directory
};

struct AnalysisConfig {
  double redundancy_threshold = 0.01;
  int finetune_epochs = 3;
  int activation_samples = 101;
  double r2_threshold = 0.9;
  double kan_prune_threshold = 0.003;
};

struct SyntheticRunConfig {
  int max_steps = 5000;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  int grid = 10;
  int order = 3;
  int train_points = 10000;
  int batch_size = 256;
};

struct RunConfig {
  DatasetConfig dataset;
  ModelSpec model;
  TrainConfig train;
  AnalysisConfig analysis;
  SyntheticRunConfig synthetic;
  std::vector<std::vector<int>> pairwise_sweep{{}, {1}, {1, 2}, {1, 2, 3}};
  std::vector<std::uint64_t> seeds{2024};
  std::string out = "runs/latest";
  bool force = false;
  std::string checkpoint;
  std::string precision = "double";  // gradcheck only

  void validate() const;
};

/// Strict parse: unknown keys anywhere raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

/// Dataset named by the config, encoded with its split seed.
EncodedDataset load_dataset(const DatasetConfig& config);

/// Number of worker threads for independent runs (KARSEIN_THREADS caps it).
int worker_threads();

// Each command writes into a staging directory that is renamed onto
// config.out only after all work succeeded, and always leaves
// out/summary.json. The returned JSON is that summary.
nlohmann::json cmd_train(const RunConfig& config);
nlohmann::json cmd_evaluate(const RunConfig& config);
nlohmann::json cmd_ablate(const RunConfig& config);
nlohmann::json cmd_synthetic(const RunConfig& config);
nlohmann::json cmd_explain(const RunConfig& config);
nlohmann::json cmd_prune(const RunConfig& config);

struct GradcheckOptions {
  std::uint64_t seed = 7;
  std::string precision = "double";
  HeadMode head = HeadMode::Mean;
  double tolerance = 1e-4;
  double corrupt_scale = 1.0;  // test hook: scales one analytic gradient
};

struct GradcheckResult {
  bool passed = false;
  GradCheckReport report;
  double tolerance = 1e-4;
};

GradcheckResult run_gradcheck(const GradcheckOptions& options);

/// Mini model used by gradcheck: m = 3, D = 4, explicit 4-1, implicit 4-1.
KarseinModel<double> gradcheck_model(std::uint64_t seed, HeadMode head = HeadMode::Mean);

void write_metrics_csv(const std::filesystem::path& path, const TrainReport& report);
nlohmann::json to_json(const TrainReport& r);
nlohmann::json to_json(const EvalMetrics& m);

}  // namespace karsein
