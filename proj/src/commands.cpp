#include "karsein/commands.hpp"

#include "karsein/json_util.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <unistd.h>

namespace karsein {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (out.empty()) throw ConfigError("out must not be empty");
  if (analysis.redundancy_threshold < 0.0) throw ConfigError("analysis.redundancy_threshold must be >= 0");
  if (analysis.finetune_epochs < 0) throw ConfigError("analysis.finetune_epochs must be >= 0");
  if (analysis.activation_samples < 8) throw ConfigError("analysis.activation_samples must be >= 8");
  if (analysis.kan_prune_threshold < 0.0) throw ConfigError("analysis.kan_prune_threshold must be >= 0");
  if (synthetic.max_steps < 0 || synthetic.batch_size < 1 || synthetic.train_points < 1) {
    throw ConfigError("synthetic: max_steps >= 0, batch_size >= 1 and train_points >= 1 required");
  }
  if (precision != "double" && precision != "float") throw ConfigError("precision must be 'double' or 'float'");
}

RunConfig run_config_from_json(const json& j) {
  require_keys(j, {"dataset", "model", "train", "analysis", "synthetic", "pairwise_sweep", "seed", "seeds", "out"},
               "config");
  RunConfig c;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    require_keys(d, {"path", "schema", "split_seed", "cache"}, "dataset");
    read_opt(d, "path", c.dataset.path, "dataset");
    read_opt(d, "schema", c.dataset.schema, "dataset");
    read_opt(d, "split_seed", c.dataset.split_seed, "dataset");
    read_opt(d, "cache", c.dataset.cache, "dataset");
    DatasetSchema::named(c.dataset.schema);
  }
  if (j.contains("model")) c.model = model_spec_from_json(j.at("model"));
  if (j.contains("train")) {
    const auto& t = j.at("train");
    require_keys(t, {"lr", "batch_size", "max_epochs", "patience", "lambda1", "lambda2", "eval_batch"}, "train");
    read_opt(t, "lr", c.train.lr, "train");
    read_opt(t, "batch_size", c.train.batch_size, "train");
    read_opt(t, "max_epochs", c.train.max_epochs, "train");
    read_opt(t, "patience", c.train.patience, "train");
    read_opt(t, "lambda1", c.train.reg.l1, "train");
    read_opt(t, "lambda2", c.train.reg.entropy, "train");
    read_opt(t, "eval_batch", c.train.eval_batch, "train");
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    require_keys(a,
                 {"redundancy_threshold", "finetune_epochs", "activation_samples", "r2_threshold",
                  "kan_prune_threshold"},
                 "analysis");
    read_opt(a, "redundancy_threshold", c.analysis.redundancy_threshold, "analysis");
    read_opt(a, "finetune_epochs", c.analysis.finetune_epochs, "analysis");
    read_opt(a, "activation_samples", c.analysis.activation_samples, "analysis");
    read_opt(a, "r2_threshold", c.analysis.r2_threshold, "analysis");
    read_opt(a, "kan_prune_threshold", c.analysis.kan_prune_threshold, "analysis");
  }
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    require_keys(s, {"max_steps", "lr", "seed", "grid", "order", "train_points", "batch_size"}, "synthetic");
    read_opt(s, "max_steps", c.synthetic.max_steps, "synthetic");
    read_opt(s, "lr", c.synthetic.lr, "synthetic");
    read_opt(s, "seed", c.synthetic.seed, "synthetic");
    read_opt(s, "grid", c.synthetic.grid, "synthetic");
    read_opt(s, "order", c.synthetic.order, "synthetic");
    read_opt(s, "train_points", c.synthetic.train_points, "synthetic");
    read_opt(s, "batch_size", c.synthetic.batch_size, "synthetic");
  }
  read_opt(j, "pairwise_sweep", c.pairwise_sweep, "config");
  if (j.contains("seed") && j.contains("seeds")) throw ConfigError("config: give either seed or seeds, not both");
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read_opt(j, "seed", s, "config");
    c.seeds = {s};
  }
  read_opt(j, "seeds", c.seeds, "config");
  read_opt(j, "out", c.out, "config");
  if (!c.seeds.empty()) c.train.seed = c.seeds.front();
  c.validate();
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const RunConfig& c) {
  return {{"dataset",
           {{"path", c.dataset.path},
            {"schema", c.dataset.schema},
            {"split_seed", c.dataset.split_seed},
            {"cache", c.dataset.cache}}},
          {"model", to_json(c.model)},
          {"train",
           {{"lr", c.train.lr},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"patience", c.train.patience},
            {"lambda1", c.train.reg.l1},
            {"lambda2", c.train.reg.entropy},
            {"eval_batch", c.train.eval_batch}}},
          {"analysis",
           {{"redundancy_threshold", c.analysis.redundancy_threshold},
            {"finetune_epochs", c.analysis.finetune_epochs},
            {"activation_samples", c.analysis.activation_samples},
            {"r2_threshold", c.analysis.r2_threshold},
            {"kan_prune_threshold", c.analysis.kan_prune_threshold}}},
          {"synthetic",
           {{"max_steps", c.synthetic.max_steps},
            {"lr", c.synthetic.lr},
            {"seed", c.synthetic.seed},
            {"grid", c.synthetic.grid},
            {"order", c.synthetic.order},
            {"train_points", c.synthetic.train_points},
            {"batch_size", c.synthetic.batch_size}}},
          {"pairwise_sweep", c.pairwise_sweep},
          {"seeds", c.seeds},
          {"out", c.out}};
}

// ---------------------------------------------------------------- helpers

namespace {

/// Collects a command's files in a sibling staging directory and moves it
/// onto the target only on commit; an abandoned stage is deleted.
class OutputDir {
 public:
  OutputDir(const fs::path& target, bool force) : target_(target) {
    check_target(target, force);
    staging_ = target;
    staging_ += ".partial-" + std::to_string(::getpid());
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;
  ~OutputDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  static void check_target(const fs::path& target, bool force) {
    if (fs::exists(target) && !force && !(fs::is_directory(target) && fs::is_empty(target))) {
      throw ConfigError("output " + target.string() + " already exists (use --force to overwrite)");
    }
  }

  const fs::path& path() const { return staging_; }

  void commit(const json& summary) {
    std::ofstream(staging_ / "summary.json") << summary.dump(2) << "\n";
    if (fs::exists(target_)) fs::remove_all(target_);
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

/// Runs independent jobs on up to worker_threads() threads; the first
/// exception (in job order) is rethrown after all jobs finish.
void run_parallel(std::vector<std::function<void()>>& jobs) {
  const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      try {
        jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= jobs.size()) return;
            i = next++;
          }
          try {
            jobs[i]();
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_checkpoint(const RunConfig& config) {
  if (config.checkpoint.empty()) throw ConfigError("--checkpoint is required");
}

void require_same_vocab(const Checkpoint& ck, const EncodedDataset& data) {
  bool same = ck.vocab.size() == data.vocab.size();
  for (std::size_t f = 0; same && f < ck.vocab.size(); ++f) same = ck.vocab[f].values() == data.vocab[f].values();
  if (!same) throw DataError("checkpoint vocabulary does not match the dataset encoding (different data or split_seed)");
}

struct SeedRun {
  std::uint64_t seed = 0;
  TrainReport report;
  EvalMetrics test;
  Index params = 0;
  double seconds = 0.0;
};

SeedRun train_one(const ModelSpec& spec, const EncodedDataset& data, TrainConfig tc, std::uint64_t seed,
                  std::unique_ptr<CtrModel<float>>* keep = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  tc.seed = seed;
  auto model = make_model(spec, data.vocab_sizes(), seed);
  SeedRun run;
  run.seed = seed;
  run.report = train(*model, data, tc);
  run.test = evaluate(*model, data, data.split.test, tc.eval_batch);
  run.params = model->interaction_parameter_count();
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (keep != nullptr) *keep = std::move(model);
  return run;
}

std::string join_ints(const std::vector<int>& v, const char* sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

int worker_threads() {
  int n = static_cast<int>(std::thread::hardware_concurrency());
  if (n < 1) n = 1;
  if (const char* env = std::getenv("KARSEIN_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

EncodedDataset load_dataset(const DatasetConfig& config) {
  if (config.path.empty()) throw ConfigError("dataset.path is required");
  if (!config.cache.empty() && fs::exists(fs::path(config.cache) / "manifest.json")) {
    return load_encoded(config.cache);
  }
  const fs::path path(config.path);
  if (!fs::exists(path)) throw DataError("dataset path " + path.string() + " does not exist");
  EncodedDataset data;
  if (fs::is_directory(path) && fs::exists(path / "manifest.json")) {
    data = load_encoded(path);
  } else {
    const DatasetSchema schema = DatasetSchema::named(config.schema);
    const RawTable table = fs::is_directory(path) ? load_movielens_1m(path, schema) : load_csv(path, schema);
    data = encode_dataset(table, schema, config.split_seed);
  }
  if (!config.cache.empty()) save_encoded(data, config.cache);
  return data;
}

void write_metrics_csv(const fs::path& path, const TrainReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  // Wall-clock time lives in report.json so that reruns give identical files.
  out << "epoch,train_loss,val_auc,val_logloss\n" << std::setprecision(17);
  for (const auto& e : report.epochs) {
    out << e.epoch << "," << e.train_loss << "," << e.val_auc << "," << e.val_logloss << "\n";
  }
}

json to_json(const EvalMetrics& m) { return {{"auc", m.auc}, {"logloss", m.logloss}, {"count", m.count}}; }

json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"val_auc", e.val_auc},
                      {"val_logloss", e.val_logloss},
                      {"seconds", e.seconds}});
  }
  return {{"epochs", epochs},
          {"initial_val", to_json(r.initial_val)},
          {"best_epoch", r.best_epoch},
          {"best_val_auc", r.best_val_auc},
          {"stop_reason", r.stop_reason},
          {"best_checkpoint", r.best_checkpoint}};
}

// ---------------------------------------------------------------- train / evaluate

json cmd_train(const RunConfig& config) {
  config.validate();
  OutputDir::check_target(config.out, config.force);
  const EncodedDataset data = load_dataset(config.dataset);
  OutputDir out(config.out, config.force);

  std::vector<SeedRun> runs(config.seeds.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t i = 0; i < config.seeds.size(); ++i) {
    jobs.emplace_back([&, i] {
      const std::uint64_t seed = config.seeds[i];
      std::unique_ptr<CtrModel<float>> model;
      runs[i] = train_one(config.model, data, config.train, seed, &model);
      const fs::path dir = out.path() / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      runs[i].report.best_checkpoint = "seed_" + std::to_string(seed) + "/checkpoint";
      save_checkpoint(dir / "checkpoint", *model, config.model, seed, data.schema, data.vocab,
                      {{"train_config", to_json(config)["train"]}, {"test", to_json(runs[i].test)}});
      write_metrics_csv(dir / "metrics.csv", runs[i].report);
      write_json(dir / "report.json", {{"seed", seed},
                                       {"model", config.model.kind},
                                       {"train", to_json(runs[i].report)},
                                       {"test", to_json(runs[i].test)},
                                       {"interaction_params", runs[i].params},
                                       {"seconds", runs[i].seconds}});
    });
  }
  run_parallel(jobs);

  json per_seed = json::array();
  std::vector<double> aucs;
  std::vector<double> losses;
  for (const auto& r : runs) {
    per_seed.push_back({{"seed", r.seed},
                        {"test_auc", r.test.auc},
                        {"test_logloss", r.test.logloss},
                        {"best_epoch", r.report.best_epoch},
                        {"stop_reason", r.report.stop_reason},
                        {"dir", "seed_" + std::to_string(r.seed)}});
    aucs.push_back(r.test.auc);
    losses.push_back(r.test.logloss);
  }
  const json summary = {{"command", "train"},
                        {"model", config.model.kind},
                        {"records", data.size()},
                        {"split", {data.split.train.size(), data.split.val.size(), data.split.test.size()}},
                        {"runs", per_seed},
                        {"mean_test_auc", mean_of(aucs)},
                        {"mean_test_logloss", mean_of(losses)},
                        {"config", to_json(config)}};
  out.commit(summary);
  return summary;
}

json cmd_evaluate(const RunConfig& config) {
  config.validate();
  require_checkpoint(config);
  OutputDir::check_target(config.out, config.force);
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const EncodedDataset data = load_dataset(config.dataset);
  require_same_vocab(ck, data);
  OutputDir out(config.out, config.force);
  const EvalMetrics val = evaluate(*ck.model, data, data.split.val, config.train.eval_batch);
  const EvalMetrics test = evaluate(*ck.model, data, data.split.test, config.train.eval_batch);
  const json summary = {{"command", "evaluate"},
                        {"checkpoint", config.checkpoint},
                        {"model", ck.model->kind()},
                        {"val", to_json(val)},
                        {"test", to_json(test)}};
  out.commit(summary);
  return summary;
}

// ---------------------------------------------------------------- ablate

json cmd_ablate(const RunConfig& config) {
  config.validate();
  if (config.model.kind != "karsein") throw ConfigError("ablate needs model.kind = karsein");
  struct Variant {
    std::string name;
    ModelSpec spec;
  };
  std::vector<Variant> variants;
  const auto with = [&](Towers towers, const std::vector<int>& pairwise) {
    ModelSpec s = config.model;
    s.karsein.towers = towers;
    s.karsein.pairwise_layers = pairwise;
    s.validate();
    return s;
  };
  variants.push_back({"karsein", with(Towers::Both, config.model.karsein.pairwise_layers)});
  variants.push_back({"explicit_only", with(Towers::ExplicitOnly, config.model.karsein.pairwise_layers)});
  variants.push_back({"implicit_only", with(Towers::ImplicitOnly, config.model.karsein.pairwise_layers)});
  for (const auto& set : config.pairwise_sweep) {
    variants.push_back({"pairwise_" + (set.empty() ? std::string("none") : join_ints(set, "_")),
                        with(Towers::Both, set)});
  }

  OutputDir::check_target(config.out, config.force);
  const EncodedDataset data = load_dataset(config.dataset);
  OutputDir out(config.out, config.force);

  // Identical architectures (e.g. the full model and its own pairwise
  // setting in the sweep) are trained once and shared.
  std::map<std::string, std::size_t> unique;
  std::vector<std::size_t> variant_to_unique;
  std::vector<const ModelSpec*> specs;
  for (const auto& v : variants) {
    const std::string key = to_json(v.spec).dump();
    auto [it, inserted] = unique.emplace(key, specs.size());
    if (inserted) specs.push_back(&v.spec);
    variant_to_unique.push_back(it->second);
  }
  const std::size_t n_seeds = config.seeds.size();
  std::vector<SeedRun> runs(specs.size() * n_seeds);
  std::vector<std::function<void()>> jobs;
  for (std::size_t u = 0; u < specs.size(); ++u) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      jobs.emplace_back([&, u, s] { runs[u * n_seeds + s] = train_one(*specs[u], data, config.train, config.seeds[s]); });
    }
  }
  run_parallel(jobs);

  std::ofstream csv(out.path() / "ablation.csv");
  csv << "variant,towers,pairwise_layers,seeds,auc_mean,logloss_mean,auc_per_seed,interaction_params,seconds_mean\n"
      << std::setprecision(10);
  json rows = json::array();
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const std::size_t u = variant_to_unique[v];
    std::vector<double> aucs;
    std::vector<double> losses;
    std::vector<double> secs;
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const auto& r = runs[u * n_seeds + s];
      aucs.push_back(r.test.auc);
      losses.push_back(r.test.logloss);
      secs.push_back(r.seconds);
    }
    const auto& k = variants[v].spec.karsein;
    std::ostringstream per_seed;
    per_seed << std::setprecision(10);
    for (std::size_t s = 0; s < aucs.size(); ++s) per_seed << (s ? ";" : "") << aucs[s];
    const std::string pairwise = k.pairwise_layers.empty() ? "none" : join_ints(k.pairwise_layers, ";");
    csv << variants[v].name << "," << to_string(k.towers) << "," << pairwise << "," << n_seeds << "," << mean_of(aucs)
        << "," << mean_of(losses) << "," << per_seed.str() << "," << runs[u * n_seeds].params << "," << mean_of(secs)
        << "\n";
    rows.push_back({{"variant", variants[v].name},
                    {"towers", to_string(k.towers)},
                    {"pairwise_layers", k.pairwise_layers},
                    {"auc_mean", mean_of(aucs)},
                    {"logloss_mean", mean_of(losses)},
                    {"auc_per_seed", aucs},
                    {"interaction_params", runs[u * n_seeds].params},
                    {"seconds_mean", mean_of(secs)}});
  }
  csv.close();
  write_json(out.path() / "ablation.json", rows);
  const json summary = {{"command", "ablate"}, {"rows", rows}, {"seeds", config.seeds}, {"config", to_json(config)}};
  out.commit(summary);
  return summary;
}

// ---------------------------------------------------------------- synthetic

json cmd_synthetic(const RunConfig& config) {
  config.validate();
  OutputDir out(config.out, config.force);
  struct Setting {
    int id;
    double reg;
    std::vector<int> widths_square;
    std::vector<int> widths_product;
  };
  const std::vector<Setting> settings{{1, 0.01, {2, 1}, {2, 2, 1}},
                                      {2, 0.01, {2, 4, 1}, {2, 2, 4, 1}},
                                      {3, 0.0, {2, 4, 1}, {2, 2, 4, 1}}};
  const std::vector<SyntheticTarget> targets{SyntheticTarget::ASquared, SyntheticTarget::BSquared, SyntheticTarget::AB};
  std::vector<StepsToTarget> results(settings.size() * targets.size());
  std::vector<std::function<void()>> jobs;
  for (std::size_t s = 0; s < settings.size(); ++s) {
    for (std::size_t t = 0; t < targets.size(); ++t) {
      jobs.emplace_back([&, s, t] {
        SyntheticConfig c;
        c.target = targets[t];
        c.widths = targets[t] == SyntheticTarget::AB ? settings[s].widths_product : settings[s].widths_square;
        c.reg = settings[s].reg;
        c.lr = config.synthetic.lr;
        c.max_steps = config.synthetic.max_steps;
        c.seed = config.synthetic.seed;
        c.grid = config.synthetic.grid;
        c.order = config.synthetic.order;
        c.train_points = config.synthetic.train_points;
        c.batch_size = config.synthetic.batch_size;
        results[s * targets.size() + t] = fit_synthetic(c);
      });
    }
  }
  run_parallel(jobs);

  json table = json::array();
  for (std::size_t s = 0; s < settings.size(); ++s) {
    json layers = json::object();
    json steps = json::object();
    json runs = json::array();
    for (std::size_t t = 0; t < targets.size(); ++t) {
      const auto& r = results[s * targets.size() + t];
      const std::string name = to_string(targets[t]);
      layers[name] = r.config.widths;
      steps[name] = r.steps ? json(*r.steps) : json("failed");
      runs.push_back(to_json(r));
    }
    table.push_back({{"setting", settings[s].id},
                     {"regularization", settings[s].reg},
                     {"layers", layers},
                     {"steps", steps},
                     {"runs", runs}});
  }
  const json report = {{"rmse_threshold", 0.05},
                       {"lr", config.synthetic.lr},
                       {"max_steps", config.synthetic.max_steps},
                       {"seed", config.synthetic.seed},
                       {"grid", config.synthetic.grid},
                       {"order", config.synthetic.order},
                       {"settings", table}};
  write_json(out.path() / "synthetic.json", report);
  const json summary = {{"command", "synthetic"}, {"report", "synthetic.json"}, {"settings", table}};
  out.commit(summary);
  return summary;
}

// ---------------------------------------------------------------- explain / prune

json cmd_explain(const RunConfig& config) {
  config.validate();
  require_checkpoint(config);
  OutputDir::check_target(config.out, config.force);
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const auto* model = dynamic_cast<const KarseinModel<float>*>(ck.model.get());
  if (model == nullptr) throw ConfigError("explain needs a karsein checkpoint, got " + ck.model->kind());
  OutputDir out(config.out, config.force);
  ExplainOptions options;
  options.redundancy_threshold = config.analysis.redundancy_threshold;
  options.activation_samples = config.analysis.activation_samples;
  options.r2_threshold = config.analysis.r2_threshold;
  json summary = explain(*model, out.path(), options);
  summary["command"] = "explain";
  summary["checkpoint"] = config.checkpoint;
  out.commit(summary);
  return summary;
}

json cmd_prune(const RunConfig& config) {
  config.validate();
  require_checkpoint(config);
  OutputDir::check_target(config.out, config.force);
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const EncodedDataset data = load_dataset(config.dataset);
  require_same_vocab(ck, data);

  if (const auto* kan = dynamic_cast<const KanCtrModel<float>*>(ck.model.get())) {
    OutputDir out(config.out, config.force);
    PruneReport report;
    KanNetwork<float> pruned = kan_prune(kan->net, config.analysis.kan_prune_threshold, &report);
    ModelSpec spec = ck.spec;
    spec.hidden.assign(report.surviving_widths.begin() + 1, report.surviving_widths.end() - 1);
    KanCtrModel<float> small(kan->embedding.vocab_sizes(), spec.karsein.embedding_dim, spec.hidden, spec.kan_grid,
                             spec.kan_order, spec.karsein.embedding_std, ck.seed);
    small.embedding = kan->embedding;
    small.net = pruned;
    const EvalMetrics before = evaluate(*kan, data, data.split.test, config.train.eval_batch);
    const EvalMetrics after = evaluate(small, data, data.split.test, config.train.eval_batch);
    save_checkpoint(out.path() / "checkpoint", small, spec, ck.seed, ck.schema, ck.vocab);
    const json summary = {{"command", "prune"},
                          {"model", "kan"},
                          {"prune", to_json(report)},
                          {"test_before", to_json(before)},
                          {"test_after", to_json(after)}};
    write_json(out.path() / "prune.json", summary);
    out.commit(summary);
    return summary;
  }

  const auto* model = dynamic_cast<const KarseinModel<float>*>(ck.model.get());
  if (model == nullptr) throw ConfigError("prune needs a karsein or kan checkpoint, got " + ck.model->kind());
  OutputDir out(config.out, config.force);
  ExplainOptions options;
  options.redundancy_threshold = config.analysis.redundancy_threshold;
  options.activation_samples = config.analysis.activation_samples;
  options.r2_threshold = config.analysis.r2_threshold;
  const json explained = explain(*model, out.path() / "explain", options);
  const RedundancyReport redundancy = find_redundant(connection_map(*model), config.analysis.redundancy_threshold);
  TrainConfig tc = config.train;
  tc.seed = ck.seed;
  FinetuneResult result = mask_and_finetune(*model, redundancy, data, tc, config.analysis.finetune_epochs);
  save_checkpoint(out.path() / "checkpoint", *result.model, ck.spec, ck.seed, ck.schema, ck.vocab);
  const json summary = {{"command", "prune"},
                        {"model", "karsein"},
                        {"redundancy", to_json(redundancy)},
                        {"redundancy_empty", redundancy.empty()},
                        {"finetune_epochs", config.analysis.finetune_epochs},
                        {"test_auc_before", result.auc_before},
                        {"test_auc_after", result.auc_after},
                        {"auc_delta", result.delta()},
                        {"explain", explained}};
  write_json(out.path() / "prune.json", summary);
  out.commit(summary);
  return summary;
}

// ---------------------------------------------------------------- gradcheck

KarseinModel<double> gradcheck_model(std::uint64_t seed, HeadMode head) {
  KarseinConfig c;
  c.embedding_dim = 4;
  c.explicit_hidden = {4};
  c.implicit_hidden = {4};
  c.grid_size = 5;
  c.spline_order = 3;
  c.pairwise_layers = {1, 2};
  c.head = head;
  c.embedding_std = 0.3;
  KarseinModel<double> model(c, {5, 4, 3}, seed);
  // Larger spline coefficients than the training init so the spline path
  // carries gradients comparable to the SiLU path.
  Rng rng(mix_seed(seed, 99));
  for (auto* tower : {&model.explicit_tower, &model.implicit_tower}) {
    for (auto& layer : *tower) fill_normal(layer.coeffs.value, 0.5, rng);
  }
  return model;
}

GradcheckResult run_gradcheck(const GradcheckOptions& options) {
  if (options.precision != "double" && options.precision != "float") {
    throw ConfigError("precision must be 'double' or 'float'");
  }
  KarseinModel<double> model = gradcheck_model(options.seed, options.head);
  Rng rng(mix_seed(options.seed, 5));
  constexpr int kBatch = 8;
  RecordMatrix batch(kBatch, 3);
  const std::array<int, 3> vocab{5, 4, 3};
  std::vector<float> labels(kBatch);
  for (int b = 0; b < kBatch; ++b) {
    for (int f = 0; f < 3; ++f) batch(b, f) = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(vocab[f]));
    labels[static_cast<std::size_t>(b)] = static_cast<float>(b % 2);
  }
  const RegWeights reg{0.01, 0.01};

  auto params = model.parameters();
  if (options.precision == "double") {
    model.compute_gradients(batch, labels, reg);
  } else {
    KarseinModel<float> single = cast_model<float>(model);
    single.compute_gradients(batch, labels, reg);
    auto sp = single.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = sp[i]->grad.cast<double>();
  }
  if (options.corrupt_scale != 1.0) {
    for (auto* p : params) {
      if (p->name == "explicit.0.w_base") p->grad *= options.corrupt_scale;
    }
  }
  GradcheckResult result;
  result.tolerance = options.tolerance;
  result.report = finite_diff_check([&] { return model.evaluate_loss(batch, labels, reg).total(); }, params);
  result.passed = result.report.max_rel_error <= options.tolerance;
  return result;
}

}  // namespace karsein
