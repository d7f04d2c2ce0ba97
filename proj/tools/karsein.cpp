// karsein: train, evaluate and analyze KarSein CTR models from the command line.
#include "karsein/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace {

using karsein::RunConfig;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::string out;
  bool force = false;
  std::string checkpoint;
  std::string dataset;
};

void add_common(CLI::App* sub, Overrides& o, bool data) {
  sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "single seed (overrides config seeds)");
  sub->add_option("--seeds", o.seeds, "comma-separated seed list")->delimiter(',');
  sub->add_option("--out", o.out, "output directory");
  sub->add_flag("--force", o.force, "overwrite an existing output directory");
  if (data) sub->add_option("--dataset", o.dataset, "dataset path (overrides dataset.path)");
}

RunConfig resolve(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : karsein::load_run_config(o.config);
  if (o.seed && !o.seeds.empty()) throw karsein::ConfigError("give either --seed or --seeds, not both");
  if (o.seed) c.seeds = {*o.seed};
  if (!o.seeds.empty()) c.seeds = o.seeds;
  c.train.seed = c.seeds.front();
  if (!o.out.empty()) c.out = o.out;
  if (!o.dataset.empty()) c.dataset.path = o.dataset;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  c.force = o.force;
  c.validate();
  return c;
}

void print_summary(const nlohmann::json& s) {
  if (s.contains("mean_test_auc")) {
    std::cout << "test AUC " << s["mean_test_auc"].get<double>() << "  LogLoss " << s["mean_test_logloss"].get<double>()
              << "\n";
  }
  if (s.contains("test")) {
    std::cout << "test AUC " << s["test"]["auc"].get<double>() << "  LogLoss " << s["test"]["logloss"].get<double>()
              << "\n";
  }
  if (s.contains("auc_delta")) {
    std::cout << "test AUC " << s["test_auc_before"].get<double>() << " -> " << s["test_auc_after"].get<double>()
              << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KarSein CTR models: training, ablations, pruning and explanation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Overrides o;
  auto* train = app.add_subcommand("train", "train on a dataset, one run per seed");
  add_common(train, o, true);
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint on the val/test splits");
  add_common(evaluate, o, true);
  evaluate->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  auto* ablate = app.add_subcommand("ablate", "tower and pairwise-multiplication ablations");
  add_common(ablate, o, true);
  auto* synthetic = app.add_subcommand("synthetic", "steps-to-RMSE table for a^2, b^2 and ab");
  add_common(synthetic, o, false);
  auto* explain = app.add_subcommand("explain", "heat maps, activation curves and cubic fits");
  add_common(explain, o, false);
  explain->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();
  auto* prune = app.add_subcommand("prune", "explain, mask redundant inputs and fine-tune");
  add_common(prune, o, true);
  prune->add_option("--checkpoint", o.checkpoint, "checkpoint directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every gradient");
  karsein::GradcheckOptions g;
  std::string head = "mean";
  gradcheck->add_option("--seed", g.seed, "mini-model seed");
  gradcheck->add_option("--precision", g.precision, "analytic gradient precision")
      ->check(CLI::IsMember({"double", "float"}));
  gradcheck->add_option("--head", head, "output head")->check(CLI::IsMember({"mean", "paper_sum"}));
  gradcheck->add_option("--tolerance", g.tolerance, "max relative error");
  gradcheck->add_option("--corrupt-gradient", g.corrupt_scale, "scale one analytic gradient (testing)")
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gradcheck->parsed()) {
      g.head = karsein::head_mode_from_string(head);
      const auto r = karsein::run_gradcheck(g);
      std::cout << (r.passed ? "PASS" : "FAIL") << " gradcheck (" << g.precision << "): max relative error "
                << r.report.max_rel_error << " <= " << r.tolerance << "?  worst " << r.report.worst_param << "["
                << r.report.worst_index << "] analytic " << r.report.analytic << " numeric " << r.report.numeric
                << " over " << r.report.coordinates << " coordinates\n";
      return r.passed ? 0 : 1;
    }
    const RunConfig c = resolve(o);
    nlohmann::json summary;
    if (train->parsed()) summary = karsein::cmd_train(c);
    if (evaluate->parsed()) summary = karsein::cmd_evaluate(c);
    if (ablate->parsed()) summary = karsein::cmd_ablate(c);
    if (synthetic->parsed()) summary = karsein::cmd_synthetic(c);
    if (explain->parsed()) summary = karsein::cmd_explain(c);
    if (prune->parsed()) summary = karsein::cmd_prune(c);
    print_summary(summary);
    std::cout << "wrote " << c.out << "/summary.json\n";
    return 0;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "karsein: error: " << msg << "\n";
    return 2;
  }
}
