#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "karsein/commands.hpp"
#include "surrogate.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

using namespace karsein;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& root() {
  static const fs::path p = [] {
    const fs::path r = fs::temp_directory_path() / "karsein_test_commands";
    fs::remove_all(r);
    fs::create_directories(r);
    karsein::testing::SurrogateSpec spec;
    spec.ratings = 4000;
    karsein::testing::write_surrogate_ml1m(r / "ml", spec);
    return r;
  }();
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::string& args) {
  const fs::path out = root() / "stdout.txt";
  const fs::path err = root() / "stderr.txt";
  const std::string cmd = std::string(KARSEIN_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

json small_config(const std::string& kind = "karsein") {
  return {{"dataset", {{"path", (root() / "ml").string()}, {"schema", "ml1m"}}},
          {"model",
           {{"kind", kind},
            {"embedding_dim", 4},
            {"explicit_hidden", {3, 3}},
            {"implicit_hidden", {8, 8}},
            {"hidden", {8}}}},
          {"train", {{"max_epochs", 2}, {"batch_size", 256}, {"lr", 0.003}}},
          {"analysis", {{"finetune_epochs", 1}, {"activation_samples", 21}}},
          {"seed", 3}};
}

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = root() / (name + ".json");
  std::ofstream(p) << j.dump(2);
  return p;
}

bool has_partial(const fs::path& dir) {
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().find(".partial") != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("run config parsing is strict") {
  auto c = run_config_from_json(small_config());
  CHECK(c.seeds == std::vector<std::uint64_t>{3});
  CHECK(c.train.max_epochs == 2);
  CHECK(c.model.karsein.embedding_dim == 4);
  CHECK(c.model.karsein.grid_size == 10);  // untouched default
  // to_json -> from_json is the identity on the serializable fields.
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));

  json j = small_config();
  j["optimizer"] = "sgd";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = small_config();
  j["train"]["momentum"] = 0.9;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = small_config();
  j["train"]["lambda1"] = -1.0;
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = small_config();
  j["seeds"] = {1, 2};
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = small_config();
  j["train"]["batch_size"] = "big";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
  j = small_config();
  j["dataset"]["schema"] = "imagenet";
  CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("shipped example configs parse") {
  for (const auto& e : fs::directory_iterator(fs::path(KARSEIN_SOURCE_DIR) / "configs")) {
    INFO(e.path());
    CHECK_NOTHROW(load_run_config(e.path()));
  }
}

TEST_CASE("train, evaluate, explain, prune through the CLI") {
  const auto cfg = write_config("train", small_config());
  const fs::path out = root() / "run";
  // doctest re-enters the test body once per subcase; train only the first time.
  static Result first = cli("train --config " + cfg.string() + " --out " + out.string());
  auto r = first;
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["runs"].size() == 1);
  CHECK(fs::exists(out / "seed_3" / "metrics.csv"));
  CHECK(fs::exists(out / "seed_3" / "checkpoint" / "params.bin"));
  CHECK(slurp(out / "seed_3" / "metrics.csv").rfind("epoch,train_loss,val_auc,val_logloss\n", 0) == 0);
  CHECK(r.out.find("test AUC") != std::string::npos);

  SUBCASE("refuses to overwrite without --force") {
    r = cli("train --config " + cfg.string() + " --out " + out.string());
    CHECK(r.code != 0);
    CHECK(r.err.find("--force") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    const std::string before = slurp(out / "seed_3" / "metrics.csv");
    r = cli("train --config " + cfg.string() + " --out " + out.string() + " --force");
    CHECK(r.code == 0);
    CHECK(slurp(out / "seed_3" / "metrics.csv") == before);
  }
  SUBCASE("evaluate reproduces the stored test metrics") {
    r = cli("evaluate --config " + cfg.string() + " --checkpoint " + (out / "seed_3" / "checkpoint").string() +
            " --out " + (root() / "eval").string() + " --force");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json e = json::parse(slurp(root() / "eval" / "summary.json"));
    CHECK(e["test"]["auc"].get<double>() == summary["runs"][0]["test_auc"].get<double>());
  }
  SUBCASE("explain") {
    r = cli("explain --checkpoint " + (out / "seed_3" / "checkpoint").string() + " --out " +
            (root() / "explain").string() + " --force");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(root() / "explain" / "cubic_fits.json"));
    CHECK(fs::exists(root() / "explain" / "heatmaps" / "implicit.0.csv"));
  }
  SUBCASE("prune") {
    r = cli("prune --config " + cfg.string() + " --checkpoint " + (out / "seed_3" / "checkpoint").string() +
            " --out " + (root() / "prune").string() + " --force");
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json p = json::parse(slurp(root() / "prune" / "summary.json"));
    CHECK(p.contains("auc_delta"));
    CHECK(fs::exists(root() / "prune" / "checkpoint" / "manifest.json"));
  }
  SUBCASE("corrupt checkpoint exits nonzero") {
    const fs::path bad = root() / "bad_ckpt";
    fs::remove_all(bad);
    fs::copy(out / "seed_3" / "checkpoint", bad);
    fs::resize_file(bad / "params.bin", 12);
    r = cli("explain --checkpoint " + bad.string() + " --out " + (root() / "explain_bad").string() + " --force");
    CHECK(r.code != 0);
    CHECK(r.err.find("checkpoint") != std::string::npos);
    CHECK_FALSE(fs::exists(root() / "explain_bad"));
  }
}

TEST_CASE("seed lists produce one report per seed and a mean") {
  const auto cfg = write_config("seeds", small_config());
  const fs::path out = root() / "seeds";
  fs::remove_all(out);
  auto r = cli("train --config " + cfg.string() + " --seeds 1,2,3 --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json s = json::parse(slurp(out / "summary.json"));
  REQUIRE(s["runs"].size() == 3);
  double mean = 0.0;
  for (const auto& run : s["runs"]) mean += run["test_auc"].get<double>() / 3.0;
  CHECK(s["mean_test_auc"].get<double>() == doctest::Approx(mean));
  for (int seed : {1, 2, 3}) CHECK(fs::exists(out / ("seed_" + std::to_string(seed)) / "report.json"));
}

TEST_CASE("missing dataset: nonzero exit and no partial outputs") {
  json j = small_config();
  j["dataset"]["path"] = (root() / "does_not_exist").string();
  const auto cfg = write_config("missing", j);
  const fs::path out = root() / "missing_out";
  fs::remove_all(out);
  auto r = cli("train --config " + cfg.string() + " --out " + out.string());
  CHECK(r.code != 0);
  CHECK(r.err.find("does not exist") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  CHECK_FALSE(has_partial(root()));
}

TEST_CASE("bad arguments and configs are single-line errors") {
  auto r = cli("train --config /nonexistent.json");
  CHECK(r.code != 0);
  json j = small_config();
  j["train"]["warmup"] = 5;
  r = cli("train --config " + write_config("unknown", j).string() + " --out " + (root() / "x").string());
  CHECK(r.code != 0);
  CHECK(r.err.find("warmup") != std::string::npos);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  CHECK(cli("frobnicate").code != 0);
  CHECK(cli("explain --out " + (root() / "y").string()).code != 0);  // --checkpoint required
}

TEST_CASE("gradcheck exit codes") {
  auto r = cli("gradcheck");
  CHECK(r.code == 0);
  CHECK(r.out.rfind("PASS", 0) == 0);
  r = cli("gradcheck --precision float --head paper_sum --seed 3");
  CHECK(r.code == 0);
  r = cli("gradcheck --corrupt-gradient 1.1");
  CHECK(r.code != 0);
  CHECK(r.out.find("explicit.0.w_base") != std::string::npos);
  CHECK(cli("gradcheck --precision half").code != 0);
}

TEST_CASE("ablation table has one row per model and sweep setting") {
  json j = small_config();
  j["train"]["max_epochs"] = 1;
  const auto cfg = write_config("ablate", j);
  const fs::path out = root() / "ablate";
  fs::remove_all(out);
  auto r = cli("ablate --config " + cfg.string() + " --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  std::ifstream csv(out / "ablation.csv");
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(csv, line)) lines.push_back(line);
  REQUIRE(lines.size() == 1 + 3 + 4);
  CHECK(lines[1].rfind("karsein,", 0) == 0);
  CHECK(lines[2].rfind("explicit_only,", 0) == 0);
  CHECK(lines[3].rfind("implicit_only,", 0) == 0);
  CHECK(lines[4].rfind("pairwise_none,", 0) == 0);
  CHECK(lines[6].rfind("pairwise_1_2,", 0) == 0);
  // The full model and its own sweep setting are the same architecture.
  const json rows = json::parse(slurp(out / "ablation.json"));
  CHECK(rows[0]["auc_mean"] == rows[5]["auc_mean"]);
}

TEST_CASE("kan checkpoints prune to smaller hidden layers") {
  json j = small_config("kan");
  j["model"]["hidden"] = {6};
  j["analysis"]["kan_prune_threshold"] = 0.0;
  const auto cfg = write_config("kan", j);
  const fs::path out = root() / "kan";
  fs::remove_all(out);
  auto r = cli("train --config " + cfg.string() + " --out " + out.string());
  REQUIRE_MESSAGE(r.code == 0, r.err);
  r = cli("prune --config " + cfg.string() + " --checkpoint " + (out / "seed_3" / "checkpoint").string() +
          " --out " + (root() / "kan_prune").string() + " --force");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const json p = json::parse(slurp(root() / "kan_prune" / "summary.json"));
  // Threshold 0 keeps every node, so the pruned model predicts identically.
  CHECK(p["prune"]["surviving_widths"] == p["prune"]["original_widths"]);
  CHECK(p["test_after"]["auc"] == p["test_before"]["auc"]);
  const auto ck = load_checkpoint(root() / "kan_prune" / "checkpoint");
  CHECK(ck.model->kind() == "kan");
  // MLP checkpoints cannot be pruned.
  j = small_config("mlp");
  const auto mcfg = write_config("mlp", j);
  r = cli("train --config " + mcfg.string() + " --out " + (root() / "mlp").string() + " --force");
  REQUIRE(r.code == 0);
  r = cli("prune --config " + mcfg.string() + " --checkpoint " + (root() / "mlp" / "seed_3" / "checkpoint").string() +
          " --out " + (root() / "mlp_prune").string() + " --force");
  CHECK(r.code != 0);
}
