#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "karsein/analysis.hpp"
#include "surrogate.hpp"

#include <filesystem>
#include <fstream>

using namespace karsein;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("karsein_test_analysis_" + name);
  fs::remove_all(p);
  return p;
}

KarseinConfig small_config() {
  KarseinConfig c;
  c.embedding_dim = 4;
  c.explicit_hidden = {3};
  c.implicit_hidden = {5};
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_CASE("fit_cubic recovers polynomials of degree <= 3") {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::array<double, 4> c{};
    for (auto& v : c) v = std::normal_distribution<double>(0.0, 2.0)(rng);
    if (t % 4 == 0) c[3] = 0.0;  // quadratics too
    const auto xs = linspace(-1.0, 1.0, 41);
    std::vector<double> ys;
    for (double x : xs) ys.push_back(c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x);
    const auto fit = fit_cubic(xs, ys);
    for (int k = 0; k < 4; ++k) CHECK(std::abs(fit.coeffs[static_cast<std::size_t>(k)] - c[static_cast<std::size_t>(k)]) < 1e-6);
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fit(0.3) == doctest::Approx(c[0] + 0.3 * c[1] + 0.09 * c[2] + 0.027 * c[3]));
  }
}

TEST_CASE("fit_cubic on non-cubic data and degenerate input") {
  const auto xs = linspace(-1.0, 1.0, 101);
  std::vector<double> ys;
  for (double x : xs) ys.push_back(x > 0.0 ? 1.0 : -1.0);
  const auto step = fit_cubic(xs, ys);
  CHECK(step.r2 < 0.95);
  CHECK(step.r2 > 0.0);
  const std::vector<double> flat(xs.size(), 2.5);
  CHECK(fit_cubic(xs, flat).r2 == 1.0);
  CHECK_THROWS_AS(fit_cubic(std::vector<double>{0, 1, 2}, std::vector<double>{0, 1, 2}), ConfigError);
  const std::vector<double> few_x{0, 0, 1, 1, 2, 2, 0, 1, 2};
  CHECK_THROWS_AS(fit_cubic(few_x, few_x), ConfigError);
}

TEST_CASE("connection strength is |W_b| + |W_s|") {
  KarseinModel<float> model(small_config(), {4, 4, 4}, 1);
  const auto maps = connection_map(model);
  REQUIRE(maps.size() == model.explicit_tower.size() + model.implicit_tower.size());
  CHECK(maps[0].layer == "explicit.0");
  const auto& l = model.explicit_tower[0];
  for (Index r = 0; r < l.w_base.value.rows(); ++r) {
    for (Index c = 0; c < l.w_base.value.cols(); ++c) {
      CHECK(maps[0].strength(r, c) ==
            doctest::Approx(std::abs(l.w_base.value(r, c)) + std::abs(l.w_silu.value(r, c))));
    }
  }
}

TEST_CASE("redundancy detection and masking") {
  KarseinModel<float> model(small_config(), {4, 4, 4}, 1);
  auto& l = model.implicit_tower[0];
  l.w_base.value.col(3).setConstant(0.001f);
  l.w_silu.value.col(3).setConstant(-0.002f);
  l.w_base.value.col(5).setZero();
  l.w_silu.value.col(5).setZero();
  const auto report = find_redundant(connection_map(model), 0.01);
  CHECK_FALSE(report.empty());
  const auto it = std::find_if(report.layers.begin(), report.layers.end(),
                               [](const LayerRedundancy& r) { return r.layer == "implicit.0"; });
  REQUIRE(it != report.layers.end());
  CHECK(it->redundant == std::vector<Index>{3, 5});
  CHECK(it->ratio == doctest::Approx(2.0 / static_cast<double>(l.eff_in())));

  KarseinModel<float> masked = model;
  apply_redundancy_mask(masked, report);
  CHECK(masked.implicit_tower[0].masked(3));
  CHECK(masked.implicit_tower[0].w_base.value.col(3).isZero());
  CHECK(masked.implicit_tower[0].coeffs.value.row(5).isZero());

  KarseinModel<float> zero(small_config(), {4, 4, 4}, 1);
  for (auto* p : zero.parameters()) p->value.setZero();
  const auto all = find_redundant(connection_map(zero), 0.01);
  for (const auto& layer : all.layers) CHECK(layer.ratio == 1.0);
  CHECK_THROWS_AS(apply_redundancy_mask(zero, all), ConfigError);
}

TEST_CASE("sample_activation evaluates the spline row") {
  KarseinModel<float> model(small_config(), {4, 4}, 2);
  auto& l = model.explicit_tower[1];
  l.coeffs.value.row(2).setConstant(0.75f);  // partition of unity: constant 0.75
  const auto ys = sample_activation(model, "explicit.1", 2, linspace(-1, 1, 11));
  for (double y : ys) CHECK(y == doctest::Approx(0.75).epsilon(1e-6));
  CHECK_THROWS_AS(sample_activation(model, "explicit.9", 0, ys), DimensionError);
  CHECK_THROWS_AS(sample_activation(model, "explicit.1", 99, ys), DimensionError);
}

TEST_CASE("matrix csv round trip") {
  const auto dir = scratch("csv");
  fs::create_directories(dir);
  MatrixD m(2, 3);
  m << 1.0, 0.1, -3.25, 1e-9, 0.0, 7.0;
  write_matrix_csv(dir / "m.csv", m);
  CHECK(read_matrix_csv(dir / "m.csv") == m);
}

TEST_CASE("explain writes deterministic artifacts") {
  KarseinModel<float> model(small_config(), {4, 4, 4}, 3);
  Rng rng(1);
  for (auto& l : model.explicit_tower) fill_normal(l.coeffs.value, 0.5, rng);
  const auto a = scratch("explain_a");
  const auto b = scratch("explain_b");
  const json sa = explain(model, a);
  const json sb = explain(model, b);
  CHECK(sa == sb);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    CHECK(slurp(e.path()) == slurp(b / fs::relative(e.path(), a)));
  }
  Index rows = 0;
  for (const auto& l : model.explicit_tower) rows += l.eff_in();
  CHECK(sa["activation_curves"] == rows);
  CHECK(fs::exists(a / "heatmaps" / "explicit.0.svg"));
  CHECK(fs::exists(a / "activations" / "explicit.1_row0.csv"));
  CHECK(json::parse(slurp(a / "cubic_fits.json")).size() == static_cast<std::size_t>(rows));
}

TEST_CASE("zero-weight model: all-zero heat maps and full redundancy") {
  KarseinModel<float> model(small_config(), {4, 4, 4}, 3);
  for (auto* p : model.parameters()) p->value.setZero();
  const auto dir = scratch("zero");
  const json s = explain(model, dir);
  for (const auto& h : s["heatmaps"]) {
    CHECK(read_matrix_csv(dir / h["csv"].get<std::string>()).isZero());
  }
  for (const auto& l : s["redundancy"]["layers"]) CHECK(l["ratio"] == 1.0);
}

TEST_CASE("mask_and_finetune with an empty report changes nothing") {
  const auto dir = scratch("finetune");
  karsein::testing::SurrogateSpec spec;
  spec.ratings = 3000;
  karsein::testing::write_surrogate_ml1m(dir, spec);
  const auto schema = DatasetSchema::movielens_1m();
  const auto data = encode_dataset(load_movielens_1m(dir, schema), schema, 1);
  KarseinModel<float> model(small_config(), data.vocab_sizes(), 4);
  RedundancyReport empty;
  empty.threshold = 0.01;
  TrainConfig t;
  t.batch_size = 256;
  const auto r = mask_and_finetune(model, empty, data, t, 3);
  CHECK(r.delta() == 0.0);
  CHECK(r.auc_before == r.auc_after);

  // A real mask: fine-tuning runs and the masked inputs stay at zero.
  KarseinModel<float> m2 = model;
  m2.implicit_tower[0].w_base.value.col(0).setZero();
  m2.implicit_tower[0].w_silu.value.col(0).setZero();
  const auto report = find_redundant(connection_map(m2), 1e-6);
  REQUIRE_FALSE(report.empty());
  const auto tuned = mask_and_finetune(m2, report, data, t, 1);
  CHECK(tuned.model->implicit_tower[0].w_base.value.col(0).isZero());
  CHECK(tuned.model->implicit_tower[0].masked(0));
  CHECK(tuned.report.epochs.size() == 1);
}
