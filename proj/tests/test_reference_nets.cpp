#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "karsein/reference_nets.hpp"
#include "oracles.hpp"

#include <nlohmann/json.hpp>

using namespace karsein;

namespace {

/// Sum over edges of w_phi * (spline + SiLU), layer by layer.
double naive_kan(const KanNetwork<double>& net, std::vector<double> x) {
  for (const auto& layer : net.layers) {
    std::vector<double> next(static_cast<std::size_t>(layer.out_dim), 0.0);
    for (Index j = 0; j < layer.out_dim; ++j) {
      for (Index i = 0; i < layer.in_dim; ++i) {
        const auto e = layer.edge(i, j);
        const auto n = oracle::basis(net.basis().grid(), net.basis().order(), x[static_cast<std::size_t>(i)]);
        double s = 0.0;
        for (std::size_t k = 0; k < n.size(); ++k) s += n[k] * e.coeffs[static_cast<Index>(k)];
        next[static_cast<std::size_t>(j)] += e.w_phi * (s + oracle::silu(x[static_cast<std::size_t>(i)]));
      }
    }
    x = next;
  }
  return x[0];
}

void randomize(KanNetwork<double>& net, Rng& rng) {
  for (auto& l : net.layers) {
    fill_normal(l.coeffs.value, 0.5, rng);
    fill_normal(l.w_phi.value, 0.8, rng);
  }
}

}  // namespace

TEST_CASE("KAN forward matches the per-edge sum") {
  Rng rng(4);
  for (auto widths : std::vector<std::vector<int>>{{2, 1}, {2, 3, 1}, {3, 4, 2, 1}}) {
    KanNetwork<double> net(widths, 5, 3, 1);
    randomize(net, rng);
    for (int t = 0; t < 20; ++t) {
      std::vector<double> x(static_cast<std::size_t>(widths[0]));
      for (auto& v : x) v = std::uniform_real_distribution<double>(-1.2, 1.2)(rng);
      CHECK(kan_forward<double>(net, x) == doctest::Approx(naive_kan(net, x)).epsilon(1e-10));
    }
  }
  KanNetwork<double> net({2, 1}, 5, 3, 1);
  CHECK_THROWS_AS(kan_forward<double>(net, std::vector<double>{1.0}), DimensionError);
}

TEST_CASE("a hand-built KAN computes x1 * x2") {
  // x1 x2 = ((x1 + x2)^2 - (x1 - x2)^2) / 4 with every inner function a
  // cubic spline, which represents polynomials of degree <= 3 exactly. The
  // SiLU part of each edge is cancelled by folding -SiLU into the spline.
  KanNetwork<double> net({2, 2, 1}, 4, 3, 0);
  const auto& basis = net.basis();
  auto spline_for = [&](auto f) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (int i = 0; i <= 200; ++i) {
      xs.push_back(-1.0 + i / 100.0);
      ys.push_back(f(xs.back()) - silu(xs.back()));
    }
    return fit_spline_coeffs(basis, xs, ys);
  };
  auto set = [&](int layer, int i, int j, double w, auto f) {
    EdgeActivation<double> e;
    e.w_phi = w;
    e.coeffs = spline_for(f);
    net.layers[static_cast<std::size_t>(layer)].set_edge(i, j, e);
  };
  // Hidden h0 = (x1 + x2) / 2, h1 = (x1 - x2) / 2.
  set(0, 0, 0, 1.0, [](double x) { return x / 2; });
  set(0, 1, 0, 1.0, [](double x) { return x / 2; });
  set(0, 0, 1, 1.0, [](double x) { return x / 2; });
  set(0, 1, 1, 1.0, [](double x) { return -x / 2; });
  // Output h0^2 - h1^2.
  set(1, 0, 0, 1.0, [](double h) { return h * h; });
  set(1, 1, 0, 1.0, [](double h) { return -h * h; });
  // SiLU is not a cubic, so the fold is least squares; the residual stays small.
  double worst = 0.0;
  for (double a = -1.0; a <= 1.0; a += 0.05) {
    for (double b = -1.0; b <= 1.0; b += 0.05) {
      worst = std::max(worst, std::abs(kan_forward<double>(net, std::vector<double>{a, b}) - a * b));
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("KAN gradients match finite differences") {
  Rng rng(6);
  KanNetwork<double> net({3, 4, 2}, 5, 3, 1);
  randomize(net, rng);
  MatrixD x(6, 3);
  fill_uniform(x, -1.1, 1.1, rng);
  MatrixD target(6, 2);
  fill_normal(target, 1.0, rng);
  const RegWeights reg{0.01, 0.02};
  auto loss = [&] {
    const MatrixD p = net.forward(x);
    return 0.5 * (p - target).squaredNorm() + net.regularization(reg, false);
  };
  auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  KanCache<double> cache;
  const MatrixD p = net.forward(x, &cache);
  const MatrixD gx = net.backward(cache, p - target);
  net.regularization(reg, true);
  const auto r = finite_diff_check(loss, params);
  INFO(r.worst_param);
  CHECK(r.max_rel_error < 1e-6);
  // Input gradient.
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + 1e-6;
    const double up = 0.5 * (net.forward(x) - target).squaredNorm();
    x.data()[i] = keep - 1e-6;
    const double down = 0.5 * (net.forward(x) - target).squaredNorm();
    x.data()[i] = keep;
    CHECK(gx.data()[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("KAN regularization is L1 plus entropy of w_phi") {
  KanNetwork<double> net({2, 2, 1}, 3, 1, 0);
  net.layers[0].w_phi.value << 1.0, -1.0, 2.0, 0.0;
  net.layers[1].w_phi.value << 0.5, 0.5;
  const double h0 = -(0.25 * std::log(0.25) * 2 + 0.5 * std::log(0.5));
  const double h1 = std::log(2.0);
  CHECK(net.regularization({0.1, 0.0}, false) == doctest::Approx(0.1 * 5.0));
  CHECK(net.regularization({0.0, 0.1}, false) == doctest::Approx(0.1 * (h0 + h1)));
}

TEST_CASE("pruning keeps nodes with strong incoming and outgoing edges") {
  Rng rng(2);
  KanNetwork<double> net({3, 4, 1}, 3, 1, 0);
  randomize(net, rng);
  net.layers[0].w_phi.value.row(1).setConstant(1e-4);  // node 1: weak inputs
  net.layers[1].w_phi.value(0, 2) = -1e-4;             // node 2: weak output
  PruneReport report;
  const auto pruned = kan_prune(net, 0.003, &report);
  CHECK(report.surviving_widths == std::vector<int>{3, 2, 1});
  CHECK(report.kept_nodes[1] == std::vector<int>{0, 3});
  CHECK(pruned.widths() == std::vector<int>{3, 2, 1});
  // Kept edges are copied verbatim.
  CHECK(pruned.layers[0].edge(2, 1).coeffs == net.layers[0].edge(2, 3).coeffs);
  CHECK(pruned.layers[1].edge(1, 0).w_phi == net.layers[1].edge(3, 0).w_phi);
  // A threshold of zero removes nothing.
  CHECK(kan_prune(net, 0.0).widths() == net.widths());
  CHECK_THROWS_AS(kan_prune(net, 100.0), ConfigError);
  CHECK_THROWS_AS(kan_prune(net, -1.0), ConfigError);
}

TEST_CASE("MLP forward and gradients") {
  Rng rng(3);
  MlpNetwork<double> net({3, 5, 1}, 4);
  MatrixD x(4, 3);
  fill_normal(x, 1.0, rng);
  std::vector<MatrixD> acts;
  const MatrixD y = net.forward(x, &acts);
  for (Index b = 0; b < x.rows(); ++b) {
    // Naive: relu(W0 x + b0), then W1 h + b1.
    std::vector<double> h(5);
    for (int j = 0; j < 5; ++j) {
      double s = net.biases[0].value(0, j);
      for (int i = 0; i < 3; ++i) s += net.weights[0].value(j, i) * x(b, i);
      h[static_cast<std::size_t>(j)] = std::max(0.0, s);
    }
    double out = net.biases[1].value(0, 0);
    for (int j = 0; j < 5; ++j) out += net.weights[1].value(0, j) * h[static_cast<std::size_t>(j)];
    CHECK(y(b, 0) == doctest::Approx(out).epsilon(1e-12));
    const std::vector<double> row(x.row(b).data(), x.row(b).data() + 3);
    CHECK(mlp_forward<double>(net, row) == doctest::Approx(out).epsilon(1e-12));
  }
  auto params = net.parameters();
  for (auto* p : params) p->zero_grad();
  net.backward(acts, y);  // d(0.5 |y|^2)/dy = y
  const auto r = finite_diff_check([&] { return 0.5 * net.forward(x).squaredNorm(); }, params);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("CTR wrappers have consistent gradients") {
  Rng rng(7);
  RecordMatrix batch(6, 3);
  for (Index i = 0; i < batch.size(); ++i) batch.data()[i] = static_cast<std::int32_t>(rng() % 4);
  const std::vector<float> y{1, 0, 0, 1, 1, 0};
  const RegWeights reg{0.01, 0.01};
  KanCtrModel<double> kan({4, 4, 4}, 3, {4}, 3, 1, 0.3, 5);
  for (auto& l : kan.net.layers) fill_normal(l.coeffs.value, 0.4, rng);
  kan.compute_gradients(batch, y, reg);
  auto kp = kan.parameters();
  CHECK(finite_diff_check([&] { return kan.evaluate_loss(batch, y, reg).total(); }, kp).max_rel_error < 1e-6);
  MlpCtrModel<double> mlp({4, 4, 4}, 3, {5, 3}, 0.3, 5);
  mlp.compute_gradients(batch, y, reg);
  auto mp = mlp.parameters();
  CHECK(finite_diff_check([&] { return mlp.evaluate_loss(batch, y, reg).total(); }, mp).max_rel_error < 1e-6);
  CHECK(mlp.evaluate_loss(batch, y, reg).regularization == 0.0);
}

TEST_CASE("synthetic targets and evaluation grid") {
  CHECK(synthetic_target_value(SyntheticTarget::ASquared, 0.5, 3.0) == 0.25);
  CHECK(synthetic_target_value(SyntheticTarget::BSquared, 3.0, -0.5) == 0.25);
  CHECK(synthetic_target_value(SyntheticTarget::AB, -0.5, 0.5) == -0.25);
  const auto g = synthetic_eval_grid();
  CHECK(g.rows() == 2048);
  CHECK(g.cwiseAbs().maxCoeff() < 1.0);
  CHECK(g.col(0).mean() == doctest::Approx(0.0).scale(1.0));
  CHECK(synthetic_target_from_string(to_string(SyntheticTarget::AB)) == SyntheticTarget::AB);
  CHECK_THROWS_AS(synthetic_target_from_string("abc"), ConfigError);
}

TEST_CASE("fit_synthetic counts steps and reports failures") {
  SyntheticConfig c;
  c.target = SyntheticTarget::ASquared;
  c.widths = {2, 1};
  c.max_steps = 3;
  auto r = fit_synthetic(c);
  CHECK_FALSE(r.steps.has_value());
  CHECK(r.final_rmse > 0.05);
  CHECK(to_json(r)["steps_to_rmse_0.05"] == "failed");
  c.max_steps = 3000;
  r = fit_synthetic(c);
  REQUIRE(r.steps.has_value());
  CHECK(*r.steps <= 3000);
  CHECK(r.final_rmse <= 0.05);
  CHECK(to_json(r)["steps_to_rmse_0.05"] == *r.steps);
  c.widths = {3, 1};
  CHECK_THROWS_AS(fit_synthetic(c), ConfigError);
}
