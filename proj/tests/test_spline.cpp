#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "karsein/spline.hpp"
#include "oracles.hpp"

#include <random>

using namespace karsein;

namespace {
const std::vector<std::pair<int, int>> kGrid{{1, 3}, {2, 5}, {3, 10}};  // (order, grid)
}

TEST_CASE("knot vector is clamped and uniform") {
  BSplineBasis<double> b(3, 1);
  CHECK(b.size() == 4);
  CHECK(b.knots().size() == 3 + 2 * 1 + 1);
  CHECK(b.spacing() == doctest::Approx(2.0 / 3.0));
  const auto expected = oracle::knots(3, 1, -1.0, 1.0);
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(b.knots()[i] == doctest::Approx(expected[i]));
  CHECK(BSplineBasis<double>(10, 3).size() == 13);
  CHECK(std::is_sorted(b.knots().begin(), b.knots().end()));
}

TEST_CASE("invalid construction is a configuration error") {
  CHECK_THROWS_AS(BSplineBasis<double>(0, 3), ConfigError);
  CHECK_THROWS_AS(BSplineBasis<double>(5, 0), ConfigError);
  CHECK_THROWS_AS(BSplineBasis<double>(5, 3, 1.0, 1.0), ConfigError);
  CHECK_THROWS_AS(BSplineBasis<double>(5, 3, 2.0, -1.0), ConfigError);
}

TEST_CASE("basis matches recursive Cox-de Boor") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto [order, grid] : kGrid) {
    BSplineBasis<double> b(grid, order);
    std::vector<double> xs{-1.0, 1.0, 0.0};
    for (int i = 0; i < 200; ++i) xs.push_back(u(rng));
    for (int i = 0; i <= grid; ++i) xs.push_back(-1.0 + 2.0 * i / grid);
    for (double x : xs) {
      const auto expected = oracle::basis(grid, order, x);
      const auto got = b.eval(x);
      for (int i = 0; i < b.size(); ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-10).scale(1.0));
    }
  }
}

TEST_CASE("float basis agrees with double") {
  BSplineBasis<float> bf(10, 3);
  BSplineBasis<double> bd(10, 3);
  for (double x = -1.0; x <= 1.0; x += 0.0137) {
    const auto f = bf.eval(static_cast<float>(x));
    const auto d = bd.eval(static_cast<double>(static_cast<float>(x)));
    CHECK((f.cast<double>() - d).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("partition of unity and nonnegativity") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto [order, grid] : kGrid) {
    BSplineBasis<double> b(grid, order);
    for (int i = 0; i < 1000; ++i) {
      const auto n = b.eval(u(rng));
      CHECK(n.sum() == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(n.minCoeff() >= 0.0);
    }
    CHECK(b.eval(-1.0).sum() == doctest::Approx(1.0));
    CHECK(b.eval(1.0).sum() == doctest::Approx(1.0));
  }
}

TEST_CASE("linear hats interpolate at breakpoints") {
  BSplineBasis<double> b(3, 1);
  for (int k = 0; k <= 3; ++k) {
    const auto n = b.eval(-1.0 + 2.0 * k / 3.0);
    for (int i = 0; i < 4; ++i) CHECK(n[i] == doctest::Approx(i == k ? 1.0 : 0.0));
  }
}

TEST_CASE("out-of-domain input gives zero basis and derivatives") {
  BSplineBasis<double> b(5, 2);
  CHECK(b.eval(2.0).isZero());
  CHECK(b.eval(-1.0 - 1e-9).isZero());
  CHECK(b.grad(2.0).isZero());
  CHECK(b.dot(Vector<double>::Ones(b.size()), 1.5) == 0.0);
}

TEST_CASE("derivatives") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (auto [order, grid] : kGrid) {
    BSplineBasis<double> b(grid, order);
    for (int i = 0; i < 200; ++i) {
      const double x = u(rng);
      const auto g = b.grad(x);
      CHECK(g.sum() == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
      // Stay away from knots where lower-order derivatives jump.
      const double frac = (x + 1.0) / b.spacing();
      if (std::abs(frac - std::round(frac)) < 1e-3) continue;
      const double h = 1e-7;
      const Vector<double> fd = (b.eval(x + h) - b.eval(x - h)) / (2 * h);
      CHECK((g - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
  // Linear hats have slope +-1/spacing in the middle of a segment.
  BSplineBasis<double> hats(3, 1);
  const auto g = hats.grad(-1.0 + 1.0 / 3.0);
  CHECK(g[0] == doctest::Approx(-1.5));
  CHECK(g[1] == doctest::Approx(1.5));
  CHECK(g[2] == 0.0);
}

TEST_CASE("edge activation") {
  BSplineBasis<double> b(10, 3);
  EdgeActivation<double> a;
  a.coeffs = Vector<double>::Zero(b.size());
  a.w_phi = 0.0;
  a.coeffs.setConstant(3.0);
  CHECK(edge_activate(a, b, 0.3) == 0.0);
  a.w_phi = 2.0;
  a.coeffs.setZero();
  CHECK(edge_activate(a, b, 0.4) == doctest::Approx(2.0 * oracle::silu(0.4)));
  // Constant coefficients reproduce the constant through the partition of unity.
  a.coeffs.setConstant(0.5);
  CHECK(edge_activate(a, b, -0.2) == doctest::Approx(2.0 * (0.5 + oracle::silu(-0.2))));
  // Outside the domain only the SiLU path remains.
  CHECK(edge_activate(a, b, 3.0) == doctest::Approx(2.0 * oracle::silu(3.0)));
  a.coeffs = Vector<double>::Zero(4);
  CHECK_THROWS_AS(edge_activate(a, b, 0.0), DimensionError);
}

TEST_CASE("least-squares spline fit reproduces a spline exactly") {
  BSplineBasis<double> b(5, 3);
  Vector<double> c(b.size());
  c << 0.3, -0.1, 0.8, 0.0, -0.5, 0.2, 1.0, 0.4;
  std::vector<double> xs;
  std::vector<double> ys;
  for (int i = 0; i <= 60; ++i) {
    xs.push_back(-1.0 + i / 30.0);
    ys.push_back(b.dot(c, xs.back()));
  }
  const auto fit = fit_spline_coeffs(b, xs, ys);
  CHECK((fit - c).cwiseAbs().maxCoeff() < 1e-9);
}
