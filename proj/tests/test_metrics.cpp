#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "karsein/metrics.hpp"
#include "oracles.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace karsein;

TEST_CASE("auc matches the all-pairs oracle, ties included") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 50 + static_cast<int>(rng() % 300);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<float> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      // Coarse scores force plenty of ties.
      s[static_cast<std::size_t>(i)] = static_cast<double>(rng() % 17) / 16.0;
      y[static_cast<std::size_t>(i)] = static_cast<float>(rng() % 3 == 0);
    }
    CHECK(std::abs(auc(s, y) - oracle::auc(s, y)) < 1e-12);
  }
}

TEST_CASE("auc corner cases") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  CHECK(auc(s, std::vector<float>{0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK(auc(s, std::vector<float>{0, 0, 0, 0}) == 0.5);
  CHECK(auc(s, std::vector<float>{1, 1, 1, 1}) == 0.5);
  CHECK(auc(std::vector<double>{0.2, 0.2}, std::vector<float>{0, 1}) == 0.5);
  CHECK(auc(std::vector<double>{0.1, 0.9}, std::vector<float>{0, 1}) == 1.0);
  CHECK(auc(std::vector<double>{0.9, 0.1}, std::vector<float>{0, 1}) == 0.0);
}

TEST_CASE("logloss") {
  CHECK(logloss(std::vector<double>{0.5, 0.5}, std::vector<float>{0, 1}) == doctest::Approx(std::log(2.0)));
  CHECK(logloss(std::vector<double>{0.9, 0.2}, std::vector<float>{1, 0}) ==
        doctest::Approx(-(std::log(0.9) + std::log(0.8)) / 2));
  // Clamping keeps certain mistakes finite.
  const double worst = logloss(std::vector<double>{0.0}, std::vector<float>{1});
  CHECK(worst == doctest::Approx(-std::log(kProbClamp)));
  CHECK(logloss(std::vector<double>{1.0}, std::vector<float>{1}) == doctest::Approx(-std::log(1 - kProbClamp)));
}
