#include "karsein/metrics.hpp"

#include "karsein/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace karsein {

double logloss(std::span<const double> predictions, std::span<const float> labels) {
  if (predictions.empty()) throw DimensionError("logloss: empty input");
  if (predictions.size() != labels.size()) {
    throw DimensionError("logloss: " + std::to_string(predictions.size()) + " predictions vs " +
                         std::to_string(labels.size()) + " labels");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double p = std::clamp(predictions[i], kProbClamp, 1.0 - kProbClamp);
    const double y = labels[i];
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(predictions.size());
}

double auc(std::span<const double> scores, std::span<const float> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positives = 0.0;
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    // ranks are 1-based; the tie group [i, j] shares the mean rank
    const double mean_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] > 0.5f) {
        rank_sum += mean_rank;
        positives += 1.0;
      }
    }
    i = j + 1;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return 0.5;
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

}  // namespace karsein
