#pragma once

#include <span>

namespace karsein {

inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
double logloss(std::span<const double> predictions, std::span<const float> labels);

// ROC AUC from the rank-sum statistic; tied scores share their average rank.
// Returns 0.5 when one of the classes is absent.
double auc(std::span<const double> scores, std::span<const float> labels);

}  // namespace karsein
