#pragma once

#include "karsein/core.hpp"
#include "karsein/data.hpp"
#include "karsein/regularizers.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace karsein {

struct LossParts {
  double prediction = 0.0;      // mean log loss over the batch
  double regularization = 0.0;  // lambda-weighted sparsity terms
  double total() const { return prediction + regularization; }
};

/// Common surface of every CTR model the trainer can optimize.
template <typename Scalar>
class CtrModel {
 public:
  virtual ~CtrModel() = default;

  virtual std::string kind() const = 0;

  /// Click probabilities in (0, 1), one per batch row.
  virtual std::vector<double> predict(const RecordMatrix& batch) const = 0;

  /// Forward + backward on one batch: overwrites every parameter gradient
  /// with d(total loss)/d(parameter) and returns the loss components.
  virtual LossParts compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                                      const RegWeights& reg) = 0;

  /// Loss components without touching gradients.
  virtual LossParts evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                                  const RegWeights& reg) const = 0;

  virtual std::vector<GradSlot<Scalar>*> parameters() = 0;
  virtual std::vector<const GradSlot<Scalar>*> parameters() const = 0;

  /// Called after every optimizer step (masked parameters are re-zeroed here).
  virtual void after_update() {}

  virtual std::unique_ptr<CtrModel> clone() const = 0;

  /// Trainable parameter count excluding the embedding table.
  Index interaction_parameter_count() const {
    Index n = 0;
    for (const auto* p : parameters()) {
      if (p->name != "embedding") n += p->size();
    }
    return n;
  }
};

}  // namespace karsein
