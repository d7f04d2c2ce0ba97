#pragma once

#include "karsein/core.hpp"
#include "karsein/ctr_model.hpp"
#include "karsein/data.hpp"

#include <functional>
#include <string>
#include <vector>

namespace karsein {

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 512;
  int max_epochs = 20;
  int patience = 2;
  RegWeights reg{1e-3, 1e-4};
  std::uint64_t seed = 2024;
  int eval_batch = 4096;

  void validate() const;
};

struct EvalMetrics {
  double auc = 0.5;
  double logloss = 0.0;
  std::size_t count = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // batch-size-weighted mean of the total objective
  double val_auc = 0.0;
  double val_logloss = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochMetrics> epochs;
  EvalMetrics initial_val;
  int best_epoch = -1;
  double best_val_auc = 0.0;
  std::string stop_reason;
  std::string best_checkpoint;
};

template <typename Scalar>
LossParts total_loss(const CtrModel<Scalar>& model, const RecordMatrix& batch, std::span<const float> labels,
                     const RegWeights& reg) {
  return model.evaluate_loss(batch, labels, reg);
}

/// Fills every parameter gradient with d(total loss)/d(parameter).
template <typename Scalar>
LossParts backward(CtrModel<Scalar>& model, const RecordMatrix& batch, std::span<const float> labels,
                   const RegWeights& reg) {
  return model.compute_gradients(batch, labels, reg);
}

template <typename Scalar>
EvalMetrics evaluate(const CtrModel<Scalar>& model, const EncodedDataset& data, std::span<const std::int32_t> rows,
                     int eval_batch = 4096);

template <typename Scalar>
std::vector<double> predict_rows(const CtrModel<Scalar>& model, const EncodedDataset& data,
                                 std::span<const std::int32_t> rows, int eval_batch = 4096);

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Minibatch Adam on the total objective with per-epoch validation and early
/// stopping on validation AUC. On return the model holds the best-validation
/// parameters.
template <typename Scalar>
TrainReport train(CtrModel<Scalar>& model, const EncodedDataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

template <typename Scalar>
std::vector<Matrix<Scalar>> snapshot(const CtrModel<Scalar>& model);
template <typename Scalar>
void restore(CtrModel<Scalar>& model, const std::vector<Matrix<Scalar>>& values);

}  // namespace karsein
