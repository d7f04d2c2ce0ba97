#include "karsein/training.hpp"

#include "karsein/metrics.hpp"

#include <chrono>
#include <cmath>

namespace karsein {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (reg.l1 < 0.0 || reg.entropy < 0.0) throw ConfigError("lambda1 and lambda2 must be >= 0");
  if (eval_batch < 1) throw ConfigError("eval_batch must be >= 1");
}

template <typename Scalar>
std::vector<double> predict_rows(const CtrModel<Scalar>& model, const EncodedDataset& data,
                                 std::span<const std::int32_t> rows, int eval_batch) {
  std::vector<double> out;
  out.reserve(rows.size());
  RecordMatrix batch;
  std::vector<float> labels;
  for (std::size_t i = 0; i < rows.size(); i += static_cast<std::size_t>(eval_batch)) {
    const std::size_t n = std::min(rows.size() - i, static_cast<std::size_t>(eval_batch));
    data.gather(rows.subspan(i, n), batch, labels);
    const auto p = model.predict(batch);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

template <typename Scalar>
EvalMetrics evaluate(const CtrModel<Scalar>& model, const EncodedDataset& data, std::span<const std::int32_t> rows,
                     int eval_batch) {
  EvalMetrics m;
  m.count = rows.size();
  if (rows.empty()) return m;
  const auto p = predict_rows(model, data, rows, eval_batch);
  std::vector<float> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y[i] = data.labels[static_cast<std::size_t>(rows[i])];
  m.auc = auc(p, y);
  m.logloss = logloss(p, y);
  return m;
}

template <typename Scalar>
std::vector<Matrix<Scalar>> snapshot(const CtrModel<Scalar>& model) {
  std::vector<Matrix<Scalar>> out;
  for (const auto* p : model.parameters()) out.push_back(p->value);
  return out;
}

template <typename Scalar>
void restore(CtrModel<Scalar>& model, const std::vector<Matrix<Scalar>>& values) {
  auto params = model.parameters();
  if (params.size() != values.size()) throw DimensionError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

template <typename Scalar>
TrainReport train(CtrModel<Scalar>& model, const EncodedDataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  TrainReport report;
  report.initial_val = evaluate(model, data, data.split.val, config.eval_batch);
  report.best_val_auc = report.initial_val.auc;
  report.stop_reason = "max_epochs";
  if (config.max_epochs == 0) return report;

  Adam<Scalar> optimizer(AdamConfig{config.lr});
  auto params = model.parameters();
  auto best = snapshot(model);
  bool have_best = false;
  int stale = 0;
  RecordMatrix batch;
  std::vector<float> labels;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t seen = 0;
    bool diverged = false;
    for (const auto& rows : batches(data.split.train, config.batch_size, config.seed, epoch)) {
      data.gather(rows, batch, labels);
      try {
        const LossParts loss = model.compute_gradients(batch, labels, config.reg);
        if (!std::isfinite(loss.total())) {
          diverged = true;
          break;
        }
        optimizer.step(params);
        loss_sum += loss.total() * static_cast<double>(rows.size());
        seen += rows.size();
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
      model.after_update();
    }
    if (diverged) {
      restore(model, best);
      report.stop_reason = "diverged";
      break;
    }

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.train_loss = seen > 0 ? loss_sum / static_cast<double>(seen) : 0.0;
    const EvalMetrics val = evaluate(model, data, data.split.val, config.eval_batch);
    em.val_auc = val.auc;
    em.val_logloss = val.logloss;
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(em);
    if (on_epoch) on_epoch(em);

    if (!have_best || val.auc > report.best_val_auc) {
      have_best = true;
      report.best_val_auc = val.auc;
      report.best_epoch = em.epoch;
      best = snapshot(model);
      stale = 0;
    } else if (++stale >= config.patience) {
      report.stop_reason = "early_stop";
      break;
    }
  }
  restore(model, best);
  return report;
}

#define KARSEIN_TRAIN_INSTANTIATE(S)                                                                            \
  template std::vector<double> predict_rows<S>(const CtrModel<S>&, const EncodedDataset&,                      \
                                               std::span<const std::int32_t>, int);                            \
  template EvalMetrics evaluate<S>(const CtrModel<S>&, const EncodedDataset&, std::span<const std::int32_t>, int); \
  template std::vector<Matrix<S>> snapshot<S>(const CtrModel<S>&);                                             \
  template void restore<S>(CtrModel<S>&, const std::vector<Matrix<S>>&);                                       \
  template TrainReport train<S>(CtrModel<S>&, const EncodedDataset&, const TrainConfig&, const EpochCallback&);

KARSEIN_TRAIN_INSTANTIATE(float)
KARSEIN_TRAIN_INSTANTIATE(double)

}  // namespace karsein
