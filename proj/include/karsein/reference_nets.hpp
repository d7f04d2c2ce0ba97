#pragma once

#include "karsein/core.hpp"
#include "karsein/ctr_model.hpp"
#include "karsein/model.hpp"
#include "karsein/spline.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace karsein {

/// Fully connected KAN layer: one learnable activation per (input, output)
/// edge, all sharing one basis. Output j = sum_i phi_{j,i}(x_i).
template <typename Scalar>
struct KanLayer {
  Index in_dim = 0;
  Index out_dim = 0;
  GradSlot<Scalar> w_phi;   // out x in
  GradSlot<Scalar> coeffs;  // (out * in) x (g + order), row j * in + i

  KanLayer() = default;
  KanLayer(const std::string& prefix, Index in, Index out, int basis_size);

  EdgeActivation<Scalar> edge(Index i, Index j) const;
  void set_edge(Index i, Index j, const EdgeActivation<Scalar>& e);
};

template <typename Scalar>
struct KanCache {
  std::vector<Matrix<Scalar>> inputs;  // per layer, B x in
  std::vector<std::vector<int>> first;
  std::vector<std::vector<Scalar>> values;
  std::vector<std::vector<Scalar>> derivs;
};

template <typename Scalar>
class KanNetwork {
 public:
  KanNetwork(std::vector<int> widths, int grid, int order, std::uint64_t seed, const std::string& prefix = "kan");

  const std::vector<int>& widths() const { return widths_; }
  const BSplineBasis<Scalar>& basis() const { return basis_; }

  /// Rows are samples: B x widths.front() -> B x widths.back().
  Matrix<Scalar> forward(const Matrix<Scalar>& x, KanCache<Scalar>* cache = nullptr) const;
  /// Accumulates parameter gradients; returns dL/dx.
  Matrix<Scalar> backward(const KanCache<Scalar>& cache, const Matrix<Scalar>& grad_out);

  /// lambda1 * sum |w_phi| + lambda2 * H(|w_phi| normalized), per layer.
  double regularization(const RegWeights& reg, bool accumulate_grad);

  std::vector<GradSlot<Scalar>*> parameters();
  std::vector<const GradSlot<Scalar>*> parameters() const;

  std::vector<KanLayer<Scalar>> layers;

 private:
  std::vector<int> widths_;
  BSplineBasis<Scalar> basis_;
};

template <typename Scalar>
Scalar kan_forward(const KanNetwork<Scalar>& net, std::span<const Scalar> x);

struct PruneReport {
  std::vector<int> original_widths;
  std::vector<int> surviving_widths;
  std::vector<std::vector<int>> kept_nodes;  // per layer, original node indices
  double threshold = 0.0;
};

/// Keeps a hidden node iff its largest incoming and largest outgoing |w_phi|
/// both exceed `threshold`. Input nodes are always kept. Throws when the
/// output node (or a whole hidden layer) would be removed.
template <typename Scalar>
KanNetwork<Scalar> kan_prune(const KanNetwork<Scalar>& net, double threshold, PruneReport* report = nullptr);

/// Affine layers with ReLU between them.
template <typename Scalar>
class MlpNetwork {
 public:
  MlpNetwork(std::vector<int> widths, std::uint64_t seed, const std::string& prefix = "mlp");

  const std::vector<int>& widths() const { return widths_; }
  Matrix<Scalar> forward(const Matrix<Scalar>& x, std::vector<Matrix<Scalar>>* activations = nullptr) const;
  Matrix<Scalar> backward(const std::vector<Matrix<Scalar>>& activations, const Matrix<Scalar>& grad_out);
  std::vector<GradSlot<Scalar>*> parameters();
  std::vector<const GradSlot<Scalar>*> parameters() const;

  std::vector<GradSlot<Scalar>> weights;  // out x in
  std::vector<GradSlot<Scalar>> biases;   // 1 x out

 private:
  std::vector<int> widths_;
};

template <typename Scalar>
Scalar mlp_forward(const MlpNetwork<Scalar>& net, std::span<const Scalar> x);

/// Embedding table followed by a vanilla KAN over the wide concatenation.
template <typename Scalar>
class KanCtrModel final : public CtrModel<Scalar> {
 public:
  KanCtrModel(std::vector<std::int32_t> vocab_sizes, int embedding_dim, std::vector<int> hidden, int grid, int order,
              double embedding_std, std::uint64_t seed);

  std::string kind() const override { return "kan"; }
  std::vector<double> predict(const RecordMatrix& batch) const override;
  LossParts compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                              const RegWeights& reg) override;
  LossParts evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                          const RegWeights& reg) const override;
  std::vector<GradSlot<Scalar>*> parameters() override;
  std::vector<const GradSlot<Scalar>*> parameters() const override;
  std::unique_ptr<CtrModel<Scalar>> clone() const override;

  EmbeddingTable<Scalar> embedding;
  KanNetwork<Scalar> net;

 private:
  Matrix<Scalar> wide_input(const RecordMatrix& batch) const;
};

/// Embedding table followed by an MLP over the wide concatenation.
template <typename Scalar>
class MlpCtrModel final : public CtrModel<Scalar> {
 public:
  MlpCtrModel(std::vector<std::int32_t> vocab_sizes, int embedding_dim, std::vector<int> hidden, double embedding_std,
              std::uint64_t seed);

  std::string kind() const override { return "mlp"; }
  std::vector<double> predict(const RecordMatrix& batch) const override;
  LossParts compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                              const RegWeights& reg) override;
  LossParts evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                          const RegWeights& reg) const override;
  std::vector<GradSlot<Scalar>*> parameters() override;
  std::vector<const GradSlot<Scalar>*> parameters() const override;
  std::unique_ptr<CtrModel<Scalar>> clone() const override;

  EmbeddingTable<Scalar> embedding;
  MlpNetwork<Scalar> net;

 private:
  Matrix<Scalar> wide_input(const RecordMatrix& batch) const;
};

// ------------------------------------------------------------ synthetic fits

enum class SyntheticTarget { ASquared, BSquared, AB };

std::string to_string(SyntheticTarget t);
SyntheticTarget synthetic_target_from_string(const std::string& s);

struct SyntheticConfig {
  SyntheticTarget target = SyntheticTarget::AB;
  std::vector<int> widths{2, 2, 1};
  double reg = 0.01;
  double lr = 1e-3;
  int max_steps = 5000;
  std::uint64_t seed = 0;
  int grid = 10;
  int order = 3;
  int train_points = 10000;
  int batch_size = 256;
  double rmse_threshold = 0.05;
};

struct StepsToTarget {
  SyntheticConfig config;
  std::optional<int> steps;  // first optimizer step reaching the threshold
  double final_rmse = 0.0;
};

/// Trains a KAN on f(a, b) with (a, b) ~ U[-1, 1]^2, counting Adam steps
/// until held-out RMSE <= threshold.
StepsToTarget fit_synthetic(const SyntheticConfig& config);

/// Held-out evaluation grid (64 x 32 cell midpoints of [-1, 1]^2).
MatrixD synthetic_eval_grid();
double synthetic_target_value(SyntheticTarget t, double a, double b);

nlohmann::json to_json(const StepsToTarget& r);
nlohmann::json to_json(const PruneReport& r);

}  // namespace karsein
