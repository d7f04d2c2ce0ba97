#pragma once

#include "karsein/core.hpp"
#include "karsein/ctr_model.hpp"
#include "karsein/data.hpp"
#include "karsein/spline.hpp"

#include <optional>
#include <span>
#include <vector>

namespace karsein {

/// Per-field embedding rows stacked into one (sum of vocab sizes) x D table.
/// Row 0 of each field is its out-of-vocabulary row.
template <typename Scalar>
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::vector<std::int32_t> vocab_sizes, int dim);

  int dim() const { return dim_; }
  Index field_count() const { return static_cast<Index>(sizes_.size()); }
  const std::vector<std::int32_t>& vocab_sizes() const { return sizes_; }

  // Global table row of a field-local index; out-of-range indices map to OOV.
  Index row_of(Index field, std::int32_t index) const;

  /// X0 for one record: m x D.
  Matrix<Scalar> lookup(std::span<const std::int32_t> record) const;

  /// X0 for a batch, records side by side: m x (B * D).
  void lookup_batch(const RecordMatrix& batch, Matrix<Scalar>& x0) const;

  /// Adds a gradient w.r.t. a batched X0 into weights.grad.
  void accumulate_grad(const RecordMatrix& batch, const Matrix<Scalar>& grad_x0);

  GradSlot<Scalar> weights;

 private:
  int dim_ = 0;
  std::vector<std::int32_t> sizes_;
  std::vector<Index> offsets_;
};

/// One KarSein interaction layer: optional pairwise multiplication with X0,
/// one spline activation per (effective) input row shared across columns,
/// then X_out = W_b X_b + W_s SiLU(X').
template <typename Scalar>
struct KarseinLayer {
  Index in_rows = 0;
  Index out_rows = 0;
  Index field_count = 0;  // rows of X0 used for pairwise products
  bool pairwise = false;
  GradSlot<Scalar> coeffs;  // eff_in x (g + order)
  GradSlot<Scalar> w_base;  // out x eff_in
  GradSlot<Scalar> w_silu;  // out x eff_in
  // Masked effective inputs (value 1) have their weight columns and spline
  // row held at zero. Empty means nothing masked.
  std::vector<std::uint8_t> mask;

  KarseinLayer() = default;
  KarseinLayer(const std::string& prefix, Index in, Index out, Index fields, bool with_pairwise, int basis_size);

  Index eff_in() const { return pairwise ? in_rows * (1 + field_count) : in_rows; }
  bool masked(Index row) const { return !mask.empty() && mask[static_cast<std::size_t>(row)] != 0; }
  void apply_mask();
};

/// Intermediate values of one layer forward pass kept for the backward pass.
template <typename Scalar>
struct LayerCache {
  Matrix<Scalar> input;
  Matrix<Scalar> expanded;  // X' (after pairwise multiplication)
  Matrix<Scalar> spline;    // X_b
  Matrix<Scalar> sigmoid;   // sigma(X')
  Matrix<Scalar> silu;      // SiLU(X')
};

/// Originals first, then X[i] (.) X0[j] for i outer, j inner.
template <typename Scalar>
Matrix<Scalar> pairwise_multiply(const Matrix<Scalar>& x, const Matrix<Scalar>& x0);

/// X_b[h, c] = sum_i N_i(X[h, c]) C[h, i].
template <typename Scalar>
Matrix<Scalar> activation_transform(const Matrix<Scalar>& x, const Matrix<Scalar>& coeffs,
                                    const BSplineBasis<Scalar>& basis);

template <typename Scalar>
Matrix<Scalar> layer_forward(const KarseinLayer<Scalar>& layer, const Matrix<Scalar>& x, const Matrix<Scalar>* x0,
                             const BSplineBasis<Scalar>& basis, LayerCache<Scalar>* cache = nullptr,
                             Index layer_index = 0);

/// Accumulates parameter gradients into the layer's slots, returns dL/dX and
/// adds the pairwise-path contribution to `grad_x0` (when pairwise).
template <typename Scalar>
Matrix<Scalar> layer_backward(KarseinLayer<Scalar>& layer, const LayerCache<Scalar>& cache,
                              const Matrix<Scalar>& grad_out, const Matrix<Scalar>* x0,
                              const BSplineBasis<Scalar>& basis, Matrix<Scalar>* grad_x0);

enum class HeadMode { Mean, PaperSum };
enum class Towers { Both, ExplicitOnly, ImplicitOnly };

struct KarseinConfig {
  int embedding_dim = 16;
  std::vector<int> explicit_hidden{8, 8};
  std::vector<int> implicit_hidden{32, 32};
  int spline_order = 3;
  int grid_size = 10;
  HeadMode head = HeadMode::Mean;
  std::vector<int> pairwise_layers{1, 2};  // 1-based explicit-tower layer indices
  Towers towers = Towers::Both;
  double embedding_std = 0.05;

  void validate() const;
};

template <typename Scalar>
class KarseinModel final : public CtrModel<Scalar> {
 public:
  KarseinModel(const KarseinConfig& config, std::vector<std::int32_t> vocab_sizes, std::uint64_t seed);

  std::string kind() const override { return "karsein"; }
  const KarseinConfig& config() const { return config_; }
  const BSplineBasis<Scalar>& basis() const { return basis_; }

  /// X^T for a batched X0 (m x B*D): 1 x B*D.
  Matrix<Scalar> forward_explicit(const Matrix<Scalar>& x0) const;
  /// e^T for a batched X0: 1 x B.
  Matrix<Scalar> forward_implicit(const Matrix<Scalar>& x0) const;
  /// Wide concatenation of a batched X0: (m*D) x B.
  Matrix<Scalar> flatten_implicit_input(const Matrix<Scalar>& x0) const;

  std::vector<double> predict(const RecordMatrix& batch) const override;
  LossParts compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                              const RegWeights& reg) override;
  LossParts evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                          const RegWeights& reg) const override;

  /// Sum of lambda-weighted L1 + entropy terms over W_b and W_s of every
  /// layer of the active towers.
  double regularization(const RegWeights& reg) const;

  std::vector<GradSlot<Scalar>*> parameters() override;
  std::vector<const GradSlot<Scalar>*> parameters() const override;
  void after_update() override;
  std::unique_ptr<CtrModel<Scalar>> clone() const override;

  bool has_explicit() const { return config_.towers != Towers::ImplicitOnly; }
  bool has_implicit() const { return config_.towers != Towers::ExplicitOnly; }

  EmbeddingTable<Scalar> embedding;
  std::vector<KarseinLayer<Scalar>> explicit_tower;
  std::vector<KarseinLayer<Scalar>> implicit_tower;
  GradSlot<Scalar> w_out;  // D x 1

 private:
  struct Logits {
    std::vector<double> explicit_logit;
    std::vector<double> implicit_logit;
  };
  Logits logits(const Matrix<Scalar>& xt, const Matrix<Scalar>& et, Index batch) const;
  double head(const Logits& l, std::size_t b) const;

  KarseinConfig config_;
  BSplineBasis<Scalar> basis_;
};

/// Converts a model between scalar types (used to run verification in double).
template <typename To, typename From>
KarseinModel<To> cast_model(const KarseinModel<From>& model);

}  // namespace karsein
