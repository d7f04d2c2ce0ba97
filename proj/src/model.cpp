#include "karsein/model.hpp"

#include "karsein/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace karsein {

// ---------------------------------------------------------------- embedding

template <typename Scalar>
EmbeddingTable<Scalar>::EmbeddingTable(std::vector<std::int32_t> vocab_sizes, int dim)
    : dim_(dim), sizes_(std::move(vocab_sizes)) {
  if (dim < 1) throw ConfigError("embedding dimension must be >= 1");
  if (sizes_.empty()) throw ConfigError("embedding table needs at least one field");
  Index total = 0;
  for (std::int32_t s : sizes_) {
    if (s < 1) throw ConfigError("every field vocabulary needs at least the OOV row");
    offsets_.push_back(total);
    total += s;
  }
  weights = GradSlot<Scalar>("embedding", total, dim);
}

template <typename Scalar>
Index EmbeddingTable<Scalar>::row_of(Index field, std::int32_t index) const {
  const std::int32_t size = sizes_[static_cast<std::size_t>(field)];
  const std::int32_t local = (index < 0 || index >= size) ? 0 : index;
  return offsets_[static_cast<std::size_t>(field)] + local;
}

template <typename Scalar>
Matrix<Scalar> EmbeddingTable<Scalar>::lookup(std::span<const std::int32_t> record) const {
  if (static_cast<Index>(record.size()) != field_count()) {
    throw DimensionError("embed_lookup: record has " + std::to_string(record.size()) + " fields, schema has " +
                         std::to_string(field_count()));
  }
  Matrix<Scalar> x0(field_count(), dim_);
  for (Index f = 0; f < field_count(); ++f) x0.row(f) = weights.value.row(row_of(f, record[static_cast<std::size_t>(f)]));
  return x0;
}

template <typename Scalar>
void EmbeddingTable<Scalar>::lookup_batch(const RecordMatrix& batch, Matrix<Scalar>& x0) const {
  if (batch.cols() != field_count()) {
    throw DimensionError("embed_lookup: batch has " + std::to_string(batch.cols()) + " fields, schema has " +
                         std::to_string(field_count()));
  }
  const Index b_count = batch.rows();
  x0.resize(field_count(), b_count * dim_);
  for (Index b = 0; b < b_count; ++b) {
    for (Index f = 0; f < field_count(); ++f) {
      x0.block(f, b * dim_, 1, dim_) = weights.value.row(row_of(f, batch(b, f)));
    }
  }
}

template <typename Scalar>
void EmbeddingTable<Scalar>::accumulate_grad(const RecordMatrix& batch, const Matrix<Scalar>& grad_x0) {
  for (Index b = 0; b < batch.rows(); ++b) {
    for (Index f = 0; f < field_count(); ++f) {
      weights.grad.row(row_of(f, batch(b, f))) += grad_x0.block(f, b * dim_, 1, dim_);
    }
  }
}

// ---------------------------------------------------------------- layer

template <typename Scalar>
KarseinLayer<Scalar>::KarseinLayer(const std::string& prefix, Index in, Index out, Index fields,
                                   bool with_pairwise, int basis_size)
    : in_rows(in), out_rows(out), field_count(fields), pairwise(with_pairwise) {
  if (in < 1 || out < 1) throw ConfigError("layer " + prefix + ": widths must be >= 1");
  coeffs = GradSlot<Scalar>(prefix + ".coeffs", eff_in(), basis_size);
  w_base = GradSlot<Scalar>(prefix + ".w_base", out, eff_in());
  w_silu = GradSlot<Scalar>(prefix + ".w_silu", out, eff_in());
}

template <typename Scalar>
void KarseinLayer<Scalar>::apply_mask() {
  if (mask.empty()) return;
  for (Index h = 0; h < eff_in(); ++h) {
    if (!masked(h)) continue;
    coeffs.value.row(h).setZero();
    w_base.value.col(h).setZero();
    w_silu.value.col(h).setZero();
  }
}

template <typename Scalar>
Matrix<Scalar> pairwise_multiply(const Matrix<Scalar>& x, const Matrix<Scalar>& x0) {
  if (x.cols() != x0.cols()) {
    throw DimensionError("pairwise_multiply: column mismatch " + shape_str(x.rows(), x.cols()) + " vs " +
                         shape_str(x0.rows(), x0.cols()));
  }
  const Index h = x.rows();
  const Index m = x0.rows();
  Matrix<Scalar> out(h * (1 + m), x.cols());
  out.topRows(h) = x;
  for (Index i = 0; i < h; ++i) {
    for (Index j = 0; j < m; ++j) out.row(h + i * m + j) = x.row(i).cwiseProduct(x0.row(j));
  }
  return out;
}

namespace {

// Row h's spline restricted to segment s is a polynomial in the local
// coordinate t; fold the coefficients once per row so each entry costs one
// Horner evaluation. out[s * k + p] is the t^p coefficient.
template <typename Scalar>
void fold_row(const Scalar* c, const BSplineBasis<Scalar>& basis, std::vector<Scalar>& out) {
  const int k = basis.order() + 1;
  const auto& poly = basis.segment_polynomials();
  out.assign(static_cast<std::size_t>(basis.grid() * k), Scalar(0));
  for (int seg = 0; seg < basis.grid(); ++seg) {
    for (int r = 0; r < k; ++r) {
      const Scalar* pr = poly.data() + (seg * k + r) * k;
      for (int p = 0; p < k; ++p) out[static_cast<std::size_t>(seg * k + p)] += c[seg + r] * pr[p];
    }
  }
}

template <typename Scalar>
void spline_rows(const Matrix<Scalar>& x, const Matrix<Scalar>& coeffs, const BSplineBasis<Scalar>& basis,
                 Matrix<Scalar>& out) {
  const int k = basis.order() + 1;
  const int deg = basis.order();
  out.resize(x.rows(), x.cols());
  std::vector<Scalar> folded;
  for (Index h = 0; h < x.rows(); ++h) {
    fold_row(coeffs.row(h).data(), basis, folded);
    const Scalar* xr = x.row(h).data();
    Scalar* o = out.row(h).data();
    for (Index col = 0; col < x.cols(); ++col) {
      const Scalar v = xr[col];
      if (!basis.in_domain(v)) {
        o[col] = Scalar(0);
        continue;
      }
      Scalar t;
      const Scalar* a = folded.data() + basis.locate(v, t) * k;
      Scalar s = a[deg];
      for (int p = deg - 1; p >= 0; --p) s = s * t + a[p];
      o[col] = s;
    }
  }
}

// Vectorized SiLU and logistic sigmoid; exp overflow gives the correct limits.
template <typename Scalar>
Matrix<Scalar> sigmoid_of(const Matrix<Scalar>& x) {
  return (Scalar(1) + (-x.array()).exp()).inverse().matrix();
}

}  // namespace

template <typename Scalar>
Matrix<Scalar> activation_transform(const Matrix<Scalar>& x, const Matrix<Scalar>& coeffs,
                                    const BSplineBasis<Scalar>& basis) {
  if (coeffs.rows() != x.rows() || coeffs.cols() != basis.size()) {
    throw DimensionError("activation_transform: coefficients " + shape_str(coeffs.rows(), coeffs.cols()) +
                         " for input " + shape_str(x.rows(), x.cols()) + " and " + std::to_string(basis.size()) +
                         " basis functions");
  }
  Matrix<Scalar> out;
  spline_rows<Scalar>(x, coeffs, basis, out);
  return out;
}

template <typename Scalar>
Matrix<Scalar> layer_forward(const KarseinLayer<Scalar>& layer, const Matrix<Scalar>& x, const Matrix<Scalar>* x0,
                             const BSplineBasis<Scalar>& basis, LayerCache<Scalar>* cache, Index layer_index) {
  const std::string where = "layer " + std::to_string(layer_index);
  if (x.rows() != layer.in_rows) {
    throw DimensionError(where + ": expected " + std::to_string(layer.in_rows) + " input rows, got " +
                         std::to_string(x.rows()));
  }
  LayerCache<Scalar> local;
  LayerCache<Scalar>& c = cache != nullptr ? *cache : local;
  if (layer.pairwise) {
    if (x0 == nullptr) throw DimensionError(where + ": pairwise multiplication needs X0");
    if (x0->rows() != layer.field_count || x0->cols() != x.cols()) {
      throw DimensionError(where + ": X0 shape " + shape_str(x0->rows(), x0->cols()) + " incompatible with input " +
                           shape_str(x.rows(), x.cols()));
    }
    c.expanded = pairwise_multiply(x, *x0);
  } else {
    c.expanded = x;
  }
  if (cache != nullptr) c.input = x;
  spline_rows<Scalar>(c.expanded, layer.coeffs.value, basis, c.spline);
  c.sigmoid = sigmoid_of(c.expanded);
  c.silu = c.expanded.cwiseProduct(c.sigmoid);
  Matrix<Scalar> out = layer.w_base.value * c.spline;
  out.noalias() += layer.w_silu.value * c.silu;
  return out;
}

template <typename Scalar>
Matrix<Scalar> layer_backward(KarseinLayer<Scalar>& layer, const LayerCache<Scalar>& cache,
                              const Matrix<Scalar>& grad_out, const Matrix<Scalar>* x0,
                              const BSplineBasis<Scalar>& basis, Matrix<Scalar>* grad_x0) {
  layer.w_base.grad.noalias() += grad_out * cache.spline.transpose();
  layer.w_silu.grad.noalias() += grad_out * cache.silu.transpose();
  const Matrix<Scalar> d_spline = layer.w_base.value.transpose() * grad_out;
  const Matrix<Scalar> d_silu = layer.w_silu.value.transpose() * grad_out;

  // d SiLU / dx = sigma(x) (1 + x (1 - sigma(x)))
  Matrix<Scalar> d_expanded =
      (d_silu.array() * cache.sigmoid.array() *
       (Scalar(1) + cache.expanded.array() * (Scalar(1) - cache.sigmoid.array())))
          .matrix();

  // Spline path. The slope is the derivative of the folded row polynomial;
  // coefficient gradients come from per-segment moments sum g t^p mapped
  // back through the basis polynomials.
  const int k = basis.order() + 1;
  const int deg = basis.order();
  const Scalar inv_step = Scalar(1) / basis.spacing();
  const auto& poly = basis.segment_polynomials();
  const Index cols = cache.expanded.cols();
  std::vector<Scalar> folded;
  std::vector<Scalar> moments(static_cast<std::size_t>(basis.grid() * k));
  for (Index h = 0; h < cache.expanded.rows(); ++h) {
    fold_row(layer.coeffs.value.row(h).data(), basis, folded);
    std::fill(moments.begin(), moments.end(), Scalar(0));
    const Scalar* xr = cache.expanded.row(h).data();
    const Scalar* gr = d_spline.row(h).data();
    Scalar* dx = d_expanded.row(h).data();
    for (Index col = 0; col < cols; ++col) {
      const Scalar v = xr[col];
      const Scalar g = gr[col];
      if (!basis.in_domain(v) || g == Scalar(0)) continue;
      Scalar t;
      const int seg = basis.locate(v, t);
      const Scalar* a = folded.data() + seg * k;
      Scalar slope = Scalar(deg) * a[deg];
      for (int p = deg - 1; p >= 1; --p) slope = slope * t + Scalar(p) * a[p];
      dx[col] += g * slope * inv_step;
      Scalar* m = moments.data() + seg * k;
      Scalar tp = g;
      for (int p = 0; p < k; ++p) {
        m[p] += tp;
        tp *= t;
      }
    }
    Scalar* gc = layer.coeffs.grad.row(h).data();
    for (int seg = 0; seg < basis.grid(); ++seg) {
      const Scalar* m = moments.data() + seg * k;
      for (int r = 0; r < k; ++r) {
        const Scalar* pr = poly.data() + (seg * k + r) * k;
        Scalar acc = Scalar(0);
        for (int p = 0; p < k; ++p) acc += pr[p] * m[p];
        gc[seg + r] += acc;
      }
    }
  }

  if (!layer.pairwise) return d_expanded;
  const Index hrows = layer.in_rows;
  const Index m = layer.field_count;
  Matrix<Scalar> d_in = d_expanded.topRows(hrows);
  for (Index i = 0; i < hrows; ++i) {
    for (Index j = 0; j < m; ++j) {
      const auto g = d_expanded.row(hrows + i * m + j);
      d_in.row(i) += g.cwiseProduct(x0->row(j));
      if (grad_x0 != nullptr) grad_x0->row(j) += g.cwiseProduct(cache.input.row(i));
    }
  }
  return d_in;
}

// ---------------------------------------------------------------- model

void KarseinConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  for (int w : explicit_hidden) {
    if (w < 1) throw ConfigError("explicit hidden widths must be >= 1");
  }
  for (int w : implicit_hidden) {
    if (w < 1) throw ConfigError("implicit hidden widths must be >= 1");
  }
  const int depth = static_cast<int>(explicit_hidden.size()) + 1;
  for (int p : pairwise_layers) {
    if (p < 1 || p > depth) {
      throw ConfigError("pairwise layer " + std::to_string(p) + " outside explicit tower depth " +
                        std::to_string(depth));
    }
  }
  if (embedding_std <= 0.0) throw ConfigError("embedding_std must be > 0");
}

template <typename Scalar>
KarseinModel<Scalar>::KarseinModel(const KarseinConfig& config, std::vector<std::int32_t> vocab_sizes,
                                   std::uint64_t seed)
    : embedding(std::move(vocab_sizes), config.embedding_dim),
      config_(config),
      basis_(config.grid_size, config.spline_order) {
  config_.validate();
  const Index m = embedding.field_count();
  const Index d = config_.embedding_dim;
  const int nb = basis_.size();

  std::vector<Index> widths{m};
  for (int w : config_.explicit_hidden) widths.push_back(w);
  widths.push_back(1);
  if (has_explicit()) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const bool pw = std::find(config_.pairwise_layers.begin(), config_.pairwise_layers.end(),
                                static_cast<int>(l) + 1) != config_.pairwise_layers.end();
      explicit_tower.emplace_back("explicit." + std::to_string(l), widths[l], widths[l + 1], m, pw, nb);
    }
  }
  widths = {m * d};
  for (int w : config_.implicit_hidden) widths.push_back(w);
  widths.push_back(1);
  if (has_implicit()) {
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      implicit_tower.emplace_back("implicit." + std::to_string(l), widths[l], widths[l + 1], m, false, nb);
    }
  }
  w_out = GradSlot<Scalar>("w_out", has_explicit() ? d : 0, 1);

  Rng rng(mix_seed(seed, 1));
  fill_normal(embedding.weights.value, config_.embedding_std, rng);
  const double coeff_std = 0.1 / std::sqrt(static_cast<double>(nb));
  for (auto* tower : {&explicit_tower, &implicit_tower}) {
    for (auto& layer : *tower) {
      fill_normal(layer.coeffs.value, coeff_std, rng);
      fill_xavier(layer.w_base.value, rng);
      fill_xavier(layer.w_silu.value, rng);
    }
  }
  if (has_explicit()) fill_xavier(w_out.value, rng);
}

template <typename Scalar>
Matrix<Scalar> KarseinModel<Scalar>::forward_explicit(const Matrix<Scalar>& x0) const {
  if (explicit_tower.empty()) throw ConfigError("model has no explicit tower");
  Matrix<Scalar> x = x0;
  for (std::size_t l = 0; l < explicit_tower.size(); ++l) {
    x = layer_forward<Scalar>(explicit_tower[l], x, &x0, basis_, nullptr, static_cast<Index>(l));
  }
  return x;
}

template <typename Scalar>
Matrix<Scalar> KarseinModel<Scalar>::flatten_implicit_input(const Matrix<Scalar>& x0) const {
  const Index m = x0.rows();
  const Index d = config_.embedding_dim;
  const Index b_count = x0.cols() / d;
  Matrix<Scalar> e(m * d, b_count);
  for (Index b = 0; b < b_count; ++b) {
    for (Index j = 0; j < m; ++j) {
      for (Index k = 0; k < d; ++k) e(j * d + k, b) = x0(j, b * d + k);
    }
  }
  return e;
}

template <typename Scalar>
Matrix<Scalar> KarseinModel<Scalar>::forward_implicit(const Matrix<Scalar>& x0) const {
  if (implicit_tower.empty()) throw ConfigError("model has no implicit tower");
  Matrix<Scalar> x = flatten_implicit_input(x0);
  for (std::size_t l = 0; l < implicit_tower.size(); ++l) {
    x = layer_forward<Scalar>(implicit_tower[l], x, nullptr, basis_, nullptr, static_cast<Index>(l));
  }
  return x;
}

template <typename Scalar>
typename KarseinModel<Scalar>::Logits KarseinModel<Scalar>::logits(const Matrix<Scalar>& xt, const Matrix<Scalar>& et,
                                                                   Index batch) const {
  Logits l;
  const Index d = config_.embedding_dim;
  if (has_explicit()) {
    l.explicit_logit.resize(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      double a = 0.0;
      for (Index k = 0; k < d; ++k) a += static_cast<double>(xt(0, b * d + k)) * static_cast<double>(w_out.value(k, 0));
      l.explicit_logit[static_cast<std::size_t>(b)] = a;
    }
  }
  if (has_implicit()) {
    l.implicit_logit.resize(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) l.implicit_logit[static_cast<std::size_t>(b)] = static_cast<double>(et(0, b));
  }
  for (std::size_t b = 0; b < static_cast<std::size_t>(batch); ++b) {
    const bool ok = (l.explicit_logit.empty() || std::isfinite(l.explicit_logit[b])) &&
                    (l.implicit_logit.empty() || std::isfinite(l.implicit_logit[b]));
    if (!ok) throw NumericError("predict: non-finite logit for record " + std::to_string(b));
  }
  return l;
}

template <typename Scalar>
double KarseinModel<Scalar>::head(const Logits& l, std::size_t b) const {
  if (!has_implicit()) return sigmoid(l.explicit_logit[b]);
  if (!has_explicit()) return sigmoid(l.implicit_logit[b]);
  const double sa = sigmoid(l.explicit_logit[b]);
  const double sb = sigmoid(l.implicit_logit[b]);
  if (config_.head == HeadMode::Mean) return 0.5 * (sa + sb);
  return std::min(sa + sb, 1.0 - kProbClamp);
}

template <typename Scalar>
std::vector<double> KarseinModel<Scalar>::predict(const RecordMatrix& batch) const {
  Matrix<Scalar> x0;
  embedding.lookup_batch(batch, x0);
  Matrix<Scalar> xt;
  Matrix<Scalar> et;
  if (has_explicit()) xt = forward_explicit(x0);
  if (has_implicit()) et = forward_implicit(x0);
  const Logits l = logits(xt, et, batch.rows());
  std::vector<double> out(static_cast<std::size_t>(batch.rows()));
  for (std::size_t b = 0; b < out.size(); ++b) out[b] = head(l, b);
  return out;
}

template <typename Scalar>
double KarseinModel<Scalar>::regularization(const RegWeights& reg) const {
  double r = 0.0;
  for (const auto* tower : {&explicit_tower, &implicit_tower}) {
    for (const auto& layer : *tower) {
      r += sparsity_penalty<Scalar>(layer.w_base.value, reg, nullptr);
      r += sparsity_penalty<Scalar>(layer.w_silu.value, reg, nullptr);
    }
  }
  return r;
}

template <typename Scalar>
LossParts KarseinModel<Scalar>::evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                                              const RegWeights& reg) const {
  const auto p = predict(batch);
  return {logloss(p, labels), regularization(reg)};
}

template <typename Scalar>
LossParts KarseinModel<Scalar>::compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                                                  const RegWeights& reg) {
  const Index b_count = batch.rows();
  if (b_count == 0) throw DimensionError("compute_gradients: empty batch");
  if (static_cast<Index>(labels.size()) != b_count) throw DimensionError("compute_gradients: label count mismatch");
  for (auto* p : parameters()) p->zero_grad();

  Matrix<Scalar> x0;
  embedding.lookup_batch(batch, x0);
  std::vector<LayerCache<Scalar>> ecache(explicit_tower.size());
  std::vector<LayerCache<Scalar>> icache(implicit_tower.size());
  Matrix<Scalar> xt;
  Matrix<Scalar> et;
  if (has_explicit()) {
    xt = x0;
    for (std::size_t l = 0; l < explicit_tower.size(); ++l) {
      xt = layer_forward<Scalar>(explicit_tower[l], xt, &x0, basis_, &ecache[l], static_cast<Index>(l));
    }
  }
  if (has_implicit()) {
    et = flatten_implicit_input(x0);
    for (std::size_t l = 0; l < implicit_tower.size(); ++l) {
      et = layer_forward<Scalar>(implicit_tower[l], et, nullptr, basis_, &icache[l], static_cast<Index>(l));
    }
  }
  const Logits lg = logits(xt, et, b_count);

  // dL/d(logit) per record for each tower.
  std::vector<double> preds(static_cast<std::size_t>(b_count));
  std::vector<double> d_a(static_cast<std::size_t>(b_count), 0.0);
  std::vector<double> d_b(static_cast<std::size_t>(b_count), 0.0);
  const double inv_n = 1.0 / static_cast<double>(b_count);
  for (std::size_t b = 0; b < preds.size(); ++b) {
    const double y = labels[b];
    const double p = head(lg, b);
    preds[b] = p;
    const bool inside = p > kProbClamp && p < 1.0 - kProbClamp;
    if (!inside) continue;
    if (!has_implicit()) {
      d_a[b] = (p - y) * inv_n;
    } else if (!has_explicit()) {
      d_b[b] = (p - y) * inv_n;
    } else {
      const double dp = inv_n * ((1.0 - y) / (1.0 - p) - y / p);
      const double sa = sigmoid(lg.explicit_logit[b]);
      const double sb = sigmoid(lg.implicit_logit[b]);
      const double scale = config_.head == HeadMode::Mean ? 0.5 : 1.0;
      d_a[b] = dp * scale * sa * (1.0 - sa);
      d_b[b] = dp * scale * sb * (1.0 - sb);
    }
  }

  Matrix<Scalar> grad_x0 = Matrix<Scalar>::Zero(x0.rows(), x0.cols());
  const Index d = config_.embedding_dim;
  if (has_explicit()) {
    Matrix<Scalar> g(1, b_count * d);
    for (Index b = 0; b < b_count; ++b) {
      const Scalar da = static_cast<Scalar>(d_a[static_cast<std::size_t>(b)]);
      for (Index k = 0; k < d; ++k) {
        g(0, b * d + k) = da * w_out.value(k, 0);
        w_out.grad(k, 0) += da * xt(0, b * d + k);
      }
    }
    for (std::size_t l = explicit_tower.size(); l-- > 0;) {
      g = layer_backward<Scalar>(explicit_tower[l], ecache[l], g, &x0, basis_, &grad_x0);
    }
    grad_x0 += g;
  }
  if (has_implicit()) {
    Matrix<Scalar> g(1, b_count);
    for (Index b = 0; b < b_count; ++b) g(0, b) = static_cast<Scalar>(d_b[static_cast<std::size_t>(b)]);
    for (std::size_t l = implicit_tower.size(); l-- > 0;) {
      g = layer_backward<Scalar>(implicit_tower[l], icache[l], g, nullptr, basis_, nullptr);
    }
    // g is (m*D) x B; fold back into the batched X0 layout.
    for (Index b = 0; b < b_count; ++b) {
      for (Index j = 0; j < x0.rows(); ++j) {
        for (Index k = 0; k < d; ++k) grad_x0(j, b * d + k) += g(j * d + k, b);
      }
    }
  }
  embedding.accumulate_grad(batch, grad_x0);

  double reg_value = 0.0;
  for (auto* tower : {&explicit_tower, &implicit_tower}) {
    for (auto& layer : *tower) {
      reg_value += sparsity_penalty<Scalar>(layer.w_base.value, reg, &layer.w_base.grad);
      reg_value += sparsity_penalty<Scalar>(layer.w_silu.value, reg, &layer.w_silu.grad);
      if (!layer.mask.empty()) {
        for (Index h = 0; h < layer.eff_in(); ++h) {
          if (!layer.masked(h)) continue;
          layer.coeffs.grad.row(h).setZero();
          layer.w_base.grad.col(h).setZero();
          layer.w_silu.grad.col(h).setZero();
        }
      }
    }
  }
  return {logloss(preds, labels), reg_value};
}

template <typename Scalar>
std::vector<GradSlot<Scalar>*> KarseinModel<Scalar>::parameters() {
  std::vector<GradSlot<Scalar>*> out{&embedding.weights};
  for (auto* tower : {&explicit_tower, &implicit_tower}) {
    for (auto& layer : *tower) {
      out.push_back(&layer.coeffs);
      out.push_back(&layer.w_base);
      out.push_back(&layer.w_silu);
    }
  }
  if (has_explicit()) out.push_back(&w_out);
  return out;
}

template <typename Scalar>
std::vector<const GradSlot<Scalar>*> KarseinModel<Scalar>::parameters() const {
  std::vector<const GradSlot<Scalar>*> out;
  for (auto* p : const_cast<KarseinModel*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename Scalar>
void KarseinModel<Scalar>::after_update() {
  for (auto* tower : {&explicit_tower, &implicit_tower}) {
    for (auto& layer : *tower) layer.apply_mask();
  }
}

template <typename Scalar>
std::unique_ptr<CtrModel<Scalar>> KarseinModel<Scalar>::clone() const {
  return std::make_unique<KarseinModel<Scalar>>(*this);
}

template <typename To, typename From>
KarseinModel<To> cast_model(const KarseinModel<From>& model) {
  KarseinModel<To> out(model.config(), model.embedding.vocab_sizes(), 0);
  auto src = model.parameters();
  auto dst = out.parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->value = src[i]->value.template cast<To>();
    dst[i]->zero_grad();
  }
  for (std::size_t l = 0; l < model.explicit_tower.size(); ++l) out.explicit_tower[l].mask = model.explicit_tower[l].mask;
  for (std::size_t l = 0; l < model.implicit_tower.size(); ++l) out.implicit_tower[l].mask = model.implicit_tower[l].mask;
  return out;
}

#define KARSEIN_INSTANTIATE(S)                                                                                     \
  template class EmbeddingTable<S>;                                                                                \
  template struct KarseinLayer<S>;                                                                                 \
  template class KarseinModel<S>;                                                                                  \
  template Matrix<S> pairwise_multiply<S>(const Matrix<S>&, const Matrix<S>&);                                    \
  template Matrix<S> activation_transform<S>(const Matrix<S>&, const Matrix<S>&, const BSplineBasis<S>&);         \
  template Matrix<S> layer_forward<S>(const KarseinLayer<S>&, const Matrix<S>&, const Matrix<S>*,                 \
                                      const BSplineBasis<S>&, LayerCache<S>*, Index);                              \
  template Matrix<S> layer_backward<S>(KarseinLayer<S>&, const LayerCache<S>&, const Matrix<S>&, const Matrix<S>*, \
                                       const BSplineBasis<S>&, Matrix<S>*);

KARSEIN_INSTANTIATE(float)
KARSEIN_INSTANTIATE(double)

template KarseinModel<double> cast_model<double, float>(const KarseinModel<float>&);
template KarseinModel<float> cast_model<float, double>(const KarseinModel<double>&);
template KarseinModel<double> cast_model<double, double>(const KarseinModel<double>&);
template KarseinModel<float> cast_model<float, float>(const KarseinModel<float>&);

}  // namespace karsein
