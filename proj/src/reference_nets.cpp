#include "karsein/reference_nets.hpp"

#include "karsein/metrics.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>

namespace karsein {

// ---------------------------------------------------------------- KAN

template <typename Scalar>
KanLayer<Scalar>::KanLayer(const std::string& prefix, Index in, Index out, int basis_size)
    : in_dim(in), out_dim(out) {
  if (in < 1 || out < 1) throw ConfigError("KAN layer widths must be >= 1");
  w_phi = GradSlot<Scalar>(prefix + ".w_phi", out, in);
  coeffs = GradSlot<Scalar>(prefix + ".coeffs", out * in, basis_size);
}

template <typename Scalar>
EdgeActivation<Scalar> KanLayer<Scalar>::edge(Index i, Index j) const {
  return {w_phi.value(j, i), coeffs.value.row(j * in_dim + i).transpose()};
}

template <typename Scalar>
void KanLayer<Scalar>::set_edge(Index i, Index j, const EdgeActivation<Scalar>& e) {
  if (e.coeffs.size() != coeffs.value.cols()) throw DimensionError("set_edge: coefficient count mismatch");
  w_phi.value(j, i) = e.w_phi;
  coeffs.value.row(j * in_dim + i) = e.coeffs.transpose();
}

template <typename Scalar>
KanNetwork<Scalar>::KanNetwork(std::vector<int> widths, int grid, int order, std::uint64_t seed,
                               const std::string& prefix)
    : widths_(std::move(widths)), basis_(grid, order) {
  if (widths_.size() < 2) throw ConfigError("KAN needs at least an input and an output width");
  const int nb = basis_.size();
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layers.emplace_back(prefix + "." + std::to_string(l), widths_[l], widths_[l + 1], nb);
  }
  Rng rng(mix_seed(seed, 2));
  const double coeff_std = 0.1 / std::sqrt(static_cast<double>(nb));
  for (auto& layer : layers) {
    layer.w_phi.value.setOnes();
    fill_normal(layer.coeffs.value, coeff_std, rng);
  }
}

template <typename Scalar>
Matrix<Scalar> KanNetwork<Scalar>::forward(const Matrix<Scalar>& x, KanCache<Scalar>* cache) const {
  if (x.cols() != widths_.front()) {
    throw DimensionError("kan_forward: expected input width " + std::to_string(widths_.front()) + ", got " +
                         std::to_string(x.cols()));
  }
  const int k = basis_.order() + 1;
  if (cache != nullptr) {
    cache->inputs.assign(layers.size(), {});
    cache->first.assign(layers.size(), {});
    cache->values.assign(layers.size(), {});
    cache->derivs.assign(layers.size(), {});
  }
  Matrix<Scalar> cur = x;
  std::vector<int> first;
  std::vector<Scalar> vals;
  std::vector<Scalar> ders;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const Index n = cur.rows();
    first.resize(static_cast<std::size_t>(n * layer.in_dim));
    vals.resize(first.size() * static_cast<std::size_t>(k));
    ders.resize(first.size() * static_cast<std::size_t>(k));
    for (Index b = 0; b < n; ++b) {
      for (Index i = 0; i < layer.in_dim; ++i) {
        const Index e = b * layer.in_dim + i;
        first[static_cast<std::size_t>(e)] = basis_.eval_local(cur(b, i), vals.data() + e * k, ders.data() + e * k);
      }
    }
    Matrix<Scalar> out = Matrix<Scalar>::Zero(n, layer.out_dim);
    for (Index b = 0; b < n; ++b) {
      for (Index i = 0; i < layer.in_dim; ++i) {
        const Index e = b * layer.in_dim + i;
        const int f = first[static_cast<std::size_t>(e)];
        const Scalar s = silu(cur(b, i));
        const Scalar* v = vals.data() + e * k;
        for (Index j = 0; j < layer.out_dim; ++j) {
          Scalar spline = Scalar(0);
          if (f >= 0) {
            const Scalar* c = layer.coeffs.value.row(j * layer.in_dim + i).data();
            for (int r = 0; r < k; ++r) spline += c[f + r] * v[r];
          }
          out(b, j) += layer.w_phi.value(j, i) * (spline + s);
        }
      }
    }
    if (cache != nullptr) {
      cache->inputs[l] = cur;
      cache->first[l] = first;
      cache->values[l] = vals;
      cache->derivs[l] = ders;
    }
    cur = std::move(out);
  }
  return cur;
}

template <typename Scalar>
Matrix<Scalar> KanNetwork<Scalar>::backward(const KanCache<Scalar>& cache, const Matrix<Scalar>& grad_out) {
  const int k = basis_.order() + 1;
  Matrix<Scalar> g = grad_out;
  for (std::size_t l = layers.size(); l-- > 0;) {
    auto& layer = layers[l];
    const Matrix<Scalar>& x = cache.inputs[l];
    const Index n = x.rows();
    Matrix<Scalar> gx = Matrix<Scalar>::Zero(n, layer.in_dim);
    for (Index b = 0; b < n; ++b) {
      for (Index i = 0; i < layer.in_dim; ++i) {
        const Index e = b * layer.in_dim + i;
        const int f = cache.first[l][static_cast<std::size_t>(e)];
        const Scalar xv = x(b, i);
        const Scalar s = silu(xv);
        const Scalar ds = silu_grad(xv);
        const Scalar* v = cache.values[l].data() + e * k;
        const Scalar* d = cache.derivs[l].data() + e * k;
        Scalar acc = Scalar(0);
        for (Index j = 0; j < layer.out_dim; ++j) {
          const Scalar go = g(b, j);
          if (go == Scalar(0)) continue;
          const Index row = j * layer.in_dim + i;
          const Scalar w = layer.w_phi.value(j, i);
          Scalar spline = Scalar(0);
          Scalar slope = Scalar(0);
          if (f >= 0) {
            const Scalar* c = layer.coeffs.value.row(row).data();
            Scalar* gc = layer.coeffs.grad.row(row).data();
            for (int r = 0; r < k; ++r) {
              spline += c[f + r] * v[r];
              slope += c[f + r] * d[r];
              gc[f + r] += go * w * v[r];
            }
          }
          layer.w_phi.grad(j, i) += go * (spline + s);
          acc += go * w * (slope + ds);
        }
        gx(b, i) = acc;
      }
    }
    g = std::move(gx);
  }
  return g;
}

template <typename Scalar>
double KanNetwork<Scalar>::regularization(const RegWeights& reg, bool accumulate_grad) {
  double r = 0.0;
  for (auto& layer : layers) {
    r += sparsity_penalty<Scalar>(layer.w_phi.value, reg, accumulate_grad ? &layer.w_phi.grad : nullptr);
  }
  return r;
}

template <typename Scalar>
std::vector<GradSlot<Scalar>*> KanNetwork<Scalar>::parameters() {
  std::vector<GradSlot<Scalar>*> out;
  for (auto& layer : layers) {
    out.push_back(&layer.w_phi);
    out.push_back(&layer.coeffs);
  }
  return out;
}

template <typename Scalar>
std::vector<const GradSlot<Scalar>*> KanNetwork<Scalar>::parameters() const {
  std::vector<const GradSlot<Scalar>*> out;
  for (const auto& layer : layers) {
    out.push_back(&layer.w_phi);
    out.push_back(&layer.coeffs);
  }
  return out;
}

template <typename Scalar>
Scalar kan_forward(const KanNetwork<Scalar>& net, std::span<const Scalar> x) {
  if (static_cast<int>(x.size()) != net.widths().front()) {
    throw DimensionError("kan_forward: expected " + std::to_string(net.widths().front()) + " inputs, got " +
                         std::to_string(x.size()));
  }
  Matrix<Scalar> in(1, static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Index>(i)) = x[i];
  return net.forward(in)(0, 0);
}

template <typename Scalar>
KanNetwork<Scalar> kan_prune(const KanNetwork<Scalar>& net, double threshold, PruneReport* report) {
  if (threshold < 0.0) throw ConfigError("kan_prune: threshold must be >= 0");
  const auto& widths = net.widths();
  const std::size_t depth = net.layers.size();
  std::vector<std::vector<int>> kept(widths.size());
  for (int i = 0; i < widths[0]; ++i) kept[0].push_back(i);
  for (std::size_t l = 1; l <= depth; ++l) {
    const auto& in_w = net.layers[l - 1].w_phi.value;
    for (int j = 0; j < widths[l]; ++j) {
      const double in_max = static_cast<double>(in_w.row(j).cwiseAbs().maxCoeff());
      double out_max = std::numeric_limits<double>::infinity();
      if (l < depth) out_max = static_cast<double>(net.layers[l].w_phi.value.col(j).cwiseAbs().maxCoeff());
      if (in_max > threshold && out_max > threshold) kept[l].push_back(j);
    }
    if (kept[l].empty()) {
      if (l == depth) throw ConfigError("kan_prune: threshold removes the output node");
      throw ConfigError("kan_prune: threshold removes every node of hidden layer " + std::to_string(l));
    }
  }

  std::vector<int> new_widths;
  for (const auto& k : kept) new_widths.push_back(static_cast<int>(k.size()));
  KanNetwork<Scalar> pruned(new_widths, net.basis().grid(), net.basis().order(), 0);
  for (std::size_t l = 0; l < depth; ++l) {
    for (std::size_t a = 0; a < kept[l].size(); ++a) {
      for (std::size_t b = 0; b < kept[l + 1].size(); ++b) {
        pruned.layers[l].set_edge(static_cast<Index>(a), static_cast<Index>(b),
                                  net.layers[l].edge(kept[l][a], kept[l + 1][b]));
      }
    }
  }
  if (report != nullptr) {
    report->original_widths = widths;
    report->surviving_widths = new_widths;
    report->kept_nodes = kept;
    report->threshold = threshold;
  }
  return pruned;
}

// ---------------------------------------------------------------- MLP

template <typename Scalar>
MlpNetwork<Scalar>::MlpNetwork(std::vector<int> widths, std::uint64_t seed, const std::string& prefix)
    : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("MLP needs at least an input and an output width");
  Rng rng(mix_seed(seed, 3));
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    if (widths_[l] < 1 || widths_[l + 1] < 1) throw ConfigError("MLP widths must be >= 1");
    weights.emplace_back(prefix + "." + std::to_string(l) + ".weight", widths_[l + 1], widths_[l]);
    biases.emplace_back(prefix + "." + std::to_string(l) + ".bias", 1, widths_[l + 1]);
    fill_xavier(weights.back().value, rng);
  }
}

template <typename Scalar>
Matrix<Scalar> MlpNetwork<Scalar>::forward(const Matrix<Scalar>& x, std::vector<Matrix<Scalar>>* activations) const {
  if (x.cols() != widths_.front()) {
    throw DimensionError("mlp_forward: expected input width " + std::to_string(widths_.front()) + ", got " +
                         std::to_string(x.cols()));
  }
  if (activations != nullptr) activations->clear();
  Matrix<Scalar> cur = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (activations != nullptr) activations->push_back(cur);
    Matrix<Scalar> z = matmul(cur, weights[l].value.transpose());
    z.rowwise() += biases[l].value.row(0);
    if (l + 1 < weights.size()) z = z.cwiseMax(Scalar(0));
    cur = std::move(z);
  }
  if (activations != nullptr) activations->push_back(cur);
  return cur;
}

template <typename Scalar>
Matrix<Scalar> MlpNetwork<Scalar>::backward(const std::vector<Matrix<Scalar>>& activations,
                                            const Matrix<Scalar>& grad_out) {
  Matrix<Scalar> g = grad_out;
  for (std::size_t l = weights.size(); l-- > 0;) {
    if (l + 1 < weights.size()) {
      // ReLU mask from this layer's post-activation output
      g = g.cwiseProduct(activations[l + 1].unaryExpr([](Scalar v) { return v > Scalar(0) ? Scalar(1) : Scalar(0); }));
    }
    weights[l].grad.noalias() += g.transpose() * activations[l];
    biases[l].grad.row(0) += g.colwise().sum();
    g = g * weights[l].value;
  }
  return g;
}

template <typename Scalar>
std::vector<GradSlot<Scalar>*> MlpNetwork<Scalar>::parameters() {
  std::vector<GradSlot<Scalar>*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

template <typename Scalar>
std::vector<const GradSlot<Scalar>*> MlpNetwork<Scalar>::parameters() const {
  std::vector<const GradSlot<Scalar>*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

template <typename Scalar>
Scalar mlp_forward(const MlpNetwork<Scalar>& net, std::span<const Scalar> x) {
  Matrix<Scalar> in(1, static_cast<Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) in(0, static_cast<Index>(i)) = x[i];
  return net.forward(in)(0, 0);
}

// ---------------------------------------------------------------- CTR wrappers

namespace {

template <typename Scalar>
Matrix<Scalar> concat_embeddings(const EmbeddingTable<Scalar>& table, const RecordMatrix& batch) {
  Matrix<Scalar> x0;
  table.lookup_batch(batch, x0);
  const Index m = table.field_count();
  const Index d = table.dim();
  Matrix<Scalar> wide(batch.rows(), m * d);
  for (Index b = 0; b < batch.rows(); ++b) {
    for (Index f = 0; f < m; ++f) wide.block(b, f * d, 1, d) = x0.block(f, b * d, 1, d);
  }
  return wide;
}

template <typename Scalar>
void scatter_wide_grad(EmbeddingTable<Scalar>& table, const RecordMatrix& batch, const Matrix<Scalar>& grad_wide) {
  const Index m = table.field_count();
  const Index d = table.dim();
  Matrix<Scalar> g(m, batch.rows() * d);
  for (Index b = 0; b < batch.rows(); ++b) {
    for (Index f = 0; f < m; ++f) g.block(f, b * d, 1, d) = grad_wide.block(b, f * d, 1, d);
  }
  table.accumulate_grad(batch, g);
}

// dL/dlogit for sigmoid + clamped log loss averaged over the batch.
template <typename Scalar>
Matrix<Scalar> logit_grad(const std::vector<double>& p, std::span<const float> labels) {
  Matrix<Scalar> g(static_cast<Index>(p.size()), 1);
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t b = 0; b < p.size(); ++b) {
    const bool inside = p[b] > kProbClamp && p[b] < 1.0 - kProbClamp;
    g(static_cast<Index>(b), 0) = inside ? static_cast<Scalar>((p[b] - labels[b]) * inv_n) : Scalar(0);
  }
  return g;
}

template <typename Scalar>
std::vector<double> sigmoid_column(const Matrix<Scalar>& logits) {
  std::vector<double> p(static_cast<std::size_t>(logits.rows()));
  for (std::size_t b = 0; b < p.size(); ++b) {
    const double z = static_cast<double>(logits(static_cast<Index>(b), 0));
    if (!std::isfinite(z)) throw NumericError("predict: non-finite logit for record " + std::to_string(b));
    p[b] = sigmoid(z);
  }
  return p;
}

}  // namespace

template <typename Scalar>
KanCtrModel<Scalar>::KanCtrModel(std::vector<std::int32_t> vocab_sizes, int embedding_dim, std::vector<int> hidden,
                                 int grid, int order, double embedding_std, std::uint64_t seed)
    : embedding(std::move(vocab_sizes), embedding_dim),
      net(
          [&] {
            std::vector<int> w{static_cast<int>(embedding.field_count()) * embedding_dim};
            w.insert(w.end(), hidden.begin(), hidden.end());
            w.push_back(1);
            return w;
          }(),
          grid, order, seed) {
  Rng rng(mix_seed(seed, 1));
  fill_normal(embedding.weights.value, embedding_std, rng);
}

template <typename Scalar>
Matrix<Scalar> KanCtrModel<Scalar>::wide_input(const RecordMatrix& batch) const {
  return concat_embeddings(embedding, batch);
}

template <typename Scalar>
std::vector<double> KanCtrModel<Scalar>::predict(const RecordMatrix& batch) const {
  return sigmoid_column<Scalar>(net.forward(wide_input(batch)));
}

template <typename Scalar>
LossParts KanCtrModel<Scalar>::evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                                             const RegWeights& reg) const {
  const auto p = predict(batch);
  return {logloss(p, labels), const_cast<KanNetwork<Scalar>&>(net).regularization(reg, false)};
}

template <typename Scalar>
LossParts KanCtrModel<Scalar>::compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                                                 const RegWeights& reg) {
  for (auto* p : parameters()) p->zero_grad();
  KanCache<Scalar> cache;
  const Matrix<Scalar> x = wide_input(batch);
  const auto p = sigmoid_column<Scalar>(net.forward(x, &cache));
  const Matrix<Scalar> gx = net.backward(cache, logit_grad<Scalar>(p, labels));
  scatter_wide_grad(embedding, batch, gx);
  const double r = net.regularization(reg, true);
  return {logloss(p, labels), r};
}

template <typename Scalar>
std::vector<GradSlot<Scalar>*> KanCtrModel<Scalar>::parameters() {
  auto out = net.parameters();
  out.insert(out.begin(), &embedding.weights);
  return out;
}

template <typename Scalar>
std::vector<const GradSlot<Scalar>*> KanCtrModel<Scalar>::parameters() const {
  auto out = net.parameters();
  out.insert(out.begin(), &embedding.weights);
  return out;
}

template <typename Scalar>
std::unique_ptr<CtrModel<Scalar>> KanCtrModel<Scalar>::clone() const {
  return std::make_unique<KanCtrModel<Scalar>>(*this);
}

template <typename Scalar>
MlpCtrModel<Scalar>::MlpCtrModel(std::vector<std::int32_t> vocab_sizes, int embedding_dim, std::vector<int> hidden,
                                 double embedding_std, std::uint64_t seed)
    : embedding(std::move(vocab_sizes), embedding_dim),
      net(
          [&] {
            std::vector<int> w{static_cast<int>(embedding.field_count()) * embedding_dim};
            w.insert(w.end(), hidden.begin(), hidden.end());
            w.push_back(1);
            return w;
          }(),
          seed) {
  Rng rng(mix_seed(seed, 1));
  fill_normal(embedding.weights.value, embedding_std, rng);
}

template <typename Scalar>
Matrix<Scalar> MlpCtrModel<Scalar>::wide_input(const RecordMatrix& batch) const {
  return concat_embeddings(embedding, batch);
}

template <typename Scalar>
std::vector<double> MlpCtrModel<Scalar>::predict(const RecordMatrix& batch) const {
  return sigmoid_column<Scalar>(net.forward(wide_input(batch)));
}

template <typename Scalar>
LossParts MlpCtrModel<Scalar>::evaluate_loss(const RecordMatrix& batch, std::span<const float> labels,
                                             const RegWeights&) const {
  const auto p = predict(batch);
  return {logloss(p, labels), 0.0};
}

template <typename Scalar>
LossParts MlpCtrModel<Scalar>::compute_gradients(const RecordMatrix& batch, std::span<const float> labels,
                                                 const RegWeights&) {
  for (auto* p : parameters()) p->zero_grad();
  std::vector<Matrix<Scalar>> acts;
  const auto p = sigmoid_column<Scalar>(net.forward(wide_input(batch), &acts));
  const Matrix<Scalar> gx = net.backward(acts, logit_grad<Scalar>(p, labels));
  scatter_wide_grad(embedding, batch, gx);
  return {logloss(p, labels), 0.0};
}

template <typename Scalar>
std::vector<GradSlot<Scalar>*> MlpCtrModel<Scalar>::parameters() {
  auto out = net.parameters();
  out.insert(out.begin(), &embedding.weights);
  return out;
}

template <typename Scalar>
std::vector<const GradSlot<Scalar>*> MlpCtrModel<Scalar>::parameters() const {
  auto out = net.parameters();
  out.insert(out.begin(), &embedding.weights);
  return out;
}

template <typename Scalar>
std::unique_ptr<CtrModel<Scalar>> MlpCtrModel<Scalar>::clone() const {
  return std::make_unique<MlpCtrModel<Scalar>>(*this);
}

// ---------------------------------------------------------------- synthetic

std::string to_string(SyntheticTarget t) {
  switch (t) {
    case SyntheticTarget::ASquared: return "a^2";
    case SyntheticTarget::BSquared: return "b^2";
    case SyntheticTarget::AB: return "ab";
  }
  return "?";
}

SyntheticTarget synthetic_target_from_string(const std::string& s) {
  if (s == "a^2" || s == "a2") return SyntheticTarget::ASquared;
  if (s == "b^2" || s == "b2") return SyntheticTarget::BSquared;
  if (s == "ab") return SyntheticTarget::AB;
  throw ConfigError("unknown synthetic target '" + s + "'");
}

double synthetic_target_value(SyntheticTarget t, double a, double b) {
  switch (t) {
    case SyntheticTarget::ASquared: return a * a;
    case SyntheticTarget::BSquared: return b * b;
    case SyntheticTarget::AB: return a * b;
  }
  return 0.0;
}

MatrixD synthetic_eval_grid() {
  constexpr int kRowsA = 64;
  constexpr int kRowsB = 32;
  MatrixD grid(kRowsA * kRowsB, 2);
  for (int i = 0; i < kRowsA; ++i) {
    for (int j = 0; j < kRowsB; ++j) {
      grid(i * kRowsB + j, 0) = -1.0 + (2.0 * i + 1.0) / kRowsA;
      grid(i * kRowsB + j, 1) = -1.0 + (2.0 * j + 1.0) / kRowsB;
    }
  }
  return grid;
}

StepsToTarget fit_synthetic(const SyntheticConfig& config) {
  if (config.widths.size() < 2 || config.widths.front() != 2 || config.widths.back() != 1) {
    throw ConfigError("fit_synthetic: widths must start at 2 and end at 1");
  }
  if (config.batch_size < 1 || config.train_points < 1 || config.max_steps < 0) {
    throw ConfigError("fit_synthetic: batch_size, train_points must be >= 1 and max_steps >= 0");
  }
  KanNetwork<double> net(config.widths, config.grid, config.order, config.seed);
  Adam<double> optimizer(AdamConfig{config.lr});
  auto params = net.parameters();
  const RegWeights reg{config.reg, config.reg};

  const MatrixD eval_x = synthetic_eval_grid();
  Eigen::VectorXd eval_y(eval_x.rows());
  for (Index r = 0; r < eval_x.rows(); ++r) eval_y[r] = synthetic_target_value(config.target, eval_x(r, 0), eval_x(r, 1));
  auto rmse = [&] {
    const MatrixD pred = net.forward(eval_x);
    return std::sqrt((pred.col(0) - eval_y).squaredNorm() / static_cast<double>(eval_y.size()));
  };

  StepsToTarget result;
  result.config = config;
  int step = 0;
  int epoch = 0;
  double current = rmse();
  while (step < config.max_steps) {
    Rng rng(mix_seed(config.seed, 0x5000ULL + static_cast<std::uint64_t>(epoch)));
    MatrixD train_x(config.train_points, 2);
    fill_uniform(train_x, -1.0, 1.0, rng);
    for (Index start = 0; start < train_x.rows() && step < config.max_steps; start += config.batch_size) {
      const Index n = std::min<Index>(config.batch_size, train_x.rows() - start);
      const MatrixD x = train_x.middleRows(start, n);
      for (auto* p : params) p->zero_grad();
      KanCache<double> cache;
      const MatrixD pred = net.forward(x, &cache);
      MatrixD g(n, 1);
      for (Index b = 0; b < n; ++b) {
        g(b, 0) = 2.0 * (pred(b, 0) - synthetic_target_value(config.target, x(b, 0), x(b, 1))) / static_cast<double>(n);
      }
      net.backward(cache, g);
      net.regularization(reg, true);
      optimizer.step(params);
      ++step;
      current = rmse();
      if (current <= config.rmse_threshold) {
        result.steps = step;
        result.final_rmse = current;
        return result;
      }
    }
    ++epoch;
  }
  result.final_rmse = current;
  return result;
}

nlohmann::json to_json(const StepsToTarget& r) {
  nlohmann::json j = {{"target", to_string(r.config.target)},
                      {"widths", r.config.widths},
                      {"reg", r.config.reg},
                      {"lr", r.config.lr},
                      {"seed", r.config.seed},
                      {"final_rmse", r.final_rmse}};
  if (r.steps) j["steps_to_rmse_0.05"] = *r.steps;
  else j["steps_to_rmse_0.05"] = "failed";
  return j;
}

nlohmann::json to_json(const PruneReport& r) {
  return {{"threshold", r.threshold},
          {"original_widths", r.original_widths},
          {"surviving_widths", r.surviving_widths},
          {"kept_nodes", r.kept_nodes}};
}

#define KARSEIN_REF_INSTANTIATE(S)                                                  \
  template struct KanLayer<S>;                                                      \
  template class KanNetwork<S>;                                                     \
  template class MlpNetwork<S>;                                                     \
  template class KanCtrModel<S>;                                                    \
  template class MlpCtrModel<S>;                                                    \
  template S kan_forward<S>(const KanNetwork<S>&, std::span<const S>);              \
  template S mlp_forward<S>(const MlpNetwork<S>&, std::span<const S>);              \
  template KanNetwork<S> kan_prune<S>(const KanNetwork<S>&, double, PruneReport*);

KARSEIN_REF_INSTANTIATE(float)
KARSEIN_REF_INSTANTIATE(double)

}  // namespace karsein
