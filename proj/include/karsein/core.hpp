#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace karsein {

// Dense storage used throughout. Row-major so that a matrix of stacked
// embedding rows matches the memory layout of the checkpoint blob.
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;
using Index = Eigen::Index;

using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Index rows, Index cols) {
  std::ostringstream os;
  os << rows << "x" << cols;
  return os.str();
}

template <typename A, typename B>
auto matmul(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_str(a.rows(), a.cols()) + " * " +
                         shape_str(b.rows(), b.cols()));
  }
  Matrix<Scalar> out = a * b;
  return out;
}

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) {
    return Scalar(1) / (Scalar(1) + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
inline Scalar silu(Scalar x) {
  return x * sigmoid(x);
}

template <typename Scalar>
inline Scalar silu_grad(Scalar x) {
  const Scalar s = sigmoid(x);
  return s + x * s * (Scalar(1) - s);
}

/// A trainable tensor together with its gradient buffer.
template <typename Scalar>
struct GradSlot {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  GradSlot() = default;
  GradSlot(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Index size() const { return value.size(); }
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::int64_t step = 0;
  Matrix<Scalar> m;
  Matrix<Scalar> v;
  AdamConfig config;
};

/// One Adam step with bias correction. Throws NumericError (and leaves the
/// parameter and state untouched) when the gradient holds a non-finite value.
template <typename Scalar>
void adam_update(GradSlot<Scalar>& param, AdamState<Scalar>& state);

/// Adam over a fixed list of parameters; states are created lazily.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(std::span<GradSlot<Scalar>* const> params);
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<AdamState<Scalar>> states_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index coordinates = 0;
};

/// Central-difference check of analytic gradients already stored in
/// `params[*].grad`. `loss` is re-evaluated with single coordinates perturbed
/// by +-h; values are restored afterwards. The error per coordinate is
/// |g_analytic - g_fd| / max(1, |g_fd|).
GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<GradSlot<double>* const> params, double h = 1e-5);

template <typename Scalar>
void fill_normal(Matrix<Scalar>& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <typename Scalar>
void fill_uniform(Matrix<Scalar>& m, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

// Glorot/Xavier uniform for an out x in weight.
template <typename Scalar>
void fill_xavier(Matrix<Scalar>& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  fill_uniform(m, -limit, limit, rng);
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// Mixes a seed with a stream id so that independent consumers (init,
// shuffling per epoch, sampling) draw from unrelated sequences.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace karsein
