#pragma once

#include "karsein/core.hpp"

namespace karsein {

struct RegWeights {
  double l1 = 0.0;       // lambda1
  double entropy = 0.0;  // lambda2
};

/// Sum of absolute values.
template <typename Derived>
double l1_reg(const Eigen::MatrixBase<Derived>& w) {
  return w.template cast<double>().cwiseAbs().sum();
}

/// Entropy of the L1-normalized magnitudes |w| / ||w||_1. Zero entries
/// contribute nothing; an all-zero matrix has entropy 0.
template <typename Derived>
double entropy_reg(const Eigen::MatrixBase<Derived>& w) {
  const double total = l1_reg(w);
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (Index r = 0; r < w.rows(); ++r) {
    for (Index c = 0; c < w.cols(); ++c) {
      const double p = std::abs(static_cast<double>(w(r, c))) / total;
      if (p > 0.0) h -= p * std::log(p);
    }
  }
  return h;
}

/// grad += scale * sign(w), with sign(0) = 0.
template <typename Scalar>
void add_l1_grad(const Matrix<Scalar>& w, double scale, Matrix<Scalar>& grad) {
  const Scalar s = static_cast<Scalar>(scale);
  for (Index i = 0; i < w.size(); ++i) {
    const Scalar v = w.data()[i];
    if (v > Scalar(0)) grad.data()[i] += s;
    else if (v < Scalar(0)) grad.data()[i] -= s;
  }
}

/// grad += scale * dH/dw where dH/dw_k = sign(w_k) (-ln p_k - H) / ||w||_1.
/// Zero entries receive a zero subgradient.
template <typename Scalar>
void add_entropy_grad(const Matrix<Scalar>& w, double scale, Matrix<Scalar>& grad) {
  const double total = l1_reg(w);
  if (total <= 0.0) return;
  const double h = entropy_reg(w);
  for (Index i = 0; i < w.size(); ++i) {
    const double v = static_cast<double>(w.data()[i]);
    if (v == 0.0) continue;
    const double p = std::abs(v) / total;
    const double d = (-std::log(p) - h) / total;
    grad.data()[i] += static_cast<Scalar>(scale * (v > 0.0 ? d : -d));
  }
}

/// lambda1 * ||w||_1 + lambda2 * H(w); accumulates its gradient when `grad` is given.
template <typename Scalar>
double sparsity_penalty(const Matrix<Scalar>& w, const RegWeights& reg, Matrix<Scalar>* grad) {
  double value = 0.0;
  if (reg.l1 != 0.0) {
    value += reg.l1 * l1_reg(w);
    if (grad != nullptr) add_l1_grad(w, reg.l1, *grad);
  }
  if (reg.entropy != 0.0) {
    value += reg.entropy * entropy_reg(w);
    if (grad != nullptr) add_entropy_grad(w, reg.entropy, *grad);
  }
  return value;
}

}  // namespace karsein
