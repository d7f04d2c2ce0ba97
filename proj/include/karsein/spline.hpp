#pragma once

#include "karsein/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace karsein {

// Largest supported spline order; keeps the local evaluation buffers on the stack.
inline constexpr int kMaxSplineOrder = 7;

/// Uniform clamped B-spline basis of order `order` (polynomial degree) over
/// `grid` equal segments of [lo, hi]. There are grid + order basis functions.
/// Outside [lo, hi] every basis function (and derivative) evaluates to zero.
template <typename Scalar>
class BSplineBasis {
 public:
  BSplineBasis(int grid, int order, Scalar lo = Scalar(-1), Scalar hi = Scalar(1))
      : grid_(grid), order_(order), lo_(lo), hi_(hi) {
    if (grid < 1) throw ConfigError("spline grid size must be >= 1, got " + std::to_string(grid));
    if (order < 1 || order > kMaxSplineOrder) {
      throw ConfigError("spline order must be in [1, " + std::to_string(kMaxSplineOrder) + "], got " +
                        std::to_string(order));
    }
    if (!(lo < hi)) throw ConfigError("spline domain requires lo < hi");
    step_ = (hi - lo) / static_cast<Scalar>(grid);
    knots_.reserve(static_cast<std::size_t>(grid + 2 * order + 1));
    for (int i = 0; i < order; ++i) knots_.push_back(lo);
    for (int i = 0; i <= grid; ++i) knots_.push_back(i == grid ? hi : lo + step_ * static_cast<Scalar>(i));
    for (int i = 0; i < order; ++i) knots_.push_back(hi);
    build_tables();
  }

  int grid() const { return grid_; }
  int order() const { return order_; }
  int size() const { return grid_ + order_; }
  Scalar lo() const { return lo_; }
  Scalar hi() const { return hi_; }
  Scalar spacing() const { return step_; }
  const std::vector<Scalar>& knots() const { return knots_; }

  bool in_domain(Scalar x) const { return x >= lo_ && x <= hi_; }

  /// Segment index and local coordinate t in [0, 1] of an in-domain x.
  int locate(Scalar x, Scalar& t) const {
    const Scalar u = (x - lo_) / step_;
    int seg = static_cast<int>(u);
    if (seg > grid_ - 1) seg = grid_ - 1;
    t = u - static_cast<Scalar>(seg);
    return seg;
  }

  /// Power-basis coefficients in t of the order+1 functions active on a
  /// segment: entry [(seg * k + r) * k + p] with k = order + 1 is the t^p
  /// coefficient of basis function seg + r.
  const std::vector<Scalar>& segment_polynomials() const { return value_poly_; }

  /// Evaluates the order+1 basis functions that can be nonzero at x.
  /// Returns the index of the first of them, or -1 when x is outside the
  /// domain (values untouched). `derivs` may be null.
  int eval_local(Scalar x, Scalar* values, Scalar* derivs = nullptr) const {
    if (!in_domain(x)) return -1;
    Scalar t;
    const int seg = locate(x, t);
    const int k = order_ + 1;
    const Scalar* poly = value_poly_.data() + static_cast<std::size_t>(seg * k * k);
    for (int r = 0; r < k; ++r) {
      const Scalar* c = poly + r * k;
      Scalar v = c[order_];
      for (int p = order_ - 1; p >= 0; --p) v = v * t + c[p];
      values[r] = v;
    }
    if (derivs != nullptr) {
      const Scalar* dpoly = deriv_poly_.data() + static_cast<std::size_t>(seg * k * k);
      for (int r = 0; r < k; ++r) {
        const Scalar* c = dpoly + r * k;
        Scalar d = c[order_ - 1];
        for (int p = order_ - 2; p >= 0; --p) d = d * t + c[p];
        derivs[r] = d;
      }
    }
    return seg;
  }

  Vector<Scalar> eval(Scalar x) const {
    Vector<Scalar> out = Vector<Scalar>::Zero(size());
    std::array<Scalar, kMaxSplineOrder + 1> vals{};
    const int first = eval_local(x, vals.data());
    if (first >= 0) {
      for (int r = 0; r <= order_; ++r) out[first + r] = vals[r];
    }
    return out;
  }

  Vector<Scalar> grad(Scalar x) const {
    Vector<Scalar> out = Vector<Scalar>::Zero(size());
    std::array<Scalar, kMaxSplineOrder + 1> vals{};
    std::array<Scalar, kMaxSplineOrder + 1> ders{};
    const int first = eval_local(x, vals.data(), ders.data());
    if (first >= 0) {
      for (int r = 0; r <= order_; ++r) out[first + r] = ders[r];
    }
    return out;
  }

  template <typename Derived>
  Scalar dot(const Eigen::MatrixBase<Derived>& coeffs, Scalar x) const {
    std::array<Scalar, kMaxSplineOrder + 1> vals{};
    const int first = eval_local(x, vals.data());
    if (first < 0) return Scalar(0);
    Scalar s = Scalar(0);
    for (int r = 0; r <= order_; ++r) s += coeffs(first + r) * vals[r];
    return s;
  }

 private:
  // Cox-de Boor triangle for the degree-`degree` functions nonzero on knot span `span`.
  static void basis_funs(const std::vector<double>& knots, int span, double x, int degree, double* n) {
    std::array<double, kMaxSplineOrder + 1> left{};
    std::array<double, kMaxSplineOrder + 1> right{};
    n[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
      left[j] = x - knots[span + 1 - j];
      right[j] = knots[span + j] - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double denom = right[r + 1] + left[j - r];
        const double temp = denom != 0.0 ? n[r] / denom : 0.0;
        n[r] = saved + right[r + 1] * temp;
        saved = left[j - r] * temp;
      }
      n[j] = saved;
    }
  }

  // On segment s every active basis function is a degree-`order` polynomial
  // in the local coordinate t = (x - lo) / step - s. Its power-basis
  // coefficients are recovered by interpolating Cox-de Boor values at
  // order + 1 points of [0, 1].
  void build_tables() {
    const int k = order_ + 1;
    std::vector<double> knots(knots_.size());
    const double lo = static_cast<double>(lo_);
    const double step = (static_cast<double>(hi_) - lo) / grid_;
    for (std::size_t i = 0; i < knots.size(); ++i) {
      const int u = std::clamp(static_cast<int>(i) - order_, 0, grid_);
      knots[i] = u == grid_ ? static_cast<double>(hi_) : lo + step * u;
    }
    Eigen::MatrixXd vander(k, k);
    Eigen::MatrixXd samples(k, k);
    value_poly_.assign(static_cast<std::size_t>(grid_ * k * k), Scalar(0));
    deriv_poly_.assign(static_cast<std::size_t>(grid_ * k * k), Scalar(0));
    std::array<double, kMaxSplineOrder + 1> n{};
    for (int seg = 0; seg < grid_; ++seg) {
      for (int q = 0; q < k; ++q) {
        const double t = static_cast<double>(q) / order_;
        for (int p = 0; p < k; ++p) vander(q, p) = std::pow(t, p);
        basis_funs(knots, seg + order_, lo + step * (seg + t), order_, n.data());
        for (int r = 0; r < k; ++r) samples(q, r) = n[r];
      }
      const Eigen::MatrixXd coef = vander.fullPivLu().solve(samples);  // coef(p, r)
      for (int r = 0; r < k; ++r) {
        for (int p = 0; p < k; ++p) {
          const std::size_t base = static_cast<std::size_t>((seg * k + r) * k);
          value_poly_[base + p] = static_cast<Scalar>(coef(p, r));
          if (p >= 1) deriv_poly_[base + p - 1] = static_cast<Scalar>(p * coef(p, r) / step);
        }
      }
    }
  }

  int grid_;
  int order_;
  Scalar lo_;
  Scalar hi_;
  Scalar step_;
  std::vector<Scalar> knots_;
  // Per segment, per active function: power-basis coefficients in t.
  std::vector<Scalar> value_poly_;
  std::vector<Scalar> deriv_poly_;
};

template <typename Scalar>
BSplineBasis<Scalar> make_uniform_knots(int grid, int order, Scalar lo, Scalar hi) {
  return BSplineBasis<Scalar>(grid, order, lo, hi);
}

/// A KAN edge activation: w_phi * (sum_i c_i N_i(x) + silu(x)).
template <typename Scalar>
struct EdgeActivation {
  Scalar w_phi = Scalar(1);
  Vector<Scalar> coeffs;
};

template <typename Scalar>
Scalar edge_activate(const EdgeActivation<Scalar>& a, const BSplineBasis<Scalar>& basis, Scalar x) {
  if (a.coeffs.size() != basis.size()) {
    throw DimensionError("edge_activate: expected " + std::to_string(basis.size()) + " coefficients, got " +
                         std::to_string(a.coeffs.size()));
  }
  return a.w_phi * (basis.dot(a.coeffs, x) + silu(x));
}

/// Least-squares spline coefficients such that spline(x) ~= target(x) on the
/// sample points `xs`.
template <typename Scalar>
Vector<Scalar> fit_spline_coeffs(const BSplineBasis<Scalar>& basis, const std::vector<double>& xs,
                                 const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.empty()) throw DimensionError("fit_spline_coeffs: bad sample sizes");
  MatrixD design = MatrixD::Zero(static_cast<Index>(xs.size()), basis.size());
  BSplineBasis<double> b(basis.grid(), basis.order(), static_cast<double>(basis.lo()),
                         static_cast<double>(basis.hi()));
  for (std::size_t k = 0; k < xs.size(); ++k) design.row(static_cast<Index>(k)) = b.eval(xs[k]).transpose();
  const Eigen::Map<const Eigen::VectorXd> y(ys.data(), static_cast<Index>(ys.size()));
  const Eigen::VectorXd c = design.colPivHouseholderQr().solve(y);
  return c.cast<Scalar>();
}

}  // namespace karsein
