#include "karsein/core.hpp"

#include <algorithm>
#include <cmath>

namespace karsein {

template <typename Scalar>
void adam_update(GradSlot<Scalar>& param, AdamState<Scalar>& state) {
  if (param.grad.rows() != param.value.rows() || param.grad.cols() != param.value.cols()) {
    throw DimensionError("adam_update: gradient shape " + shape_str(param.grad.rows(), param.grad.cols()) +
                         " does not match parameter '" + param.name + "' " +
                         shape_str(param.value.rows(), param.value.cols()));
  }
  if (!param.grad.allFinite()) {
    throw NumericError("adam_update: non-finite gradient in parameter '" + param.name + "'");
  }
  if (state.m.size() == 0) {
    state.m = Matrix<Scalar>::Zero(param.value.rows(), param.value.cols());
    state.v = Matrix<Scalar>::Zero(param.value.rows(), param.value.cols());
  }
  const AdamConfig& c = state.config;
  state.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar step_size = static_cast<Scalar>(c.lr / bc1);
  const Scalar inv_sqrt_bc2 = static_cast<Scalar>(1.0 / std::sqrt(bc2));
  const Scalar eps = static_cast<Scalar>(c.eps);

  Scalar* w = param.value.data();
  const Scalar* g = param.grad.data();
  Scalar* m = state.m.data();
  Scalar* v = state.v.data();
  const Index n = param.value.size();
  for (Index i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (Scalar(1) - b1) * g[i];
    v[i] = b2 * v[i] + (Scalar(1) - b2) * g[i] * g[i];
    w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
  }
}

template <typename Scalar>
void Adam<Scalar>::step(std::span<GradSlot<Scalar>* const> params) {
  if (states_.size() != params.size()) {
    states_.assign(params.size(), AdamState<Scalar>{});
    for (auto& s : states_) s.config = config_;
  }
  // Validate everything first so a bad gradient leaves all parameters intact.
  for (const auto* p : params) {
    if (!p->grad.allFinite()) {
      throw NumericError("adam: non-finite gradient in parameter '" + p->name + "'");
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) adam_update(*params[i], states_[i]);
}

GradCheckReport finite_diff_check(const std::function<double()>& loss,
                                  std::span<GradSlot<double>* const> params, double h) {
  GradCheckReport report;
  for (auto* p : params) {
    for (Index i = 0; i < p->value.size(); ++i) {
      double& w = p->value.data()[i];
      const double saved = w;
      w = saved + h;
      const double up = loss();
      w = saved - h;
      const double down = loss();
      w = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_diff_check: non-finite loss when perturbing '" + p->name + "'[" +
                           std::to_string(i) + "]");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad.data()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++report.coordinates;
      if (err > report.max_rel_error || report.worst_index < 0) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

template void adam_update<float>(GradSlot<float>&, AdamState<float>&);
template void adam_update<double>(GradSlot<double>&, AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace karsein
