#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "modkit/encoder.hpp"
#include "modkit/gradients.hpp"

namespace modkit {

/// Central finite differences of `loss` with respect to every weight entry of `params`.
inline Gradients finite_difference_gradients(const std::function<double(const ModelParams&)>& loss,
                                             const ModelParams& params, double h = 1e-4) {
  ModelParams probe = params;
  Gradients out;
  std::vector<DenseMatrix*> targets{&out.w0, &out.w_mu};
  if (params.has_sigma()) targets.push_back(&out.w_sigma);
  const auto slots = probe.slots();
  for (std::size_t s = 0; s < slots.size(); ++s) {
    DenseMatrix& w = *slots[s];
    DenseMatrix& g = *targets[s];
    g.resize(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w.data()[i];
      w.data()[i] = keep + h;
      const double up = loss(probe);
      w.data()[i] = keep - h;
      const double down = loss(probe);
      w.data()[i] = keep;
      g.data()[i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

/// |a - f| / max(|a|, |f|, floor), maximised over every entry.
inline double max_relative_error(const Gradients& analytic, const Gradients& numeric, double floor = 1e-5) {
  double worst = 0.0;
  const auto a = analytic.slots();
  const auto f = numeric.slots();
  if (a.size() != f.size()) throw ShapeError("max_relative_error: gradient sets differ");
  for (std::size_t s = 0; s < a.size(); ++s) {
    if (a[s]->rows() != f[s]->rows() || a[s]->cols() != f[s]->cols())
      throw ShapeError("max_relative_error: gradient shapes differ");
    for (Eigen::Index i = 0; i < a[s]->size(); ++i) {
      const double x = a[s]->data()[i];
      const double y = f[s]->data()[i];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
    }
  }
  return worst;
}

/// Analytic vs numeric gradients of the full-batch loss with epsilon held fixed.
inline double gradient_check(const ModularityContext& ctx, const ModelParams& params, const DenseMatrix& epsilon,
                             Objective objective, LossWeights weights, double h = 1e-4) {
  const ForwardCache cache = forward(ctx, params, epsilon);
  const Gradients analytic = loss_gradients(ctx, params, cache, objective, weights);
  auto loss = [&](const ModelParams& p) {
    return evaluate_loss(ctx, p, forward(ctx, p, epsilon), objective, weights).total;
  };
  return max_relative_error(analytic, finite_difference_gradients(loss, params, h));
}

}  // namespace modkit
