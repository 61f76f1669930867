#pragma once

#include <vector>

#include "modkit/encoder.hpp"
#include "modkit/graph.hpp"
#include "modkit/objectives.hpp"

namespace modkit {

/// Scalar loss = reconstruction * recon_loss(S) + kl * KL(mu, sigma). `kl` is ignored for gaer.
struct LossWeights {
  double reconstruction = 1.0;
  double kl = 0.0;
};

/// Intermediates of one full-batch GCN forward pass, kept for the backward pass.
struct ForwardCache {
  DenseMatrix h;              // tanh(A~ B0 W0)
  DenseMatrix t;              // A~ H
  DenseMatrix mu;             // vgaer: T W_mu; gaer: Z
  DenseMatrix log_sigma_raw;  // T W_sigma before clamping (vgaer)
  DenseMatrix log_sigma;      // clamped (vgaer)
  DenseMatrix epsilon;        // vgaer
  DenseMatrix z;
};

/// Runs the encoder. For vgaer `epsilon` must be [n x d_latent]; it is ignored for gaer.
inline ForwardCache forward(const ModularityContext& ctx, const ModelParams& params, const DenseMatrix& epsilon = {}) {
  if (params.architecture != Architecture::gcn) throw Error("forward: expected gcn params");
  ForwardCache c;
  c.h = gcn_hidden(ctx.a_tilde, ctx.b0, params.w0);
  c.t = ctx.a_tilde * c.h;
  c.mu = c.t * params.w_mu;
  if (params.has_sigma()) {
    if (epsilon.rows() != c.mu.rows() || epsilon.cols() != c.mu.cols())
      throw ShapeError("forward: epsilon must be [n x d_latent]");
    c.log_sigma_raw = c.t * params.w_sigma;
    c.log_sigma = c.log_sigma_raw.cwiseMax(-kLogSigmaBound).cwiseMin(kLogSigmaBound);
    c.epsilon = epsilon;
    c.z = reparameterize(c.mu, c.log_sigma, c.epsilon);
  } else {
    c.z = c.mu;
  }
  return c;
}

/// Loss of a forward pass against a precomputed reconstruction_target(objective, ctx.b).
inline LossBreakdown evaluate_loss(const ModularityContext& ctx, const ModelParams& params, const ForwardCache& c,
                                   Objective objective, LossWeights weights, const DenseMatrix& target) {
  LossBreakdown out;
  out.reconstruction = weights.reconstruction * target_loss(objective, target, c.z * c.z.transpose());
  if (params.has_sigma()) {
    out.kl_unweighted = kl_term(c.mu, c.log_sigma);
    out.kl = weights.kl * out.kl_unweighted;
  }
  out.total = out.reconstruction + out.kl;
  out.entries_evaluated = ctx.b.size();
  return out;
}

inline LossBreakdown evaluate_loss(const ModularityContext& ctx, const ModelParams& params, const ForwardCache& c,
                                   Objective objective, LossWeights weights) {
  return evaluate_loss(ctx, params, c, objective, weights, reconstruction_target(objective, ctx.b));
}

struct Gradients {
  DenseMatrix w0;
  DenseMatrix w_mu;
  DenseMatrix w_sigma;  // empty for gaer

  std::vector<const DenseMatrix*> slots() const {
    std::vector<const DenseMatrix*> s{&w0, &w_mu};
    if (w_sigma.size() > 0) s.push_back(&w_sigma);
    return s;
  }
};

namespace detail {

/// d loss / d (mu, log_sigma_raw) given d loss / d Z, for the reparameterised Gaussian head.
/// Writes d mu into `d_mu` and d log_sigma_raw into `d_ls`.
inline void backprop_gaussian_head(const DenseMatrix& d_z, const DenseMatrix& mu, const DenseMatrix& log_sigma_raw,
                                   const DenseMatrix& log_sigma, const DenseMatrix& epsilon, double kl_weight,
                                   DenseMatrix& d_mu, DenseMatrix& d_ls) {
  d_mu = d_z + kl_weight * mu;
  d_ls.resize(d_z.rows(), d_z.cols());
  for (Eigen::Index i = 0; i < d_z.size(); ++i) {
    const double raw = log_sigma_raw.data()[i];
    if (raw <= -kLogSigmaBound || raw >= kLogSigmaBound) {
      d_ls.data()[i] = 0.0;
      continue;
    }
    const double sigma = std::exp(log_sigma.data()[i]);
    d_ls.data()[i] = d_z.data()[i] * epsilon.data()[i] * sigma + kl_weight * (sigma * sigma - 1.0);
  }
}

}  // namespace detail

struct LossAndGradients {
  LossBreakdown loss;
  Gradients grads;
};

/// Loss and its exact reverse-mode gradients with respect to every weight matrix, holding
/// epsilon fixed (pathwise estimator). `c` must come from forward() on the same params and
/// `target` from reconstruction_target(objective, ctx.b).
inline LossAndGradients loss_and_gradients(const ModularityContext& ctx, const ModelParams& params,
                                           const ForwardCache& c, Objective objective, LossWeights weights,
                                           const DenseMatrix& target) {
  LossAndGradients out;
  DenseMatrix d_s;
  out.loss.reconstruction = weights.reconstruction * target_loss(objective, target, c.z * c.z.transpose(), &d_s);
  if (params.has_sigma()) {
    out.loss.kl_unweighted = kl_term(c.mu, c.log_sigma);
    out.loss.kl = weights.kl * out.loss.kl_unweighted;
  }
  out.loss.total = out.loss.reconstruction + out.loss.kl;
  out.loss.entries_evaluated = ctx.b.size();

  d_s *= weights.reconstruction;
  const DenseMatrix d_z = (d_s + d_s.transpose()) * c.z;
  Gradients& g = out.grads;
  DenseMatrix d_t;
  if (params.has_sigma()) {
    DenseMatrix d_mu, d_ls;
    detail::backprop_gaussian_head(d_z, c.mu, c.log_sigma_raw, c.log_sigma, c.epsilon, weights.kl, d_mu, d_ls);
    g.w_mu = c.t.transpose() * d_mu;
    g.w_sigma = c.t.transpose() * d_ls;
    d_t = d_mu * params.w_mu.transpose() + d_ls * params.w_sigma.transpose();
  } else {
    g.w_mu = c.t.transpose() * d_z;
    d_t = d_z * params.w_mu.transpose();
  }
  // A~ is symmetric, so A~^T x = A~ x.
  const DenseMatrix d_h = ctx.a_tilde * d_t;
  const DenseMatrix d_pre = (d_h.array() * (1.0 - c.h.array().square())).matrix();
  g.w0 = ctx.b0.transpose() * (ctx.a_tilde * d_pre);
  return out;
}

/// Gradients only; see loss_and_gradients.
inline Gradients loss_gradients(const ModularityContext& ctx, const ModelParams& params, const ForwardCache& c,
                                Objective objective, LossWeights weights) {
  return loss_and_gradients(ctx, params, c, objective, weights, reconstruction_target(objective, ctx.b)).grads;
}

}  // namespace modkit
