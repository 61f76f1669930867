#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "modkit/encoder.hpp"
#include "modkit/error.hpp"
#include "modkit/numerics.hpp"

namespace modkit {

/// Reconstruction objective.
///   cross_entropy: re-weighted cross entropy against logistic(b_ij) (the VGAER decoder)
///   dot:           binary cross entropy against t_ij = [b_ij > 0] (the VGAE-style ablation)
///   fnorm:         squared Frobenius distance between Z Z^T and B (the GAER loss)
enum class Objective { cross_entropy, dot, fnorm };

inline std::string to_string(Objective o) {
  switch (o) {
    case Objective::cross_entropy: return "ce";
    case Objective::dot: return "dot";
    case Objective::fnorm: return "fnorm";
  }
  return "?";
}

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;             // already multiplied by kl_weight; 0 for gaer
  double kl_unweighted = 0.0;  // raw KL divergence
  double total = 0.0;
  std::int64_t entries_evaluated = 0;
};

/// logistic(Z Z^T).
inline DenseMatrix decode_scores(const DenseMatrix& z) {
  const DenseMatrix s = z * z.transpose();
  return s.unaryExpr([](double x) { return logistic(x); });
}

namespace detail {
inline void require_recon_shapes(const DenseMatrix& b, const DenseMatrix& s) {
  if (b.rows() != s.rows() || b.cols() != s.cols())
    throw ShapeError("reconstruction target and score matrix differ in shape");
}
}  // namespace detail

/// Per-entry target of each objective: logistic(b) for cross entropy, [b > 0] for the dot
/// decoder, b itself for the F-norm loss.
inline DenseMatrix reconstruction_target(Objective o, const DenseMatrix& b) {
  switch (o) {
    case Objective::cross_entropy:
      return b.unaryExpr([](double x) { return logistic(x); });
    case Objective::dot:
      return b.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
    case Objective::fnorm:
      break;
  }
  return b;
}

/// Sum of the per-entry losses for scores S against a precomputed target; writes
/// d loss / d s_ij into `grad` when it is non-null.
/// Cross entropy: -t log sig(s) - (1 - t) log sig(-s) = softplus(s) - t s.
inline double target_loss(Objective o, const DenseMatrix& t, const DenseMatrix& s, DenseMatrix* grad = nullptr) {
  detail::require_recon_shapes(t, s);
  if (grad) grad->resize(s.rows(), s.cols());
  double sum = 0.0;
  const Eigen::Index size = s.size();
  const double* tp = t.data();
  const double* sp = s.data();
  double* gp = grad ? grad->data() : nullptr;
  if (o == Objective::fnorm) {
    for (Eigen::Index i = 0; i < size; ++i) {
      const double r = sp[i] - tp[i];
      sum += r * r;
      if (gp) gp[i] = 2.0 * r;
    }
    return sum;
  }
  for (Eigen::Index i = 0; i < size; ++i) {
    const double x = sp[i];
    const double e = std::exp(-std::abs(x));
    sum += std::max(x, 0.0) + std::log1p(e) - tp[i] * x;
    if (gp) gp[i] = (x >= 0.0 ? 1.0 : e) / (1.0 + e) - tp[i];
  }
  return sum;
}

/// Sum over every entry of the reconstruction loss for scores S (S = Z Z^T or a block of it).
inline double reconstruction_loss(Objective o, const DenseMatrix& b, const DenseMatrix& s) {
  detail::require_recon_shapes(b, s);
  return target_loss(o, reconstruction_target(o, b), s);
}

/// Elementwise d loss / d s_ij for the same sum.
inline DenseMatrix reconstruction_grad(Objective o, const DenseMatrix& b, const DenseMatrix& s) {
  detail::require_recon_shapes(b, s);
  DenseMatrix g;
  target_loss(o, reconstruction_target(o, b), s, &g);
  return g;
}

/// sum_ij logistic(b_ij) log logistic(z_i.z_j) + (1 - logistic(b_ij)) log(1 - logistic(z_i.z_j)). Always <= 0.
inline double recon_log_likelihood(const DenseMatrix& b, const DenseMatrix& z) {
  if (b.rows() != z.rows() || b.rows() != b.cols()) throw ShapeError("recon_log_likelihood: B is n x n, Z is n x d");
  return -reconstruction_loss(Objective::cross_entropy, b, z * z.transpose());
}

/// KL(N(mu, sigma^2) || N(0, I)) summed over nodes and dimensions.
inline double kl_term(const DenseMatrix& mu, const DenseMatrix& log_sigma) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols())
    throw ShapeError("kl_term: mu and log_sigma must share a shape");
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i];
    const double ls = log_sigma.data()[i];
    sum += 0.5 * (m * m + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
  }
  return sum;
}

/// sum_ij ((Z Z^T)_ij - b_ij)^2; no logistic squashing.
inline double fnorm_loss(const DenseMatrix& b, const DenseMatrix& z) {
  if (b.rows() != z.rows()) throw ShapeError("fnorm_loss: B is n x n, Z is n x d");
  return reconstruction_loss(Objective::fnorm, b, z * z.transpose());
}

/// Binary cross entropy against t_ij = [b_ij > 0].
inline double dot_decoder_loss(const DenseMatrix& b, const DenseMatrix& z) {
  if (b.rows() != z.rows()) throw ShapeError("dot_decoder_loss: B is n x n, Z is n x d");
  return reconstruction_loss(Objective::dot, b, z * z.transpose());
}

/// -ELBO = reconstruction loss + kl_weight * KL, with Z taken from `latent`.
inline LossBreakdown negative_elbo(const DenseMatrix& b, const LatentState& latent, double kl_weight,
                                   Objective recon = Objective::cross_entropy) {
  if (latent.mu.size() == 0 || latent.log_sigma.size() == 0) throw Error("negative_elbo needs a vgaer latent state");
  LossBreakdown out;
  out.reconstruction = reconstruction_loss(recon, b, latent.z * latent.z.transpose());
  out.kl_unweighted = kl_term(latent.mu, latent.log_sigma);
  out.kl = kl_weight * out.kl_unweighted;
  out.total = out.reconstruction + out.kl;
  out.entries_evaluated = b.size();
  return out;
}

}  // namespace modkit
