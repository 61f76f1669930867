#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "modkit/error.hpp"
#include "modkit/graph.hpp"
#include "modkit/numerics.hpp"

namespace modkit {

using RowVector = Eigen::RowVectorXd;

enum class ModelKind { vgaer, gaer };

/// gcn: two propagation layers through A~. two_stage: sampled neighbourhood
/// sharing + membership encoding, whose weights act on concatenated [own | shared] rows.
enum class Architecture { gcn, two_stage };

inline std::string to_string(ModelKind k) { return k == ModelKind::vgaer ? "vgaer" : "gaer"; }
inline std::string to_string(Architecture a) { return a == Architecture::gcn ? "gcn" : "two_stage"; }

/// log sigma is clamped to this bound before exponentiation.
inline constexpr double kLogSigmaBound = 10.0;

/// Encoder weights. W0 is shared by both heads; gaer keeps only W0 and w_mu (reported as W1).
struct ModelParams {
  ModelKind kind = ModelKind::vgaer;
  Architecture architecture = Architecture::gcn;
  DenseMatrix w0;
  DenseMatrix w_mu;
  DenseMatrix w_sigma;  // 0x0 in gaer mode

  bool has_sigma() const noexcept { return kind == ModelKind::vgaer; }
  Eigen::Index d_hidden() const noexcept { return w0.cols(); }
  Eigen::Index d_latent() const noexcept { return w_mu.cols(); }
  /// Width of one input row (B0 column count), independent of the architecture.
  Eigen::Index d_in() const noexcept {
    return architecture == Architecture::gcn ? w0.rows() : w0.rows() / 2;
  }

  static ModelParams init(ModelKind kind, Eigen::Index d_in, Eigen::Index d_hidden, Eigen::Index d_latent,
                          Rng& rng, Architecture arch = Architecture::gcn) {
    if (d_in < 1 || d_hidden < 1 || d_latent < 1) throw ShapeError("model dimensions must be >= 1");
    const Eigen::Index widen = arch == Architecture::gcn ? 1 : 2;
    ModelParams p;
    p.kind = kind;
    p.architecture = arch;
    p.w0 = glorot_init(widen * d_in, d_hidden, rng);
    p.w_mu = glorot_init(widen * d_hidden, d_latent, rng);
    if (kind == ModelKind::vgaer) p.w_sigma = glorot_init(widen * d_hidden, d_latent, rng);
    return p;
  }

  static ModelParams zeros(ModelKind kind, Eigen::Index d_in, Eigen::Index d_hidden, Eigen::Index d_latent,
                           Architecture arch = Architecture::gcn) {
    const Eigen::Index widen = arch == Architecture::gcn ? 1 : 2;
    ModelParams p;
    p.kind = kind;
    p.architecture = arch;
    p.w0 = DenseMatrix::Zero(widen * d_in, d_hidden);
    p.w_mu = DenseMatrix::Zero(widen * d_hidden, d_latent);
    if (kind == ModelKind::vgaer) p.w_sigma = DenseMatrix::Zero(widen * d_hidden, d_latent);
    return p;
  }

  /// Weight matrices in optimizer slot order: W0, W_mu, then W_sigma when present.
  std::vector<DenseMatrix*> slots() {
    std::vector<DenseMatrix*> s{&w0, &w_mu};
    if (has_sigma()) s.push_back(&w_sigma);
    return s;
  }
  std::vector<DenseMatrix> shapes() const {
    std::vector<DenseMatrix> s{w0, w_mu};
    if (has_sigma()) s.push_back(w_sigma);
    return s;
  }

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.kind == b.kind && a.architecture == b.architecture && a.w0 == b.w0 && a.w_mu == b.w_mu &&
           a.w_sigma.rows() == b.w_sigma.rows() && a.w_sigma.cols() == b.w_sigma.cols() &&
           (a.w_sigma.size() == 0 || a.w_sigma == b.w_sigma);
  }
};

/// Per-node latent codes. gaer fills only `z`.
struct LatentState {
  DenseMatrix mu;
  DenseMatrix log_sigma;
  DenseMatrix z;
  std::uint64_t epsilon_seed = 0;
};

namespace detail {
inline void require_product(const DenseMatrix& a, const DenseMatrix& b, const char* what) {
  if (a.cols() != b.rows())
    throw ShapeError(std::string(what) + ": cannot multiply [" + std::to_string(a.rows()) + " x " +
                     std::to_string(a.cols()) + "] by [" + std::to_string(b.rows()) + " x " +
                     std::to_string(b.cols()) + "]");
}
}  // namespace detail

/// H = tanh(A~ B0 W0), evaluated as A~ (B0 W0).
inline DenseMatrix gcn_hidden(const DenseMatrix& a_tilde, const DenseMatrix& b0, const DenseMatrix& w0) {
  detail::require_product(a_tilde, b0, "gcn_hidden");
  detail::require_product(b0, w0, "gcn_hidden");
  DenseMatrix h = a_tilde * (b0 * w0);
  return h.array().tanh().matrix();
}

struct VariationalHeads {
  DenseMatrix mu;
  DenseMatrix log_sigma;  // clamped to [-kLogSigmaBound, kLogSigmaBound]
};

/// mu = A~ H W_mu, log sigma = clamp(A~ H W_sigma). No activation on the second layer.
inline VariationalHeads encode_vgaer(const DenseMatrix& a_tilde, const DenseMatrix& h, const ModelParams& params) {
  if (!params.has_sigma()) throw Error("encode_vgaer needs a vgaer model");
  detail::require_product(a_tilde, h, "encode_vgaer");
  detail::require_product(h, params.w_mu, "encode_vgaer");
  const DenseMatrix t = a_tilde * h;
  VariationalHeads out;
  out.mu = t * params.w_mu;
  out.log_sigma = (t * params.w_sigma).cwiseMax(-kLogSigmaBound).cwiseMin(kLogSigmaBound);
  return out;
}

/// Z = mu + exp(log sigma) * epsilon, elementwise.
inline DenseMatrix reparameterize(const DenseMatrix& mu, const DenseMatrix& log_sigma, const DenseMatrix& epsilon) {
  if (mu.rows() != log_sigma.rows() || mu.cols() != log_sigma.cols() || mu.rows() != epsilon.rows() ||
      mu.cols() != epsilon.cols())
    throw ShapeError("reparameterize: mu, log_sigma and epsilon must share a shape");
  return (mu.array() + log_sigma.array().exp() * epsilon.array()).matrix();
}

inline DenseMatrix reparameterize(const DenseMatrix& mu, const DenseMatrix& log_sigma, Rng& rng) {
  return reparameterize(mu, log_sigma, gaussian_sample(mu.rows(), mu.cols(), rng));
}

/// Deterministic GAER encoder: Z = A~ tanh(A~ B0 W0) W1.
inline DenseMatrix encode_gaer(const DenseMatrix& a_tilde, const DenseMatrix& b0, const ModelParams& params) {
  const DenseMatrix h = gcn_hidden(a_tilde, b0, params.w0);
  detail::require_product(h, params.w_mu, "encode_gaer");
  return a_tilde * (h * params.w_mu);
}

// ---------------------------------------------------------------------------
// Sampled two-stage encoder

/// MEAN neighbourhood sharing; an empty neighbourhood yields the zero vector of width `dim`.
inline RowVector neighborhood_share(std::span<const RowVector> stats, Eigen::Index dim) {
  RowVector out = RowVector::Zero(dim);
  if (stats.empty()) return out;
  for (const auto& s : stats) {
    if (s.size() != dim) throw ShapeError("neighborhood_share: ragged neighbour statistics");
    out += s;
  }
  return out / static_cast<double>(stats.size());
}

/// Layer 1: logistic([own | shared] W). Layer 2: [own | shared] W.
inline RowVector membership_encode(const RowVector& own, const RowVector& shared, const DenseMatrix& w, int layer) {
  if (layer != 1 && layer != 2) throw Error("membership_encode: layer must be 1 or 2");
  if (own.size() + shared.size() != w.rows())
    throw ShapeError("membership_encode: concat width " + std::to_string(own.size() + shared.size()) +
                     " does not match weight rows " + std::to_string(w.rows()));
  RowVector cat(own.size() + shared.size());
  cat << own, shared;
  RowVector out = cat * w;
  if (layer == 1) out = out.unaryExpr([](double x) { return logistic(x); });
  return out;
}

/// Samples min(k, deg(v)) distinct neighbours of v (sorted). Draws nothing when k >= deg(v).
inline std::vector<int> sample_neighbors(const Graph& g, int v, std::size_t k, Rng& rng) {
  const auto& nb = g.neighbors(v);
  if (k >= nb.size()) return nb;
  std::vector<int> pool = nb;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

/// Neighbour sample of node v at `layer`; the stream depends only on (seed, layer, v).
inline std::vector<int> layer_sample(const Graph& g, int v, int layer, std::size_t k, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(v)));
  return sample_neighbors(g, v, k, rng);
}

namespace detail {
inline RowVector mean_of_rows(const DenseMatrix& m, const std::vector<int>& rows) {
  RowVector out = RowVector::Zero(m.cols());
  if (rows.empty()) return out;
  for (int r : rows) out += m.row(r);
  return out / static_cast<double>(rows.size());
}
}  // namespace detail

/// Two-stage encoding of every node. `stats` holds one row per node (the B0 row by default).
/// Neighbour samples are drawn per (seed, layer, node); epsilon is drawn from (seed, 3).
inline LatentState two_stage_encode(const Graph& g, const DenseMatrix& stats, const ModelParams& params,
                                    std::size_t k, std::uint64_t seed) {
  if (k < 1) throw Error("two_stage_encode: k must be >= 1");
  if (params.architecture != Architecture::two_stage) throw Error("two_stage_encode needs two_stage params");
  if (static_cast<std::size_t>(stats.rows()) != g.n()) throw ShapeError("two_stage_encode: one stat row per node");
  const auto n = static_cast<Eigen::Index>(g.n());

  DenseMatrix p1(n, params.d_hidden());
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto s = layer_sample(g, static_cast<int>(v), 1, k, seed);
    p1.row(v) = membership_encode(stats.row(v), detail::mean_of_rows(stats, s), params.w0, 1);
  }

  LatentState out;
  out.mu.resize(n, params.d_latent());
  if (params.has_sigma()) out.log_sigma.resize(n, params.d_latent());
  for (Eigen::Index v = 0; v < n; ++v) {
    const auto s = layer_sample(g, static_cast<int>(v), 2, k, seed);
    const RowVector shared = detail::mean_of_rows(p1, s);
    out.mu.row(v) = membership_encode(p1.row(v), shared, params.w_mu, 2);
    if (params.has_sigma())
      out.log_sigma.row(v) = membership_encode(p1.row(v), shared, params.w_sigma, 2)
                                 .cwiseMax(-kLogSigmaBound)
                                 .cwiseMin(kLogSigmaBound);
  }
  out.epsilon_seed = derive_seed(seed, 3);
  if (params.has_sigma()) {
    Rng eps(out.epsilon_seed);
    out.z = reparameterize(out.mu, out.log_sigma, eps);
  } else {
    out.z = out.mu;
  }
  return out;
}

}  // namespace modkit
