#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>

#include "modkit/encoder.hpp"
#include "modkit/gradients.hpp"
#include "modkit/objectives.hpp"

namespace modkit {

/// Row source for the first sampled layer: either explicit rows, or B0 = [A - k k^T / 2M | X]
/// applied through the sparse adjacency so B is never formed.
class InputOperator {
 public:
  /// Wraps `rows` by reference; it must outlive the operator and any batch built from it.
  static InputOperator dense(const DenseMatrix& rows) {
    InputOperator op;
    op.dense_ = &rows;
    return op;
  }

  static InputOperator modularity(const Graph& g) {
    if (g.edge_count() == 0) throw Error("modularity input needs at least one edge");
    auto im = std::make_shared<Implicit>();
    const auto n = static_cast<Eigen::Index>(g.n());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(2 * g.edge_count());
    for (const auto& e : g.edges()) {
      entries.emplace_back(e.u, e.v, 1.0);
      entries.emplace_back(e.v, e.u, 1.0);
    }
    im->a.resize(n, n);
    im->a.setFromTriplets(entries.begin(), entries.end());
    im->k.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) im->k(i) = static_cast<double>(g.degree(i));
    im->two_m = 2.0 * static_cast<double>(g.edge_count());
    if (g.features()) im->x = *g.features();
    InputOperator op;
    op.implicit_ = std::move(im);
    return op;
  }

  Eigen::Index rows() const { return dense_ ? dense_->rows() : implicit_->a.rows(); }
  Eigen::Index cols() const {
    if (dense_) return dense_->cols();
    return implicit_->a.cols() + (implicit_->x ? implicit_->x->cols() : 0);
  }

  /// B0 W.
  DenseMatrix times(const DenseMatrix& w) const {
    if (w.rows() != cols()) throw ShapeError("InputOperator::times: inner dimensions differ");
    if (dense_) return *dense_ * w;
    const Implicit& im = *implicit_;
    const Eigen::Index n = im.a.cols();
    const auto wb = w.topRows(n);
    DenseMatrix out = im.a * wb;
    out.noalias() -= im.k * ((im.k.transpose() * wb) / im.two_m);
    if (im.x) out.noalias() += *im.x * w.bottomRows(im.x->cols());
    return out;
  }

  /// B0^T Y.
  DenseMatrix transpose_times(const DenseMatrix& y) const {
    if (y.rows() != rows()) throw ShapeError("InputOperator::transpose_times: inner dimensions differ");
    if (dense_) return dense_->transpose() * y;
    const Implicit& im = *implicit_;
    const Eigen::Index n = im.a.cols();
    DenseMatrix out(cols(), y.cols());
    // A and k k^T are symmetric.
    out.topRows(n) = im.a * y;
    out.topRows(n).noalias() -= im.k * ((im.k.transpose() * y) / im.two_m);
    if (im.x) out.bottomRows(im.x->cols()).noalias() = im.x->transpose() * y;
    return out;
  }

 private:
  struct Implicit {
    Eigen::SparseMatrix<double, Eigen::RowMajor> a;
    Eigen::VectorXd k;
    double two_m = 0.0;
    std::optional<DenseMatrix> x;
  };
  const DenseMatrix* dense_ = nullptr;
  std::shared_ptr<const Implicit> implicit_;
};

/// One mini-batch through the sampled two-stage encoder: the batch nodes plus the
/// layer-2 neighbour samples they read from (the sampled frontier).
struct TwoStageBatch {
  InputOperator stats;
  std::vector<int> batch;                 // global ids, in batch order
  std::vector<int> frontier;              // global ids; batch nodes first
  std::vector<std::vector<int>> layer1;   // per frontier node: global ids of its layer-1 sample
  std::vector<std::vector<int>> layer2;   // per batch node: frontier-local ids of its layer-2 sample
  DenseMatrix p1;                         // logistic([own stat | mean of layer-1 sample] W0)
  DenseMatrix concat;                     // [|batch| x 2 d_hidden]: [P1_v | mean P1 over layer-2 sample]
  DenseMatrix mu;
  DenseMatrix log_sigma_raw;
  DenseMatrix log_sigma;
  DenseMatrix epsilon;
  DenseMatrix z;
};

/// Forward pass for `batch`. Samples depend on (sample_seed, layer, node), so they agree with
/// two_stage_encode(g, stats, params, k, sample_seed). `epsilon` holds one row per graph node.
inline TwoStageBatch two_stage_forward(const Graph& g, const InputOperator& stats, const ModelParams& params,
                                       std::span<const int> batch, std::size_t k, std::uint64_t sample_seed,
                                       const DenseMatrix& epsilon) {
  if (params.architecture != Architecture::two_stage) throw Error("two_stage_forward needs two_stage params");
  if (static_cast<std::size_t>(stats.rows()) != g.n()) throw ShapeError("two_stage_forward: one stat row per node");
  TwoStageBatch out;
  out.stats = stats;
  out.batch.assign(batch.begin(), batch.end());
  std::unordered_map<int, int> local;
  auto add = [&](int v) {
    auto [it, inserted] = local.emplace(v, static_cast<int>(out.frontier.size()));
    if (inserted) out.frontier.push_back(v);
    return it->second;
  };
  for (int v : batch) add(v);
  out.layer2.resize(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    for (int u : layer_sample(g, batch[b], 2, k, sample_seed)) out.layer2[b].push_back(add(u));

  // [own | mean] W0 = own W0_top + mean(rows) W0_bottom, with both products taken over all nodes at once.
  const Eigen::Index d_in = stats.cols();
  const DenseMatrix g_own = stats.times(params.w0.topRows(d_in));
  const DenseMatrix g_mean = stats.times(params.w0.bottomRows(d_in));
  const auto f = static_cast<Eigen::Index>(out.frontier.size());
  DenseMatrix pre(f, params.d_hidden());
  out.layer1.resize(out.frontier.size());
  for (Eigen::Index r = 0; r < f; ++r) {
    const int u = out.frontier[r];
    out.layer1[r] = layer_sample(g, u, 1, k, sample_seed);
    pre.row(r) = g_own.row(u) + detail::mean_of_rows(g_mean, out.layer1[r]);
  }
  out.p1 = pre.unaryExpr([](double x) { return logistic(x); });

  const auto p = static_cast<Eigen::Index>(batch.size());
  const Eigen::Index h = params.d_hidden();
  out.concat.resize(p, 2 * h);
  for (Eigen::Index b = 0; b < p; ++b) {
    out.concat.row(b).head(h) = out.p1.row(b);
    RowVector shared = RowVector::Zero(h);
    for (int r : out.layer2[b]) shared += out.p1.row(r);
    if (!out.layer2[b].empty()) shared /= static_cast<double>(out.layer2[b].size());
    out.concat.row(b).tail(h) = shared;
  }
  out.mu = out.concat * params.w_mu;
  if (params.has_sigma()) {
    out.log_sigma_raw = out.concat * params.w_sigma;
    out.log_sigma = out.log_sigma_raw.cwiseMax(-kLogSigmaBound).cwiseMin(kLogSigmaBound);
    out.epsilon.resize(p, params.d_latent());
    for (Eigen::Index b = 0; b < p; ++b) out.epsilon.row(b) = epsilon.row(batch[b]);
    out.z = reparameterize(out.mu, out.log_sigma, out.epsilon);
  } else {
    out.z = out.mu;
  }
  return out;
}

/// Dense-row overload; `stats` must outlive the returned batch.
inline TwoStageBatch two_stage_forward(const Graph& g, const DenseMatrix& stats, const ModelParams& params,
                                       std::span<const int> batch, std::size_t k, std::uint64_t sample_seed,
                                       const DenseMatrix& epsilon) {
  return two_stage_forward(g, InputOperator::dense(stats), params, batch, k, sample_seed, epsilon);
}

/// Scores of the batch rows against all nodes: `z_all` with the batch rows replaced by the
/// fresh batch codes, then S = Z_batch Z_all^T.
inline DenseMatrix batch_codes(const DenseMatrix& z_all, const TwoStageBatch& fwd) {
  DenseMatrix z = z_all;
  for (std::size_t b = 0; b < fwd.batch.size(); ++b) z.row(fwd.batch[b]) = fwd.z.row(b);
  return z;
}

struct BatchLoss {
  LossBreakdown loss;
  Gradients grads;
};

/// Loss over the batch's p x n reconstruction rows plus the batch nodes' KL terms, and its
/// exact gradient. `target` is reconstruction_target(objective, B) for the whole graph.
/// Codes of non-batch nodes come from `z_all` and are held fixed.
inline BatchLoss two_stage_loss_and_gradients(const DenseMatrix& target, const ModelParams& params,
                                              const TwoStageBatch& fwd, const DenseMatrix& z_all,
                                              Objective objective, LossWeights weights) {
  const auto p = static_cast<Eigen::Index>(fwd.batch.size());
  const DenseMatrix z = batch_codes(z_all, fwd);
  DenseMatrix t_rows(p, target.cols());
  for (Eigen::Index r = 0; r < p; ++r) t_rows.row(r) = target.row(fwd.batch[r]);
  const DenseMatrix s = fwd.z * z.transpose();

  BatchLoss out;
  DenseMatrix d_s;
  out.loss.reconstruction = weights.reconstruction * target_loss(objective, t_rows, s, &d_s);
  if (params.has_sigma()) {
    out.loss.kl_unweighted = kl_term(fwd.mu, fwd.log_sigma);
    out.loss.kl = weights.kl * out.loss.kl_unweighted;
  }
  out.loss.total = out.loss.reconstruction + out.loss.kl;
  out.loss.entries_evaluated = s.size();

  // Entry (v, j) depends on z_v and z_j; z_j is live only when j is itself in the batch.
  d_s *= weights.reconstruction;
  DenseMatrix d_z = d_s * z;
  for (Eigen::Index a = 0; a < p; ++a)
    for (Eigen::Index c = 0; c < p; ++c) d_z.row(a) += d_s(c, fwd.batch[a]) * fwd.z.row(c);

  Gradients& g = out.grads;
  DenseMatrix d_concat;
  if (params.has_sigma()) {
    DenseMatrix d_mu, d_ls;
    detail::backprop_gaussian_head(d_z, fwd.mu, fwd.log_sigma_raw, fwd.log_sigma, fwd.epsilon, weights.kl, d_mu,
                                   d_ls);
    g.w_mu = fwd.concat.transpose() * d_mu;
    g.w_sigma = fwd.concat.transpose() * d_ls;
    d_concat = d_mu * params.w_mu.transpose() + d_ls * params.w_sigma.transpose();
  } else {
    g.w_mu = fwd.concat.transpose() * d_z;
    d_concat = d_z * params.w_mu.transpose();
  }

  const Eigen::Index h = params.d_hidden();
  DenseMatrix d_p1 = DenseMatrix::Zero(fwd.p1.rows(), h);
  for (Eigen::Index b = 0; b < p; ++b) {
    d_p1.row(b) += d_concat.row(b).head(h);
    if (fwd.layer2[b].empty()) continue;
    const double share = 1.0 / static_cast<double>(fwd.layer2[b].size());
    for (int r : fwd.layer2[b]) d_p1.row(r) += share * d_concat.row(b).tail(h);
  }
  const DenseMatrix d_pre = (d_p1.array() * fwd.p1.array() * (1.0 - fwd.p1.array())).matrix();
  // Scatter d_pre back onto the nodes whose stat rows fed each frontier row, then apply B0^T.
  const Eigen::Index n = fwd.stats.rows();
  DenseMatrix y_own = DenseMatrix::Zero(n, h), y_mean = DenseMatrix::Zero(n, h);
  for (std::size_t r = 0; r < fwd.frontier.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    y_own.row(fwd.frontier[r]) += d_pre.row(row);
    if (fwd.layer1[r].empty()) continue;
    const double share = 1.0 / static_cast<double>(fwd.layer1[r].size());
    for (int u : fwd.layer1[r]) y_mean.row(u) += share * d_pre.row(row);
  }
  const Eigen::Index d_in = fwd.stats.cols();
  g.w0.resize(2 * d_in, h);
  g.w0.topRows(d_in) = fwd.stats.transpose_times(y_own);
  g.w0.bottomRows(d_in) = fwd.stats.transpose_times(y_mean);
  return out;
}

}  // namespace modkit
