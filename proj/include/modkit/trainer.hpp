#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "modkit/clustering.hpp"
#include "modkit/encoder.hpp"
#include "modkit/gradients.hpp"
#include "modkit/graph.hpp"
#include "modkit/metrics.hpp"
#include "modkit/objectives.hpp"
#include "modkit/optimizer.hpp"
#include "modkit/two_stage.hpp"

namespace modkit {

enum class AssignmentMethod { kmeans, argmax };

inline std::string to_string(AssignmentMethod a) { return a == AssignmentMethod::kmeans ? "kmeans" : "argmax"; }

/// Neighbour-sampled mini-batch training: k neighbours per node and layer, batches of p nodes.
struct SampledMode {
  std::size_t k = 10;
  std::size_t batch_size = 256;
};

struct TrainConfig {
  ModelKind model = ModelKind::vgaer;
  /// Defaults to cross entropy for vgaer and the F-norm loss for gaer.
  std::optional<Objective> decoder;
  int d_hidden = 32;
  int d_latent = 16;
  int epochs = 200;
  double lr = 0.01;
  /// Defaults to 1/n.
  std::optional<double> kl_weight;
  std::uint64_t seed = 0;
  int clusters = 2;
  AssignmentMethod assignment = AssignmentMethod::kmeans;
  KMeansOptions kmeans;
  std::optional<SampledMode> sampled;
  int eval_every = 1;
  /// Cluster a sampled Z instead of mu when evaluating vgaer.
  bool evaluate_sampled_z = false;
  NmiNormalization nmi_normalization = NmiNormalization::geometric;

  Objective objective() const {
    if (decoder) return *decoder;
    return model == ModelKind::vgaer ? Objective::cross_entropy : Objective::fnorm;
  }
  double kl_weight_for(std::size_t n) const { return kl_weight ? *kl_weight : 1.0 / static_cast<double>(n); }

  void validate() const {
    if (epochs < 1) throw Error("config: epochs must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("config: lr must be finite and >= 0");
    if (clusters < 1) throw Error("config: clusters must be >= 1");
    if (d_hidden < 1 || d_latent < 1) throw Error("config: hidden and latent sizes must be >= 1");
    if (eval_every < 1) throw Error("config: eval_every must be >= 1");
    if (kl_weight && (!(*kl_weight >= 0.0) || !std::isfinite(*kl_weight)))
      throw Error("config: kl_weight must be finite and >= 0");
    if (sampled && (sampled->k < 1 || sampled->batch_size < 1))
      throw Error("config: sampled mode needs k >= 1 and batch size >= 1");
  }
};

struct EpochRecord {
  int epoch = 0;
  LossBreakdown loss;
  double q = 0.0;
  std::optional<double> nmi;
  int k_used = 0;
};

struct TrainReport {
  std::vector<EpochRecord> records;  // one per evaluation point
  std::vector<double> loss_history;  // total loss of every epoch
  std::vector<double> epoch_seconds;
  std::vector<std::size_t> rows_per_epoch;  // reconstruction rows evaluated in each epoch
  Partition final_partition;
  ScoreReport final_score;
  double wall_seconds = 0.0;
  TrainConfig config;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

/// Thrown when the loss or the parameters stop being finite.
class TrainingAborted : public Error {
 public:
  TrainingAborted(int epoch, LossBreakdown last_finite)
      : Error("training aborted: non-finite loss or parameters at epoch " + std::to_string(epoch)),
        epoch_(epoch),
        last_finite_(last_finite) {}
  int epoch() const noexcept { return epoch_; }
  const LossBreakdown& last_finite() const noexcept { return last_finite_; }

 private:
  int epoch_;
  LossBreakdown last_finite_;
};

namespace detail {

// Stream ids under the run seed.
enum Stream : std::uint64_t { init_stream = 1, epsilon_stream = 2, cluster_stream = 4, eval_z_stream = 5,
                              eval_sample_stream = 6, order_stream = 7, sample_stream = 8 };

inline bool params_finite(const ModelParams& p) {
  return p.w0.allFinite() && p.w_mu.allFinite() && (p.w_sigma.size() == 0 || p.w_sigma.allFinite());
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Deterministic embedding used for clustering: mu for vgaer, Z for gaer.
inline DenseMatrix embed(const Graph& g, const ModularityContext& ctx, const ModelParams& params,
                         const TrainConfig& config) {
  if (params.architecture == Architecture::two_stage) {
    const std::size_t k = config.sampled ? config.sampled->k : g.max_degree();
    LatentState s = two_stage_encode(g, ctx.b0, params, std::max<std::size_t>(k, 1),
                                     derive_seed(config.seed, detail::eval_sample_stream));
    return config.evaluate_sampled_z ? s.z : s.mu;
  }
  const DenseMatrix h = gcn_hidden(ctx.a_tilde, ctx.b0, params.w0);
  if (!params.has_sigma()) return ctx.a_tilde * (h * params.w_mu);
  VariationalHeads heads = encode_vgaer(ctx.a_tilde, h, params);
  if (!config.evaluate_sampled_z) return heads.mu;
  Rng rng(derive_seed(config.seed, detail::eval_z_stream));
  return reparameterize(heads.mu, heads.log_sigma, rng);
}

inline Partition assign_communities(const DenseMatrix& codes, const TrainConfig& config) {
  if (config.assignment == AssignmentMethod::argmax) return argmax_assign(codes);
  const int k = std::min<int>(config.clusters, static_cast<int>(codes.rows()));
  return kmeans(codes, k, derive_seed(config.seed, detail::cluster_stream), config.kmeans);
}

inline ScoreReport score_partition(const Graph& g, const Partition& p, const TrainConfig& config) {
  ScoreReport s;
  s.q = modularity_q(g, p);
  if (g.labels()) s.nmi = nmi(p, Partition::compact(*g.labels()), config.nmi_normalization);
  s.k_used = p.k;
  s.assignment_method = to_string(config.assignment);
  return s;
}

struct Evaluation {
  Partition partition;
  ScoreReport score;
};

/// Encode (deterministic path), cluster and score.
inline Evaluation evaluate(const Graph& g, const ModularityContext& ctx, const ModelParams& params,
                           const TrainConfig& config) {
  Evaluation e;
  e.partition = assign_communities(embed(g, ctx, params, config), config);
  e.score = score_partition(g, e.partition, config);
  return e;
}

inline Evaluation evaluate(const Graph& g, const ModelParams& params, const TrainConfig& config) {
  return evaluate(g, ModularityContext::build(g), params, config);
}

namespace detail {

inline void record_eval(const Graph& g, const ModularityContext& ctx, const ModelParams& params,
                        const TrainConfig& config, int epoch, const LossBreakdown& loss, TrainReport& report) {
  if (epoch % config.eval_every != 0) return;
  const Evaluation e = evaluate(g, ctx, params, config);
  report.records.push_back({epoch, loss, e.score.q, e.score.nmi, e.score.k_used});
}

inline void finish(const Graph& g, const ModularityContext& ctx, const ModelParams& params, TrainReport& report,
                   std::chrono::steady_clock::time_point t0) {
  const Evaluation e = evaluate(g, ctx, params, report.config);
  report.final_partition = e.partition;
  report.final_score = e.score;
  report.wall_seconds = seconds_since(t0);
}

}  // namespace detail

/// Full-batch training. Each epoch draws a fresh epsilon, evaluates the loss, takes one Adam
/// step, and (every eval_every epochs) clusters the codes of the pre-step parameters.
inline TrainResult train(const Graph& g, const ModularityContext& ctx, const TrainConfig& config) {
  config.validate();
  if (config.sampled) throw Error("train: config requests sampled mode; use train_sampled");
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<Eigen::Index>(g.n());
  const Objective objective = config.objective();
  const LossWeights weights{1.0, config.kl_weight_for(g.n())};

  Rng init(derive_seed(config.seed, detail::init_stream));
  TrainResult out;
  out.params = ModelParams::init(config.model, ctx.b0.cols(), config.d_hidden, config.d_latent, init);
  Adam adam(out.params.shapes(), AdamConfig{config.lr});
  TrainReport& report = out.report;
  report.config = config;
  report.seed = config.seed;

  const DenseMatrix target = reconstruction_target(objective, ctx.b);
  LossBreakdown last_finite;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto te = std::chrono::steady_clock::now();
    DenseMatrix epsilon;
    if (out.params.has_sigma()) {
      Rng rng(derive_seed(config.seed, detail::epsilon_stream, static_cast<std::uint64_t>(epoch)));
      epsilon = gaussian_sample(n, config.d_latent, rng);
    }
    const ForwardCache cache = forward(ctx, out.params, epsilon);
    const LossAndGradients step = loss_and_gradients(ctx, out.params, cache, objective, weights, target);
    const LossBreakdown& loss = step.loss;
    if (!std::isfinite(loss.total)) throw TrainingAborted(epoch, last_finite);
    last_finite = loss;
    report.loss_history.push_back(loss.total);
    report.rows_per_epoch.push_back(static_cast<std::size_t>(n));
    detail::record_eval(g, ctx, out.params, config, epoch, loss, report);

    adam.step(out.params.slots(), step.grads.slots());
    if (!detail::params_finite(out.params)) throw TrainingAborted(epoch, last_finite);
    report.epoch_seconds.push_back(detail::seconds_since(te));
  }
  detail::finish(g, ctx, out.params, report, t0);
  return out;
}

inline TrainResult train(const Graph& g, const TrainConfig& config) {
  return train(g, ModularityContext::build(g), config);
}

/// Mini-batch training through the sampled two-stage encoder. Every epoch visits each node in
/// exactly one batch; a batch reconstructs its p x n rows of B against codes of the other
/// nodes cached at the start of the epoch (refreshed as batches are encoded).
inline TrainResult train_sampled(const Graph& g, const ModularityContext& ctx, const TrainConfig& config) {
  config.validate();
  if (!config.sampled) throw Error("train_sampled: config has no sampled mode");
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t k = config.sampled->k;
  const std::size_t p = std::min(config.sampled->batch_size, g.n());
  const auto n = static_cast<Eigen::Index>(g.n());
  const Objective objective = config.objective();
  const LossWeights weights{1.0, config.kl_weight_for(g.n())};

  Rng init(derive_seed(config.seed, detail::init_stream));
  TrainResult out;
  out.params = ModelParams::init(config.model, ctx.b0.cols(), config.d_hidden, config.d_latent, init,
                                 Architecture::two_stage);
  Adam adam(out.params.shapes(), AdamConfig{config.lr});
  TrainReport& report = out.report;
  report.config = config;
  report.seed = config.seed;

  const DenseMatrix target = reconstruction_target(objective, ctx.b);
  const InputOperator stats = InputOperator::modularity(g);
  std::vector<int> order(g.n());
  LossBreakdown last_finite;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto te = std::chrono::steady_clock::now();
    const auto e = static_cast<std::uint64_t>(epoch);
    const std::uint64_t sample_seed = derive_seed(config.seed, detail::sample_stream, e);
    DenseMatrix epsilon = DenseMatrix::Zero(n, config.d_latent);
    if (out.params.has_sigma()) {
      Rng rng(derive_seed(config.seed, detail::epsilon_stream, e));
      epsilon = gaussian_sample(n, config.d_latent, rng);
    }
    // Codes of all nodes under the pre-epoch parameters; batch rows are overwritten as they are encoded.
    std::iota(order.begin(), order.end(), 0);
    DenseMatrix z_all = two_stage_forward(g, stats, out.params, order, k, sample_seed, epsilon).z;

    Rng shuffle(derive_seed(config.seed, detail::order_stream, e));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    LossBreakdown epoch_loss;
    std::size_t rows = 0;
    for (std::size_t start = 0; start < order.size(); start += p) {
      const std::span<const int> batch(order.data() + start, std::min(p, order.size() - start));
      const TwoStageBatch fwd = two_stage_forward(g, stats, out.params, batch, k, sample_seed, epsilon);
      const BatchLoss bl = two_stage_loss_and_gradients(target, out.params, fwd, z_all, objective, weights);
      if (!std::isfinite(bl.loss.total)) throw TrainingAborted(epoch, last_finite);
      epoch_loss.reconstruction += bl.loss.reconstruction;
      epoch_loss.kl += bl.loss.kl;
      epoch_loss.kl_unweighted += bl.loss.kl_unweighted;
      epoch_loss.entries_evaluated += bl.loss.entries_evaluated;
      rows += batch.size();
      for (std::size_t b = 0; b < batch.size(); ++b) z_all.row(batch[b]) = fwd.z.row(b);
      adam.step(out.params.slots(), bl.grads.slots());
      if (!detail::params_finite(out.params)) throw TrainingAborted(epoch, last_finite);
    }
    epoch_loss.total = epoch_loss.reconstruction + epoch_loss.kl;
    last_finite = epoch_loss;
    report.loss_history.push_back(epoch_loss.total);
    report.rows_per_epoch.push_back(rows);
    report.epoch_seconds.push_back(detail::seconds_since(te));
    detail::record_eval(g, ctx, out.params, config, epoch, epoch_loss, report);
  }
  detail::finish(g, ctx, out.params, report, t0);
  return out;
}

inline TrainResult train_sampled(const Graph& g, const TrainConfig& config) {
  return train_sampled(g, ModularityContext::build(g), config);
}

/// Dispatches on config.sampled.
inline TrainResult run_training(const Graph& g, const ModularityContext& ctx, const TrainConfig& config) {
  return config.sampled ? train_sampled(g, ctx, config) : train(g, ctx, config);
}

/// Runs `n_seeds` independent trainings with seeds config.seed + i, concurrently up to
/// thread_budget(). Results are ordered by seed index; the first failure is rethrown.
inline std::vector<TrainResult> train_seeds(const Graph& g, const ModularityContext& ctx, const TrainConfig& config,
                                            int n_seeds) {
  if (n_seeds < 1) throw Error("train_seeds: need at least one seed");
  std::vector<TrainResult> results(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);
  auto run = [&](int i) {
    try {
      TrainConfig c = config;
      c.seed = config.seed + static_cast<std::uint64_t>(i);
      results[i] = run_training(g, ctx, c);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned workers = std::min<unsigned>(thread_budget(), static_cast<unsigned>(n_seeds));
  if (workers <= 1) {
    for (int i = 0; i < n_seeds; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int i = static_cast<int>(w); i < n_seeds; i += static_cast<int>(workers)) run(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

/// Index of the headline run: highest final NMI when labels exist, otherwise highest Q.
/// Ties go to the lowest seed index.
inline std::size_t best_run(const std::vector<TrainResult>& runs) {
  std::size_t best = 0;
  auto key = [](const TrainResult& r) {
    return r.report.final_score.nmi ? *r.report.final_score.nmi : r.report.final_score.q;
  };
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (key(runs[i]) > key(runs[best])) best = i;
  return best;
}

struct SweepPoint {
  int k = 0;
  double q = 0.0;
  std::optional<double> nmi;
  std::uint64_t seed = 0;
};

/// One train + evaluate per K in [k_min, k_max]; run K is seeded with derive_seed(seed, K)
/// and keeps the best of `n_seeds` restarts by Q.
inline std::vector<SweepPoint> sweep_k(const Graph& g, const ModularityContext& ctx, const TrainConfig& config,
                                       int k_min, int k_max, int n_seeds = 1) {
  if (k_min < 2) throw Error("sweep_k: k_min must be >= 2");
  if (k_max < k_min) throw Error("sweep_k: k_max must be >= k_min");
  if (static_cast<std::size_t>(k_max) > g.n()) throw Error("sweep_k: k_max exceeds the node count");
  std::vector<SweepPoint> out;
  for (int k = k_min; k <= k_max; ++k) {
    TrainConfig c = config;
    c.clusters = k;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    const auto runs = train_seeds(g, ctx, c, n_seeds);
    std::size_t best = 0;
    for (std::size_t i = 1; i < runs.size(); ++i)
      if (runs[i].report.final_score.q > runs[best].report.final_score.q) best = i;
    out.push_back({k, runs[best].report.final_score.q, runs[best].report.final_score.nmi, runs[best].report.seed});
  }
  return out;
}

}  // namespace modkit
