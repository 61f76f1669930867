#include <gtest/gtest.h>

#include "support.hpp"

using namespace modkit;

namespace {

// (X W) evaluated with explicit loops.
DenseMatrix loop_product(const DenseMatrix& x, const DenseMatrix& w) {
  DenseMatrix out = DenseMatrix::Zero(x.rows(), w.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index k = 0; k < x.cols(); ++k) out(i, j) += x(i, k) * w(k, j);
  return out;
}

struct Instance {
  Graph g;
  ModularityContext ctx;
  ModelParams params;
};

Instance six_node(std::uint64_t seed, ModelKind kind = ModelKind::vgaer) {
  std::mt19937_64 gen(seed);
  Graph g = support::random_graph(6, 0.5, gen);
  auto ctx = ModularityContext::build(g);
  Rng rng(seed);
  auto params = ModelParams::init(kind, 6, 4, 3, rng);
  return {std::move(g), std::move(ctx), std::move(params)};
}

}  // namespace

TEST(GcnHidden, ZeroWeightsGiveZero) {
  const auto inst = six_node(1);
  EXPECT_EQ(gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, DenseMatrix::Zero(6, 4)), DenseMatrix::Zero(6, 4));
}

TEST(GcnHidden, IsolatedNode) {
  const DenseMatrix h = gcn_hidden(DenseMatrix::Ones(1, 1), DenseMatrix::Zero(1, 1), DenseMatrix::Constant(1, 3, 2.0));
  EXPECT_EQ(h, DenseMatrix::Zero(1, 3));
}

TEST(GcnHidden, ZeroRowSumsCancel) {
  const auto ctx = ModularityContext::build(Graph::from_edges(2, {{0, 1}}));
  const DenseMatrix h = gcn_hidden(ctx.a_tilde, ctx.b0, DenseMatrix::Ones(2, 1));
  EXPECT_EQ(h, DenseMatrix::Zero(2, 1));
}

TEST(GcnHidden, ShapeMismatch) {
  const auto inst = six_node(2);
  EXPECT_THROW(gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, DenseMatrix::Zero(5, 4)), ShapeError);
}

TEST(GcnHidden, TanhKeepsGradientAliveNearZero) {
  // d tanh(A B0 W0) / d W0 at small W0 is nonzero wherever A B0 is nonzero.
  const auto inst = six_node(3);
  DenseMatrix w = DenseMatrix::Constant(6, 1, 1e-3);
  const double h = 1e-6;
  DenseMatrix up = w, down = w;
  up(0, 0) += h;
  down(0, 0) -= h;
  const DenseMatrix d = (gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, up) - gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, down)) / (2 * h);
  const DenseMatrix ab = inst.ctx.a_tilde * inst.ctx.b0;
  for (int i = 0; i < 6; ++i)
    if (std::abs(ab(i, 0)) > 1e-9) {
      EXPECT_NE(d(i, 0), 0.0);
    }
  EXPECT_GT(d.cwiseAbs().maxCoeff(), 0.0);
}

TEST(EncodeVgaer, ZeroHiddenGivesZeroHeads) {
  const auto inst = six_node(4);
  const auto heads = encode_vgaer(inst.ctx.a_tilde, DenseMatrix::Zero(6, 4), inst.params);
  EXPECT_EQ(heads.mu, DenseMatrix::Zero(6, 3));
  EXPECT_EQ(heads.log_sigma, DenseMatrix::Zero(6, 3));
}

TEST(EncodeVgaer, IdenticalHeads) {
  auto inst = six_node(5);
  inst.params.w_sigma = inst.params.w_mu;
  const DenseMatrix h = gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, inst.params.w0);
  const auto heads = encode_vgaer(inst.ctx.a_tilde, h, inst.params);
  EXPECT_EQ(heads.mu, heads.log_sigma);
}

TEST(EncodeVgaer, MatchesLoopEvaluation) {
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    auto inst = six_node(seed);
    const auto& a = inst.ctx.a_tilde;
    DenseMatrix h = loop_product(loop_product(a, inst.ctx.b0), inst.params.w0);
    for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = std::tanh(h.data()[i]);
    const DenseMatrix mu = loop_product(loop_product(a, h), inst.params.w_mu);
    const DenseMatrix ls = loop_product(loop_product(a, h), inst.params.w_sigma);
    const auto heads = encode_vgaer(a, gcn_hidden(a, inst.ctx.b0, inst.params.w0), inst.params);
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      EXPECT_NEAR(heads.mu.data()[i], mu.data()[i], 1e-12);
      EXPECT_NEAR(heads.log_sigma.data()[i], std::clamp(ls.data()[i], -10.0, 10.0), 1e-12);
    }
  }
}

TEST(EncodeVgaer, LogSigmaIsClamped) {
  auto inst = six_node(6);
  inst.params.w_sigma *= 1e6;
  const auto heads = encode_vgaer(inst.ctx.a_tilde, gcn_hidden(inst.ctx.a_tilde, inst.ctx.b0, inst.params.w0), inst.params);
  EXPECT_LE(heads.log_sigma.maxCoeff(), 10.0);
  EXPECT_GE(heads.log_sigma.minCoeff(), -10.0);
  EXPECT_TRUE(reparameterize(heads.mu, heads.log_sigma, DenseMatrix::Ones(6, 3)).allFinite());
}

TEST(Reparameterize, ZeroNoiseGivesMean) {
  std::mt19937_64 gen(1);
  const DenseMatrix mu = support::random_matrix(4, 2, gen);
  const DenseMatrix ls = support::random_matrix(4, 2, gen);
  EXPECT_EQ(reparameterize(mu, ls, DenseMatrix::Zero(4, 2)), mu);
}

TEST(Reparameterize, UnitSigmaAddsNoise) {
  std::mt19937_64 gen(2);
  const DenseMatrix mu = support::random_matrix(4, 2, gen);
  const DenseMatrix e = support::random_matrix(4, 2, gen);
  EXPECT_EQ(reparameterize(mu, DenseMatrix::Zero(4, 2), e), mu + e);
}

TEST(Reparameterize, MonteCarloMean) {
  DenseMatrix mu(2, 2), ls(2, 2);
  mu << 1.0, -2.0, 0.5, 0.0;
  ls << 0.0, -1.0, 0.3, 0.5;
  Rng rng(77);
  DenseMatrix acc = DenseMatrix::Zero(2, 2);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) acc += reparameterize(mu, ls, rng);
  acc /= draws;
  // Largest sigma is e^0.5 ~ 1.65, so the standard error is ~0.005.
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(acc.data()[i], mu.data()[i], 0.02);
}

TEST(Reparameterize, ShapeMismatch) {
  EXPECT_THROW(reparameterize(DenseMatrix::Zero(2, 2), DenseMatrix::Zero(2, 3), DenseMatrix::Zero(2, 2)), ShapeError);
}

TEST(EncodeGaer, ZeroW0GivesZero) {
  auto inst = six_node(7, ModelKind::gaer);
  inst.params.w0.setZero();
  EXPECT_EQ(encode_gaer(inst.ctx.a_tilde, inst.ctx.b0, inst.params), DenseMatrix::Zero(6, 3));
}

TEST(EncodeGaer, EqualsVgaerMeanPath) {
  const auto v = six_node(8, ModelKind::vgaer);
  ModelParams g = v.params;
  g.kind = ModelKind::gaer;
  g.w_sigma.resize(0, 0);
  const auto heads =
      encode_vgaer(v.ctx.a_tilde, gcn_hidden(v.ctx.a_tilde, v.ctx.b0, v.params.w0), v.params);
  EXPECT_TRUE(encode_gaer(v.ctx.a_tilde, v.ctx.b0, g).isApprox(heads.mu, 1e-12));
}

TEST(EncodeGaer, MatchesLoopEvaluation) {
  const auto inst = six_node(9, ModelKind::gaer);
  const auto& a = inst.ctx.a_tilde;
  DenseMatrix h = loop_product(loop_product(a, inst.ctx.b0), inst.params.w0);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = std::tanh(h.data()[i]);
  const DenseMatrix z = loop_product(loop_product(a, h), inst.params.w_mu);
  const DenseMatrix got = encode_gaer(a, inst.ctx.b0, inst.params);
  for (Eigen::Index i = 0; i < z.size(); ++i) EXPECT_NEAR(got.data()[i], z.data()[i], 1e-12);
}

TEST(NeighborhoodShare, MeanRules) {
  RowVector a(2), b(2);
  a << 0, 2;
  b << 2, 0;
  std::vector<RowVector> one{a};
  EXPECT_EQ(neighborhood_share(one, 2), a);
  std::vector<RowVector> two{a, b};
  EXPECT_EQ(neighborhood_share(two, 2), RowVector::Ones(2));
  std::vector<RowVector> same(5, b);
  EXPECT_EQ(neighborhood_share(same, 2), b);
  EXPECT_EQ(neighborhood_share({}, 3), RowVector::Zero(3));
}

TEST(MembershipEncode, LayerRules) {
  RowVector own(2), shared(2);
  own << 3, -1;
  shared << 7, 8;
  DenseMatrix stacked = DenseMatrix::Zero(4, 2);
  stacked.topRows(2).setIdentity();
  EXPECT_EQ(membership_encode(own, shared, stacked, 2), own);
  EXPECT_EQ(membership_encode(own, shared, DenseMatrix::Zero(4, 3), 1), RowVector::Constant(3, 0.5));
  EXPECT_THROW(membership_encode(own, shared, DenseMatrix::Zero(3, 3), 1), ShapeError);
  EXPECT_THROW(membership_encode(own, shared, stacked, 3), Error);
}

TEST(SampleNeighbors, DistinctSortedAndBounded) {
  const Graph star = Graph::from_edges(6, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {0, 5}});
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto pick = layer_sample(star, 0, 1, 3, s);
    ASSERT_EQ(pick.size(), 3u);
    EXPECT_TRUE(std::is_sorted(pick.begin(), pick.end()));
    EXPECT_EQ(std::adjacent_find(pick.begin(), pick.end()), pick.end());
    for (int v : pick) EXPECT_TRUE(star.has_edge(0, v));
  }
  EXPECT_EQ(layer_sample(star, 0, 1, 10, 0), star.neighbors(0));
}

TEST(TwoStage, HandRolledStarTrace) {
  // Star with centre 0 and leaves 1..3, k = 2: replay every sampling and encoding step by hand.
  const Graph star = Graph::from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
  const auto ctx = ModularityContext::build(star);
  Rng rng(4);
  const ModelParams params = ModelParams::init(ModelKind::vgaer, 4, 3, 2, rng, Architecture::two_stage);
  const std::uint64_t seed = 99;
  const LatentState s = two_stage_encode(star, ctx.b0, params, 2, seed);

  auto sample = [&](int v, int layer) {
    const auto& nb = star.neighbors(v);
    if (nb.size() <= 2) return nb;
    Rng r(derive_seed(seed, static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(v)));
    std::vector<int> pool = nb;
    for (std::size_t i = 0; i < 2; ++i) std::swap(pool[i], pool[i + r.below(pool.size() - i)]);
    pool.resize(2);
    std::sort(pool.begin(), pool.end());
    return pool;
  };
  DenseMatrix p1(4, 3);
  for (int v = 0; v < 4; ++v) {
    const auto nb = sample(v, 1);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(4);
    for (int u : nb) mean += ctx.b0.row(u);
    mean /= double(nb.size());
    for (int j = 0; j < 3; ++j) {
      double acc = 0;
      for (int i = 0; i < 4; ++i) acc += ctx.b0(v, i) * params.w0(i, j) + mean(i) * params.w0(4 + i, j);
      p1(v, j) = support::sigmoid_ref(acc);
    }
  }
  Rng eps(derive_seed(seed, 3));
  const DenseMatrix e = gaussian_sample(4, 2, eps);
  for (int v = 0; v < 4; ++v) {
    const auto nb = sample(v, 2);
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(3);
    for (int u : nb) mean += p1.row(u);
    mean /= double(nb.size());
    for (int j = 0; j < 2; ++j) {
      double mu = 0, ls = 0;
      for (int i = 0; i < 3; ++i) {
        mu += p1(v, i) * params.w_mu(i, j) + mean(i) * params.w_mu(3 + i, j);
        ls += p1(v, i) * params.w_sigma(i, j) + mean(i) * params.w_sigma(3 + i, j);
      }
      EXPECT_NEAR(s.mu(v, j), mu, 1e-12);
      EXPECT_NEAR(s.log_sigma(v, j), ls, 1e-12);
      EXPECT_NEAR(s.z(v, j), mu + std::exp(ls) * e(v, j), 1e-12);
    }
  }
}

TEST(TwoStage, DeterministicAndFullNeighbourhood) {
  const Graph g = generators::bridged_triangles();
  const auto ctx = ModularityContext::build(g);
  Rng rng(5);
  const ModelParams params = ModelParams::init(ModelKind::gaer, 6, 4, 2, rng, Architecture::two_stage);
  const auto a = two_stage_encode(g, ctx.b0, params, g.max_degree(), 1);
  const auto b = two_stage_encode(g, ctx.b0, params, g.max_degree(), 2);
  // With k >= max degree there is no sampling, so the seed is irrelevant for gaer.
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.z, a.mu);
  EXPECT_EQ(a.z, two_stage_encode(g, ctx.b0, params, g.max_degree(), 1).z);
}

TEST(TwoStage, IsolatedNodeUsesZeroNeighbourhood) {
  const Graph g = Graph::from_edges(3, {{0, 1}});
  const DenseMatrix stats = DenseMatrix::Ones(3, 2);
  Rng rng(1);
  ModelParams params = ModelParams::init(ModelKind::gaer, 2, 2, 2, rng, Architecture::two_stage);
  const auto s = two_stage_encode(g, stats, params, 3, 0);
  RowVector own(2);
  own << 1, 1;
  const RowVector p1 = membership_encode(own, RowVector::Zero(2), params.w0, 1);
  EXPECT_TRUE(s.mu.row(2).isApprox(membership_encode(p1, RowVector::Zero(2), params.w_mu, 2), 1e-14));
}

TEST(TwoStage, ShapesAndFinitenessAcrossSeeds) {
  std::mt19937_64 gen(6);
  const Graph g = support::random_graph(6, 0.6, gen);
  const auto ctx = ModularityContext::build(g);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    const ModelParams params = ModelParams::init(ModelKind::vgaer, 6, 4, 3, rng, Architecture::two_stage);
    const auto s = two_stage_encode(g, ctx.b0, params, 2, seed);
    EXPECT_EQ(s.z.rows(), 6);
    EXPECT_EQ(s.z.cols(), 3);
    EXPECT_TRUE(s.z.allFinite() && s.mu.allFinite() && s.log_sigma.allFinite());
  }
}

TEST(TwoStage, BatchForwardAgreesWithFullEncode) {
  std::mt19937_64 gen(8);
  const Graph g = support::random_graph(12, 0.3, gen);
  const auto ctx = ModularityContext::build(g);
  Rng rng(2);
  const ModelParams params = ModelParams::init(ModelKind::vgaer, 12, 4, 3, rng, Architecture::two_stage);
  const auto full = two_stage_encode(g, ctx.b0, params, 2, 17);
  Rng eps(derive_seed(17, 3));
  const DenseMatrix e = gaussian_sample(12, 3, eps);
  const std::vector<int> batch{7, 2, 11};
  const auto fwd = two_stage_forward(g, ctx.b0, params, batch, 2, 17, e);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    EXPECT_TRUE(fwd.mu.row(b).isApprox(full.mu.row(batch[b]), 1e-14));
    EXPECT_TRUE(fwd.z.row(b).isApprox(full.z.row(batch[b]), 1e-14));
  }
}

TEST(InputOperator, ImplicitModularityMatchesDenseRows) {
  std::mt19937_64 gen(41);
  for (bool with_features : {false, true}) {
    Graph g = support::random_graph(9, 0.35, gen);
    if (with_features) g = g.with_features(support::random_matrix(9, 3, gen));
    const auto ctx = ModularityContext::build(g);
    const InputOperator op = InputOperator::modularity(g);
    ASSERT_EQ(op.rows(), ctx.b0.rows());
    ASSERT_EQ(op.cols(), ctx.b0.cols());
    const DenseMatrix w = support::random_matrix(static_cast<int>(ctx.b0.cols()), 4, gen);
    const DenseMatrix y = support::random_matrix(9, 4, gen);
    EXPECT_TRUE(op.times(w).isApprox(ctx.b0 * w, 1e-13));
    EXPECT_TRUE(op.transpose_times(y).isApprox(ctx.b0.transpose() * y, 1e-13));
    EXPECT_THROW(op.times(DenseMatrix::Zero(2, 4)), ShapeError);
    EXPECT_THROW(op.transpose_times(DenseMatrix::Zero(3, 4)), ShapeError);
  }
  EXPECT_THROW(InputOperator::modularity(Graph::from_edges(3, {})), Error);
}

TEST(TwoStage, ImplicitInputGivesSameBatch) {
  std::mt19937_64 gen(42);
  const Graph g = support::random_graph(12, 0.3, gen).with_features(support::random_matrix(12, 2, gen));
  const auto ctx = ModularityContext::build(g);
  Rng rng(5);
  const ModelParams params = ModelParams::init(ModelKind::vgaer, ctx.b0.cols(), 3, 2, rng, Architecture::two_stage);
  const DenseMatrix eps = support::random_matrix(12, 2, gen);
  const std::vector<int> batch{0, 4, 7, 11};
  const auto dense = two_stage_forward(g, ctx.b0, params, batch, 3, 9, eps);
  const auto implicit = two_stage_forward(g, InputOperator::modularity(g), params, batch, 3, 9, eps);
  EXPECT_EQ(dense.frontier, implicit.frontier);
  EXPECT_TRUE(implicit.z.isApprox(dense.z, 1e-12));
  const DenseMatrix target = reconstruction_target(Objective::cross_entropy, ctx.b);
  const DenseMatrix z_all = support::random_matrix(12, 2, gen);
  const LossWeights w{1.0, 0.1};
  const auto a = two_stage_loss_and_gradients(target, params, dense, z_all, Objective::cross_entropy, w);
  const auto b = two_stage_loss_and_gradients(target, params, implicit, z_all, Objective::cross_entropy, w);
  EXPECT_NEAR(a.loss.total, b.loss.total, 1e-10);
  EXPECT_TRUE(b.grads.w0.isApprox(a.grads.w0, 1e-10));
}
