#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "modkit/error.hpp"
#include "modkit/numerics.hpp"

namespace modkit {

/// Hard node -> community assignment with ids 0..K-1, every id used.
struct Partition {
  std::vector<int> assignment;
  int k = 0;

  std::size_t n() const noexcept { return assignment.size(); }

  /// Relabels ids to 0..K'-1 in order of first appearance.
  static Partition compact(const std::vector<int>& raw) {
    Partition p;
    p.assignment.resize(raw.size());
    std::vector<int> remap;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const int id = raw[i];
      if (id < 0) throw Error("partition ids must be non-negative");
      if (static_cast<std::size_t>(id) >= remap.size()) remap.resize(id + 1, -1);
      if (remap[id] < 0) remap[id] = p.k++;
      p.assignment[i] = remap[id];
    }
    return p;
  }

  /// Uses `raw` as-is; throws unless ids are exactly 0..K-1 with each one present.
  static Partition from_assignment(std::vector<int> raw) {
    Partition p;
    for (int id : raw) {
      if (id < 0) throw Error("partition ids must be non-negative");
      p.k = std::max(p.k, id + 1);
    }
    std::vector<bool> used(p.k, false);
    for (int id : raw) used[id] = true;
    if (std::find(used.begin(), used.end(), false) != used.end()) throw Error("partition leaves a community id unused");
    p.assignment = std::move(raw);
    return p;
  }

  friend bool operator==(const Partition&, const Partition&) = default;
};

enum class Distance { squared_euclidean, cosine };

struct KMeansOptions {
  int max_iter = 300;
  int n_init = 10;
  Distance distance = Distance::squared_euclidean;
};

/// One Lloyd run, with the cost of the seeding and of the converged solution.
struct KMeansRun {
  Partition partition;
  DenseMatrix centroids;
  double initial_wcss = 0.0;
  double wcss = 0.0;
  int iterations = 0;
};

/// Within-cluster sum of squared distances to the cluster means.
inline double wcss(const DenseMatrix& x, const std::vector<int>& assignment, int k) {
  DenseMatrix c = DenseMatrix::Zero(k, x.cols());
  std::vector<int> count(k, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(assignment[i]) += x.row(i);
    ++count[assignment[i]];
  }
  for (int j = 0; j < k; ++j)
    if (count[j] > 0) c.row(j) /= count[j];
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) s += (x.row(i) - c.row(assignment[i])).squaredNorm();
  return s;
}

namespace detail {

inline DenseMatrix normalize_rows(const DenseMatrix& x) {
  DenseMatrix out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0) out.row(i) /= norm;
  }
  return out;
}

/// Nearest centroid, ties toward the lowest index.
inline int nearest(const DenseMatrix& x, Eigen::Index i, const DenseMatrix& c, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < c.rows(); ++j) {
    const double d = (x.row(i) - c.row(j)).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(j);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

/// k-means++ seeding: first centre uniform, then D^2-weighted draws.
inline DenseMatrix kmeanspp_seed(const DenseMatrix& x, int k, Rng& rng) {
  const Eigen::Index n = x.rows();
  DenseMatrix c(k, x.cols());
  c.row(0) = x.row(static_cast<Eigen::Index>(rng.below(n)));
  std::vector<double> d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2[i] = (x.row(i) - c.row(0)).squaredNorm();
  for (int j = 1; j < k; ++j) {
    double total = 0.0;
    for (double d : d2) total += d;
    Eigen::Index pick = 0;
    if (total > 0) {
      double r = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.below(n));
    }
    c.row(j) = x.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) d2[i] = std::min(d2[i], (x.row(i) - c.row(j)).squaredNorm());
  }
  return c;
}

/// Moves the point farthest from its own centroid into each empty cluster.
inline void fill_empty_clusters(const DenseMatrix& x, const DenseMatrix& c, std::vector<int>& assign, int k) {
  std::vector<int> count(k, 0);
  for (int a : assign) ++count[a];
  for (int j = 0; j < k; ++j) {
    if (count[j] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (count[assign[i]] <= 1) continue;  // never empty another cluster
      const double d = (x.row(i) - c.row(assign[i])).squaredNorm();
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) throw Error("kmeans: cannot fill empty cluster");
    --count[assign[far]];
    assign[far] = j;
    ++count[j];
  }
}

inline DenseMatrix centroids_of(const DenseMatrix& x, const std::vector<int>& assign, int k) {
  DenseMatrix c = DenseMatrix::Zero(k, x.cols());
  std::vector<int> count(k, 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    c.row(assign[i]) += x.row(i);
    ++count[assign[i]];
  }
  for (int j = 0; j < k; ++j) c.row(j) /= std::max(count[j], 1);
  return c;
}

}  // namespace detail

/// Single k-means++ seeded Lloyd run on already-transformed points.
inline KMeansRun kmeans_single(const DenseMatrix& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  if (k < 1) throw Error("kmeans: K must be >= 1");
  if (k > n) throw Error("kmeans: K=" + std::to_string(k) + " exceeds the number of points n=" + std::to_string(n));

  KMeansRun run;
  DenseMatrix c = detail::kmeanspp_seed(x, k, rng);
  std::vector<int> assign(n);
  for (Eigen::Index i = 0; i < n; ++i) assign[i] = detail::nearest(x, i, c);
  detail::fill_empty_clusters(x, c, assign, k);
  run.initial_wcss = wcss(x, assign, k);

  for (int it = 0; it < max_iter; ++it) {
    c = detail::centroids_of(x, assign, k);
    std::vector<int> next(n);
    for (Eigen::Index i = 0; i < n; ++i) next[i] = detail::nearest(x, i, c);
    detail::fill_empty_clusters(x, c, next, k);
    run.iterations = it + 1;
    if (next == assign) break;
    assign = std::move(next);
  }
  run.centroids = detail::centroids_of(x, assign, k);
  run.wcss = wcss(x, assign, k);
  run.partition.assignment = std::move(assign);
  run.partition.k = k;
  return run;
}

/// Best of `n_init` Lloyd runs by WCSS; restart r uses seed derive_seed(seed, r).
/// Ties go to the earliest restart.
inline Partition kmeans(const DenseMatrix& z, int k, std::uint64_t seed, KMeansOptions options = {}) {
  const DenseMatrix x = options.distance == Distance::cosine ? detail::normalize_rows(z) : z;
  KMeansRun best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(options.n_init, 1); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansRun run = kmeans_single(x, k, rng, options.max_iter);
    if (run.wcss < best.wcss) best = std::move(run);
  }
  return best.partition;
}

/// Node i joins argmax_j z_ij (ties toward the lowest j); unused ids are compacted.
inline Partition argmax_assign(const DenseMatrix& z) {
  if (z.cols() < 1) throw ShapeError("argmax_assign: d_latent must be >= 1");
  std::vector<int> raw(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < z.cols(); ++j)
      if (z(i, j) > z(i, best)) best = j;
    raw[i] = static_cast<int>(best);
  }
  // Compact while keeping the relative order of the surviving column ids.
  std::vector<int> used(z.cols(), -1);
  for (int r : raw) used[r] = 1;
  int next = 0;
  for (auto& u : used)
    if (u > 0) u = next++;
  Partition p;
  p.k = next;
  p.assignment.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) p.assignment[i] = used[raw[i]];
  return p;
}

inline DenseMatrix one_hot(const Partition& p) {
  DenseMatrix z = DenseMatrix::Zero(static_cast<Eigen::Index>(p.n()), p.k);
  for (std::size_t i = 0; i < p.n(); ++i) z(i, p.assignment[i]) = 1.0;
  return z;
}

}  // namespace modkit
