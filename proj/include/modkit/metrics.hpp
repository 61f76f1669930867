#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modkit/clustering.hpp"
#include "modkit/error.hpp"
#include "modkit/graph.hpp"

namespace modkit {

struct ScoreReport {
  double q = 0.0;
  std::optional<double> nmi;
  int k_used = 0;
  std::string assignment_method;
};

/// Q = (1/2M) sum_ij (a_ij - k_i k_j / 2M) [c_i == c_j], over all ordered pairs (a_ii = 0).
inline double modularity_q(const Graph& g, const Partition& p) {
  if (g.edge_count() == 0) throw Error("modularity_q: graph has no edges");
  if (p.n() != g.n()) throw ShapeError("modularity_q: partition does not cover the graph");
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  const auto& c = p.assignment;
  double adjacency_term = 0.0;
  for (std::size_t i = 0; i < g.n(); ++i)
    for (int j : g.neighbors(i))
      if (c[i] == c[j]) adjacency_term += 1.0;
  double null_term = 0.0;
  for (std::size_t i = 0; i < g.n(); ++i) {
    const double ki = static_cast<double>(g.degree(i));
    for (std::size_t j = 0; j < g.n(); ++j)
      if (c[i] == c[j]) null_term += ki * static_cast<double>(g.degree(j));
  }
  return (adjacency_term - null_term / two_m) / two_m;
}

/// Q = Tr(Z^T B Z) / 2M for a one-hot membership matrix Z.
inline double modularity_trace(const DenseMatrix& b, const DenseMatrix& z, std::int64_t m) {
  if (m < 1) throw Error("modularity_trace: M must be >= 1");
  if (z.rows() != b.rows()) throw ShapeError("modularity_trace: Z must have one row per node");
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    int ones = 0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double v = z(i, j);
      if (v == 1.0)
        ++ones;
      else if (v != 0.0)
        throw Error("modularity_trace: Z is not one-hot");
    }
    if (ones != 1) throw Error("modularity_trace: Z is not one-hot");
  }
  return (z.transpose() * b * z).trace() / (2.0 * static_cast<double>(m));
}

enum class NmiNormalization { geometric, arithmetic };

/// Normalised mutual information with natural logs.
/// Both partitions trivially single-cluster: 1. Exactly one with zero entropy: 0.
inline double nmi(const Partition& a, const Partition& b, NmiNormalization norm = NmiNormalization::geometric) {
  if (a.n() != b.n()) throw ShapeError("nmi: partitions cover different node counts");
  const auto n = static_cast<double>(a.n());
  if (a.n() == 0) throw Error("nmi: empty partitions");
  std::vector<double> pa(a.k, 0.0), pb(b.k, 0.0);
  std::vector<double> joint(static_cast<std::size_t>(a.k) * b.k, 0.0);
  for (std::size_t i = 0; i < a.n(); ++i) {
    pa[a.assignment[i]] += 1.0;
    pb[b.assignment[i]] += 1.0;
    joint[static_cast<std::size_t>(a.assignment[i]) * b.k + b.assignment[i]] += 1.0;
  }
  auto entropy = [n](const std::vector<double>& counts) {
    double h = 0.0;
    for (double c : counts)
      if (c > 0) h -= (c / n) * std::log(c / n);
    return h;
  };
  const double ha = entropy(pa);
  const double hb = entropy(pb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  double mi = 0.0;
  for (int x = 0; x < a.k; ++x)
    for (int y = 0; y < b.k; ++y) {
      const double c = joint[static_cast<std::size_t>(x) * b.k + y];
      if (c > 0) mi += (c / n) * std::log(c * n / (pa[x] * pb[y]));
    }
  const double denom = norm == NmiNormalization::geometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

inline constexpr std::size_t kBruteForceMaxNodes = 12;

struct BruteForceResult {
  Partition partition;
  double q_star = 0.0;
  std::size_t partitions_checked = 0;
};

/// Exhaustive max-Q search over set partitions with at most k_max blocks, enumerated as
/// restricted growth strings in lexicographic order. The first maximiser found wins.
inline BruteForceResult brute_force_best_partition(const Graph& g, int k_max) {
  const std::size_t n = g.n();
  if (n > kBruteForceMaxNodes)
    throw Error("brute_force_best_partition: n=" + std::to_string(n) + " exceeds the cap of " +
                std::to_string(kBruteForceMaxNodes));
  if (n == 0 || g.edge_count() == 0) throw Error("brute_force_best_partition: graph needs edges");
  if (k_max < 1) throw Error("brute_force_best_partition: k_max must be >= 1");

  const double m = static_cast<double>(g.edge_count());
  std::vector<int> rgs(n, 0);
  std::vector<int> prefix_max(n, 0);  // max block id among rgs[0..i]
  std::vector<double> internal(n), degree_sum(n);

  // Q = sum_c ( L_c / M - (D_c / 2M)^2 ), with L_c internal edges and D_c total degree.
  auto score = [&]() {
    const int blocks = prefix_max[n - 1] + 1;
    std::fill(internal.begin(), internal.begin() + blocks, 0.0);
    std::fill(degree_sum.begin(), degree_sum.begin() + blocks, 0.0);
    for (const auto& e : g.edges())
      if (rgs[e.u] == rgs[e.v]) internal[rgs[e.u]] += 1.0;
    for (std::size_t i = 0; i < n; ++i) degree_sum[rgs[i]] += static_cast<double>(g.degree(i));
    double q = 0.0;
    for (int c = 0; c < blocks; ++c) q += internal[c] / m - (degree_sum[c] / (2.0 * m)) * (degree_sum[c] / (2.0 * m));
    return q;
  };

  BruteForceResult best;
  best.q_star = -std::numeric_limits<double>::infinity();
  for (;;) {
    ++best.partitions_checked;
    const double q = score();
    if (q > best.q_star + 1e-12) {
      best.q_star = q;
      best.partition = Partition::from_assignment(rgs);
    }
    // Next restricted growth string: bump the rightmost position that may grow.
    std::size_t i = n - 1;
    for (;; --i) {
      if (i == 0) {
        best.q_star = modularity_q(g, best.partition);
        return best;
      }
      const int limit = std::min(prefix_max[i - 1] + 1, k_max - 1);
      if (rgs[i] < limit) break;
    }
    ++rgs[i];
    prefix_max[i] = std::max(prefix_max[i - 1], rgs[i]);
    for (std::size_t j = i + 1; j < n; ++j) {
      rgs[j] = 0;
      prefix_max[j] = prefix_max[i];
    }
  }
}

}  // namespace modkit
