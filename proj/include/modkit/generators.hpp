#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "modkit/graph.hpp"
#include "modkit/numerics.hpp"

namespace modkit::generators {

inline Graph triangle() { return Graph::from_edges(3, {{0, 1}, {1, 2}, {0, 2}}); }

inline Graph disjoint_triangles() {
  return Graph::from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}});
}

/// Two triangles joined by the edge 2-3.
inline Graph bridged_triangles() {
  return Graph::from_edges(6, {{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {3, 5}});
}

/// G(n, p). Node ids are decimal indices; may contain isolated nodes.
inline Graph erdos_renyi(int n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform() < p) edges.push_back({u, v});
  return Graph::from_edges(n, std::move(edges));
}

/// `groups` blocks of `size` nodes; intra-block pairs link with p_in, others with p_out.
/// Labels hold the planted block of each node.
inline Graph planted_partition(int groups, int size, double p_in, double p_out, std::uint64_t seed) {
  Rng rng(seed);
  const int n = groups * size;
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform() < (u / size == v / size ? p_in : p_out)) edges.push_back({u, v});
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i / size;
  return Graph::from_edges(n, std::move(edges)).with_labels(std::move(labels));
}

/// Sparse random graph with about n * avg_degree / 2 edges: a ring for connectivity plus
/// uniformly drawn chords.
inline Graph sparse_random(int n, double avg_degree, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> edges;
  std::vector<std::vector<int>> adj(n);
  auto link = [&](int u, int v) {
    if (u == v) return;
    if (u > v) std::swap(u, v);
    for (int w : adj[u])
      if (w == v) return;
    adj[u].push_back(v);
    edges.push_back({u, v});
  };
  for (int i = 0; i < n; ++i) link(i, (i + 1) % n);
  const auto target = static_cast<std::size_t>(n * avg_degree / 2.0);
  while (edges.size() < target)
    link(static_cast<int>(rng.below(n)), static_cast<int>(rng.below(n)));
  return Graph::from_edges(n, std::move(edges));
}

}  // namespace modkit::generators
