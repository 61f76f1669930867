#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "modkit.hpp"

namespace support {

inline std::string data_path(const std::string& name) { return std::string(MODKIT_DATA_DIR) + "/" + name; }

inline bool have_file(const std::string& path) { return std::ifstream(path).good(); }

inline modkit::Graph load_graph_file(const std::string& path) {
  std::ifstream in(path);
  return modkit::load_edge_list(in);
}

/// Random graph with at least one edge, from std::mt19937_64 (independent of modkit::Rng).
inline modkit::Graph random_graph(int n, double p, std::mt19937_64& gen) {
  std::bernoulli_distribution coin(p);
  std::vector<modkit::Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (coin(gen)) edges.push_back({u, v});
  if (edges.empty()) edges.push_back({0, n - 1});
  return modkit::Graph::from_edges(n, std::move(edges));
}

inline modkit::DenseMatrix random_matrix(int rows, int cols, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  modkit::DenseMatrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = d(gen);
  return m;
}

/// b_ij evaluated straight from the definition with loops.
inline double b_entry(const modkit::Graph& g, int i, int j) {
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  const double a = (i != j && g.has_edge(i, j)) ? 1.0 : 0.0;
  return a - static_cast<double>(g.degree(i)) * static_cast<double>(g.degree(j)) / two_m;
}

inline double log_sigmoid_ref(double x) {
  // Evaluated by branch so no shared helper is reused.
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double sigmoid_ref(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace support
