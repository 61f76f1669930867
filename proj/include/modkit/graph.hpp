#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "modkit/error.hpp"
#include "modkit/numerics.hpp"

namespace modkit {

/// Undirected edge with u < v.
struct Edge {
  int u = 0;
  int v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// What the edge-list loader threw away.
struct LoadDiagnostics {
  std::size_t lines_read = 0;
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
};

/// Undirected simple graph with optional node features and ground-truth labels.
/// Immutable once built; `with_features` / `with_labels` return extended copies.
class Graph {
 public:
  Graph() = default;

  Graph(std::vector<std::string> node_ids, std::vector<Edge> edges, LoadDiagnostics diagnostics = {})
      : node_ids_(std::move(node_ids)), edges_(std::move(edges)), diagnostics_(diagnostics) {
    const auto n = static_cast<int>(node_ids_.size());
    adjacency_.assign(node_ids_.size(), {});
    std::unordered_set<std::uint64_t> seen;
    for (auto& e : edges_) {
      if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n) throw Error("edge endpoint out of range");
      if (e.u == e.v) throw Error("graph may not contain self-loops");
      if (e.u > e.v) std::swap(e.u, e.v);
      const auto key = (static_cast<std::uint64_t>(e.u) << 32) | static_cast<std::uint32_t>(e.v);
      if (!seen.insert(key).second) throw Error("graph may not contain duplicate edges");
      adjacency_[e.u].push_back(e.v);
      adjacency_[e.v].push_back(e.u);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
    index_.reserve(node_ids_.size());
    for (int i = 0; i < n; ++i) {
      if (!index_.emplace(node_ids_[i], i).second) throw Error("duplicate node token '" + node_ids_[i] + "'");
    }
  }

  /// Graph over nodes 0..n-1 whose tokens are their decimal indices.
  static Graph from_edges(int n, std::vector<Edge> edges) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (int i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    return Graph(std::move(ids), std::move(edges));
  }

  std::size_t n() const noexcept { return node_ids_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::string>& node_ids() const noexcept { return node_ids_; }
  const std::vector<int>& neighbors(std::size_t i) const { return adjacency_.at(i); }
  std::size_t degree(std::size_t i) const { return adjacency_.at(i).size(); }
  std::size_t max_degree() const noexcept {
    std::size_t d = 0;
    for (const auto& nb : adjacency_) d = std::max(d, nb.size());
    return d;
  }
  bool has_edge(int u, int v) const {
    const auto& nb = adjacency_.at(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }
  const LoadDiagnostics& diagnostics() const noexcept { return diagnostics_; }

  std::optional<int> index_of(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::optional<DenseMatrix>& features() const noexcept { return features_; }
  const std::optional<std::vector<int>>& labels() const noexcept { return labels_; }
  /// Number of distinct ground-truth labels (K_true); 0 without labels.
  int label_count() const noexcept { return static_cast<int>(label_names_.size()); }
  const std::vector<std::string>& label_names() const noexcept { return label_names_; }

  Graph with_features(DenseMatrix features) const {
    if (static_cast<std::size_t>(features.rows()) != n())
      throw ShapeError("feature matrix has " + std::to_string(features.rows()) + " rows, graph has " +
                       std::to_string(n()) + " nodes");
    require_finite(features, "features");
    Graph g = *this;
    g.features_ = std::move(features);
    return g;
  }

  Graph with_labels(std::vector<int> labels, std::vector<std::string> names) const {
    if (labels.size() != n()) throw ShapeError("label vector length does not match node count");
    for (int l : labels)
      if (l < 0 || l >= static_cast<int>(names.size())) throw Error("label id out of range");
    Graph g = *this;
    g.labels_ = std::move(labels);
    g.label_names_ = std::move(names);
    return g;
  }

  Graph with_labels(std::vector<int> labels) const {
    int k = 0;
    for (int l : labels) k = std::max(k, l + 1);
    std::vector<std::string> names;
    for (int i = 0; i < k; ++i) names.push_back(std::to_string(i));
    return with_labels(std::move(labels), std::move(names));
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.node_ids_ == b.node_ids_ && a.edges_ == b.edges_;
  }

 private:
  std::vector<std::string> node_ids_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::unordered_map<std::string, int> index_;
  LoadDiagnostics diagnostics_;
  std::optional<DenseMatrix> features_;
  std::optional<std::vector<int>> labels_;
  std::vector<std::string> label_names_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t b = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > b) out.push_back(s.substr(b, i - b));
  }
  return out;
}

inline std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t b = 0;
  for (;;) {
    const auto c = s.find(',', b);
    out.push_back(trim(s.substr(b, c == std::string_view::npos ? std::string_view::npos : c - b)));
    if (c == std::string_view::npos) break;
    b = c + 1;
  }
  return out;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  // strtod accepts the same forms as serialized doubles, including exponents.
  std::string tmp(s);
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) return std::nullopt;
  return v;
}

inline bool is_comment_or_blank(std::string_view line) { return line.empty() || line.front() == '#'; }

}  // namespace detail

/// Parses a whitespace-separated edge list. Self-loops and duplicate edges are dropped
/// and counted in the graph's diagnostics.
inline Graph load_edge_list(std::istream& in) {
  std::vector<std::string> ids;
  std::unordered_map<std::string, int> index;
  std::vector<Edge> edges;
  std::unordered_set<std::uint64_t> seen;
  LoadDiagnostics diag;

  auto intern = [&](std::string_view tok) {
    auto [it, inserted] = index.emplace(std::string(tok), static_cast<int>(ids.size()));
    if (inserted) ids.emplace_back(tok);
    return it->second;
  };

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = detail::trim(raw);
    if (detail::is_comment_or_blank(line)) continue;
    ++diag.lines_read;
    const auto tok = detail::split_whitespace(line);
    if (tok.size() != 2)
      throw ParseError("expected 2 node tokens, found " + std::to_string(tok.size()), lineno);
    int u = intern(tok[0]);
    int v = intern(tok[1]);
    if (u == v) {
      ++diag.self_loops;
      continue;
    }
    if (u > v) std::swap(u, v);
    const auto key = (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v);
    if (!seen.insert(key).second) {
      ++diag.duplicate_edges;
      continue;
    }
    edges.push_back({u, v});
  }
  if (edges.empty()) throw ParseError("edge list contains no edges", 0);
  return Graph(std::move(ids), std::move(edges), diag);
}

inline Graph load_edge_list(const std::string& text) {
  std::istringstream in(text);
  return load_edge_list(in);
}

/// Writes the edge list back in load order; reloading the output yields an equal graph.
inline void write_edge_list(std::ostream& out, const Graph& g) {
  for (const auto& e : g.edges()) out << g.node_ids()[e.u] << ' ' << g.node_ids()[e.v] << '\n';
}

struct FeatureOptions {
  /// Scale each row to unit L1 norm (all-zero rows stay zero).
  bool row_normalize = false;
};

/// Reads "token, f1, ..., fF" rows into an [n x F] matrix aligned to node order.
/// Line 1 is a header when its second field is not numeric.
inline Graph load_features(std::istream& in, const Graph& g, FeatureOptions options = {}) {
  std::vector<std::vector<double>> rows(g.n());
  std::vector<bool> filled(g.n(), false);
  std::size_t width = 0;
  bool first = true;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = detail::trim(raw);
    if (detail::is_comment_or_blank(line)) continue;
    const auto fields = detail::split_csv(line);
    if (first) {
      first = false;
      if (fields.size() >= 2 && !detail::parse_real(fields[1])) continue;
    }
    if (fields.size() < 2) throw ParseError("feature row needs a node token and at least one value", lineno);
    const auto idx = g.index_of(fields[0]);
    if (!idx) throw ParseError("unknown node token '" + std::string(fields[0]) + "'", lineno);
    if (filled[*idx]) throw ParseError("node '" + std::string(fields[0]) + "' has two feature rows", lineno);
    const std::size_t f = fields.size() - 1;
    if (width == 0) width = f;
    if (f != width)
      throw ParseError("ragged feature row: " + std::to_string(f) + " values, expected " + std::to_string(width),
                       lineno);
    auto& row = rows[*idx];
    row.reserve(f);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto v = detail::parse_real(fields[j]);
      if (!v || !std::isfinite(*v))
        throw ParseError("invalid feature value '" + std::string(fields[j]) + "'", lineno);
      row.push_back(*v);
    }
    filled[*idx] = true;
  }
  for (std::size_t i = 0; i < g.n(); ++i)
    if (!filled[i]) throw ParseError("node '" + g.node_ids()[i] + "' has no feature row", 0);

  DenseMatrix x(static_cast<Eigen::Index>(g.n()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < g.n(); ++i) {
    for (std::size_t j = 0; j < width; ++j) x(i, j) = rows[i][j];
    if (options.row_normalize) {
      const double l1 = x.row(i).cwiseAbs().sum();
      if (l1 > 0) x.row(i) /= l1;
    }
  }
  return g.with_features(std::move(x));
}

/// Reads "token, label" rows; labels become contiguous ids in first-seen order.
/// Line 1 is a header when its first field is not a node token.
inline Graph load_labels(std::istream& in, const Graph& g) {
  std::vector<int> labels(g.n(), -1);
  std::vector<std::string> names;
  std::unordered_map<std::string, int> label_index;
  bool first = true;
  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = detail::trim(raw);
    if (detail::is_comment_or_blank(line)) continue;
    const auto fields = detail::split_csv(line);
    const auto idx = fields.empty() ? std::nullopt : g.index_of(fields[0]);
    if (first) {
      first = false;
      if (!idx) continue;
    }
    if (fields.size() != 2) throw ParseError("label row must be 'token, label'", lineno);
    if (!idx) throw ParseError("unknown node token '" + std::string(fields[0]) + "'", lineno);
    if (labels[*idx] >= 0) throw ParseError("node '" + std::string(fields[0]) + "' labelled twice", lineno);
    auto [it, inserted] = label_index.emplace(std::string(fields[1]), static_cast<int>(names.size()));
    if (inserted) names.emplace_back(fields[1]);
    labels[*idx] = it->second;
  }
  for (std::size_t i = 0; i < g.n(); ++i)
    if (labels[i] < 0) throw ParseError("node '" + g.node_ids()[i] + "' has no label", 0);
  return g.with_labels(std::move(labels), std::move(names));
}

inline DenseMatrix adjacency_matrix(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n());
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (const auto& e : g.edges()) a(e.u, e.v) = a(e.v, e.u) = 1.0;
  return a;
}

/// b_ij = a_ij - k_i k_j / 2M over all ordered pairs, diagonal included with a_ii = 0.
inline DenseMatrix modularity_matrix(const Graph& g) {
  if (g.edge_count() == 0) throw Error("modularity_matrix: graph has no edges");
  const auto n = static_cast<Eigen::Index>(g.n());
  const double two_m = 2.0 * static_cast<double>(g.edge_count());
  Vector k(n);
  for (Eigen::Index i = 0; i < n; ++i) k(i) = static_cast<double>(g.degree(i));
  DenseMatrix b = -(k * k.transpose()) / two_m;
  for (const auto& e : g.edges()) {
    b(e.u, e.v) += 1.0;
    b(e.v, e.u) += 1.0;
  }
  return b;
}

/// D^{-1/2} (A + I) D^{-1/2}, with D the degree matrix of A + I.
inline DenseMatrix renormalized_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.n());
  Vector inv_sqrt(n);
  for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  DenseMatrix a = DenseMatrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) a(i, i) = inv_sqrt(i) * inv_sqrt(i);
  for (const auto& e : g.edges()) a(e.u, e.v) = a(e.v, e.u) = inv_sqrt(e.u) * inv_sqrt(e.v);
  return a;
}

/// [B | X] when the graph carries features, otherwise B.
inline DenseMatrix input_features(const DenseMatrix& b, const Graph& g) {
  if (!g.features()) return b;
  const auto& x = *g.features();
  if (x.rows() != b.rows())
    throw ShapeError("feature rows (" + std::to_string(x.rows()) + ") do not match node count (" +
                     std::to_string(b.rows()) + ")");
  DenseMatrix b0(b.rows(), b.cols() + x.cols());
  b0 << b, x;
  return b0;
}

struct ContextOptions {
  /// Dense B costs n^2 doubles; larger graphs are refused.
  std::size_t n_max = 10000;
};

/// Every dense matrix the model consumes, built once per graph.
struct ModularityContext {
  DenseMatrix b;
  DenseMatrix a_tilde;
  std::vector<std::int64_t> degrees;
  std::int64_t m = 0;
  DenseMatrix b0;

  static ModularityContext build(const Graph& g, ContextOptions options = {}) {
    if (g.n() > options.n_max)
      throw Error("graph has " + std::to_string(g.n()) + " nodes, above the dense limit n_max=" +
                  std::to_string(options.n_max));
    ModularityContext ctx;
    ctx.b = modularity_matrix(g);
    ctx.a_tilde = renormalized_adjacency(g);
    ctx.degrees.resize(g.n());
    for (std::size_t i = 0; i < g.n(); ++i) ctx.degrees[i] = static_cast<std::int64_t>(g.degree(i));
    ctx.m = static_cast<std::int64_t>(g.edge_count());
    ctx.b0 = input_features(ctx.b, g);
    return ctx;
  }

  Eigen::Index n() const noexcept { return b.rows(); }
};

}  // namespace modkit
