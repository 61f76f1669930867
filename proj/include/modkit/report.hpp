#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "modkit/trainer.hpp"

namespace modkit {

/// Projection onto the top two principal components. Each axis is oriented so its
/// largest-magnitude loading is positive, which makes the output deterministic.
inline DenseMatrix pca_2d(const DenseMatrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  DenseMatrix out = DenseMatrix::Zero(n, 2);
  if (n == 0 || d == 0) return out;
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  // Eigenvalues come back ascending.
  for (Eigen::Index axis = 0; axis < std::min<Eigen::Index>(2, d); ++axis) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - axis);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    out.col(axis) = centered * v;
  }
  return out;
}

/// Writes `content` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

namespace detail {

inline std::string real(double x) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
  return os.str();
}

inline std::string opt_real(const std::optional<double>& x) { return x ? real(*x) : "na"; }

}  // namespace detail

/// key=value lines; everything needed to rerun the configuration.
inline std::string config_block(const TrainConfig& c, std::size_t n) {
  std::ostringstream os;
  os << "config.model=" << to_string(c.model) << '\n'
     << "config.decoder=" << to_string(c.objective()) << '\n'
     << "config.hidden=" << c.d_hidden << '\n'
     << "config.latent=" << c.d_latent << '\n'
     << "config.epochs=" << c.epochs << '\n'
     << "config.lr=" << detail::real(c.lr) << '\n'
     << "config.kl_weight=" << detail::real(c.kl_weight_for(n)) << '\n'
     << "config.seed=" << c.seed << '\n'
     << "config.clusters=" << c.clusters << '\n'
     << "config.assignment=" << to_string(c.assignment) << '\n'
     << "config.kmeans_n_init=" << c.kmeans.n_init << '\n'
     << "config.kmeans_max_iter=" << c.kmeans.max_iter << '\n'
     << "config.distance=" << (c.kmeans.distance == Distance::cosine ? "cosine" : "sqeuclidean") << '\n'
     << "config.sampled=" << (c.sampled ? std::to_string(c.sampled->k) + "," + std::to_string(c.sampled->batch_size)
                                        : std::string("off"))
     << '\n'
     << "config.eval_every=" << c.eval_every << '\n'
     << "config.eval_sampled_z=" << (c.evaluate_sampled_z ? "true" : "false") << '\n'
     << "config.nmi=" << (c.nmi_normalization == NmiNormalization::geometric ? "geometric" : "arithmetic") << '\n';
  return os.str();
}

/// Full run report: config echo, one `epoch` line per evaluation point, one `run` line per
/// seed, and a final [summary] block describing the selected run.
inline std::string format_report(const Graph& g, const std::vector<TrainResult>& runs, std::size_t selected) {
  const TrainResult& best = runs.at(selected);
  std::ostringstream os;
  os << "# modkit run report\n"
     << "graph.nodes=" << g.n() << '\n'
     << "graph.edges=" << g.edge_count() << '\n'
     << "graph.duplicate_edges_dropped=" << g.diagnostics().duplicate_edges << '\n'
     << "graph.self_loops_dropped=" << g.diagnostics().self_loops << '\n'
     << "graph.features=" << (g.features() ? g.features()->cols() : 0) << '\n'
     << "graph.labels=" << (g.labels() ? std::to_string(g.label_count()) : std::string("none")) << '\n'
     << config_block(best.report.config, g.n()) << "runs=" << runs.size() << '\n'
     << "selected_seed=" << best.report.seed << '\n'
     << "[epochs]\n";
  for (const auto& r : best.report.records)
    os << "epoch=" << r.epoch << " loss=" << detail::real(r.loss.total)
       << " reconstruction=" << detail::real(r.loss.reconstruction) << " kl=" << detail::real(r.loss.kl)
       << " q=" << detail::real(r.q) << " nmi=" << detail::opt_real(r.nmi) << " k=" << r.k_used << '\n';
  os << "[runs]\n";
  for (const auto& run : runs) {
    const auto& s = run.report.final_score;
    os << "run seed=" << run.report.seed << " q=" << detail::real(s.q) << " nmi=" << detail::opt_real(s.nmi)
       << " k=" << s.k_used << " final_loss=" << detail::real(run.report.loss_history.back())
       << " wall_seconds=" << detail::real(run.report.wall_seconds) << '\n';
  }
  const auto& s = best.report.final_score;
  os << "[summary]\n"
     << "final.q=" << detail::real(s.q) << '\n'
     << "final.nmi=" << detail::opt_real(s.nmi) << '\n'
     << "final.k=" << s.k_used << '\n'
     << "final.assignment_method=" << s.assignment_method << '\n'
     << "final.first_loss=" << detail::real(best.report.loss_history.front()) << '\n'
     << "final.last_loss=" << detail::real(best.report.loss_history.back()) << '\n'
     << "final.loss_per_entry=" << detail::real(best.report.loss_history.back() / (double(g.n()) * double(g.n())))
     << '\n'
     << "final.wall_seconds=" << detail::real(best.report.wall_seconds) << '\n';
  return os.str();
}

/// node,<prefix>0,<prefix>1,...
inline std::string matrix_csv(const Graph& g, const DenseMatrix& m, const std::string& prefix) {
  std::ostringstream os;
  os << "node";
  for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << prefix << j;
  os << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    os << g.node_ids()[i];
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << detail::real(m(i, j));
    os << '\n';
  }
  return os.str();
}

inline std::string assignment_csv(const Graph& g, const Partition& p) {
  std::ostringstream os;
  os << "node,community\n";
  for (std::size_t i = 0; i < p.n(); ++i) os << g.node_ids()[i] << ',' << p.assignment[i] << '\n';
  return os.str();
}

inline std::string projection_csv(const Graph& g, const DenseMatrix& codes) {
  const DenseMatrix p = pca_2d(codes);
  std::ostringstream os;
  os << "node,pc1,pc2\n";
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    os << g.node_ids()[i] << ',' << detail::real(p(i, 0)) << ',' << detail::real(p(i, 1)) << '\n';
  return os.str();
}

}  // namespace modkit
