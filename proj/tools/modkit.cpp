// modkit: community detection by modularity reconstruction with (V)GAER.
//
// Exit codes: 0 success, 1 bad flags, 2 input load failure, 3 training aborted on a
// non-finite loss, 4 an oracle check failed.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include "CLI11.hpp"
#endif
#include "modkit.hpp"

namespace fs = std::filesystem;
using namespace modkit;

namespace {

enum Exit { ok = 0, bad_flags = 1, load_failure = 2, aborted = 3, check_failed = 4 };

struct UsageError : Error {
  using Error::Error;
};
struct LoadError : Error {
  using Error::Error;
};

struct Flags {
  std::string graph, features, labels, out;
  std::string model = "vgaer";
  std::string decoder;
  std::string assignment = "kmeans";
  std::string sampled;
  std::string against = "dot";
  int clusters = 2, hidden = 32, latent = 16, epochs = 200, eval_every = 1, seeds = 1, kmin = 2, kmax = 0;
  double lr = 0.01;
  std::optional<double> kl_weight;
  std::uint64_t seed = 0;
  bool row_normalize = false, cosine = false, eval_sampled_z = false, arithmetic_nmi = false;
};

void add_common(CLI::App* cmd, Flags& f, bool graph_required) {
  auto* g = cmd->add_option("--graph", f.graph, "Edge list file");
  if (graph_required) g->required();
  cmd->add_option("--features", f.features, "Comma-separated node features");
  cmd->add_flag("--row-normalize", f.row_normalize, "Scale each feature row to unit L1 norm");
  cmd->add_option("--labels", f.labels, "Comma-separated ground-truth labels");
  cmd->add_option("--model", f.model, "vgaer or gaer")->check(CLI::IsMember({"vgaer", "gaer"}));
  cmd->add_option("--decoder", f.decoder, "ce, dot or fnorm (default: ce for vgaer, fnorm for gaer)")
      ->check(CLI::IsMember({"ce", "dot", "fnorm"}));
  cmd->add_option("--clusters", f.clusters, "Number of communities K")->check(CLI::PositiveNumber);
  cmd->add_option("--assignment", f.assignment, "kmeans or argmax")->check(CLI::IsMember({"kmeans", "argmax"}));
  cmd->add_flag("--cosine", f.cosine, "Cluster with cosine distance");
  cmd->add_option("--hidden", f.hidden, "Hidden width")->check(CLI::PositiveNumber);
  cmd->add_option("--latent", f.latent, "Latent width")->check(CLI::PositiveNumber);
  cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--eval-every", f.eval_every, "Cluster and score every N epochs")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  cmd->add_option("--kl-weight", f.kl_weight, "KL weight (default 1/n)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--seeds", f.seeds, "Independent runs, seeds seed..seed+N-1")->check(CLI::PositiveNumber);
  cmd->add_option("--sampled", f.sampled, "Neighbour-sampled mini-batch mode: k,p");
  cmd->add_flag("--eval-sampled-z", f.eval_sampled_z, "Cluster a sampled Z instead of mu");
  cmd->add_flag("--nmi-arithmetic", f.arithmetic_nmi, "Normalise NMI by the arithmetic mean of entropies");
  cmd->add_option("--out", f.out, "Directory for report and tables");
}

Objective parse_objective(const std::string& s) {
  if (s == "ce") return Objective::cross_entropy;
  if (s == "dot") return Objective::dot;
  return Objective::fnorm;
}

TrainConfig make_config(const Flags& f) {
  TrainConfig c;
  c.model = f.model == "gaer" ? ModelKind::gaer : ModelKind::vgaer;
  if (!f.decoder.empty()) c.decoder = parse_objective(f.decoder);
  c.clusters = f.clusters;
  c.assignment = f.assignment == "argmax" ? AssignmentMethod::argmax : AssignmentMethod::kmeans;
  c.kmeans.distance = f.cosine ? Distance::cosine : Distance::squared_euclidean;
  c.d_hidden = f.hidden;
  c.d_latent = f.latent;
  c.epochs = f.epochs;
  c.eval_every = f.eval_every;
  c.lr = f.lr;
  c.kl_weight = f.kl_weight;
  c.seed = f.seed;
  c.evaluate_sampled_z = f.eval_sampled_z;
  c.nmi_normalization = f.arithmetic_nmi ? NmiNormalization::arithmetic : NmiNormalization::geometric;
  if (!f.sampled.empty()) {
    const auto comma = f.sampled.find(',');
    SampledMode s;
    try {
      if (comma == std::string::npos) throw std::invalid_argument("no comma");
      const long k = std::stol(f.sampled.substr(0, comma));
      const long p = std::stol(f.sampled.substr(comma + 1));
      if (k < 1 || p < 1) throw std::invalid_argument("non-positive");
      s.k = static_cast<std::size_t>(k);
      s.batch_size = static_cast<std::size_t>(p);
    } catch (const std::exception&) {
      throw UsageError("--sampled expects k,p with both positive, got '" + f.sampled + "'");
    }
    c.sampled = s;
  }
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open '" + path + "'");
  return in;
}

Graph load_dataset(const Flags& f) {
  try {
    auto in = open_input(f.graph);
    Graph g = load_edge_list(in);
    if (!f.features.empty()) {
      auto fin = open_input(f.features);
      g = load_features(fin, g, FeatureOptions{f.row_normalize});
    }
    if (!f.labels.empty()) {
      auto lin = open_input(f.labels);
      g = load_labels(lin, g);
    }
    return g;
  } catch (const LoadError&) {
    throw;
  } catch (const ParseError& e) {
    throw LoadError(f.graph + ": " + e.what());
  } catch (const Error& e) {
    throw LoadError(e.what());
  }
}

ModularityContext build_context(const Graph& g) {
  try {
    return ModularityContext::build(g);
  } catch (const Error& e) {
    throw LoadError(e.what());
  }
}

void write_outputs(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& files) {
  fs::create_directories(dir);
  for (const auto& [name, content] : files) write_atomic(dir / name, content);
}

int cmd_train(const Flags& f) {
  const TrainConfig config = make_config(f);
  const Graph g = load_dataset(f);
  const ModularityContext ctx = build_context(g);
  const auto runs = train_seeds(g, ctx, config, f.seeds);
  const std::size_t best = best_run(runs);
  const std::string report = format_report(g, runs, best);
  if (f.out.empty()) {
    std::cout << report;
    return ok;
  }
  const DenseMatrix codes = embed(g, ctx, runs[best].params, runs[best].report.config);
  write_outputs(f.out, {{"report.txt", report},
                        {"embeddings.csv", matrix_csv(g, codes, "z")},
                        {"assignment.csv", assignment_csv(g, runs[best].report.final_partition)},
                        {"projection.csv", projection_csv(g, codes)}});
  const auto& s = runs[best].report.final_score;
  std::cout << "q=" << s.q << " nmi=" << (s.nmi ? std::to_string(*s.nmi) : "na") << " k=" << s.k_used
            << " seed=" << runs[best].report.seed << "\nwrote " << f.out << "/{report.txt,embeddings.csv,"
            << "assignment.csv,projection.csv}\n";
  return ok;
}

int cmd_ablate(const Flags& f) {
  TrainConfig base = make_config(f);
  const Graph g = load_dataset(f);
  const ModularityContext ctx = build_context(g);
  TrainConfig other = base;
  other.decoder = parse_objective(f.against);
  const auto a = train_seeds(g, ctx, base, f.seeds);
  const auto b = train_seeds(g, ctx, other, f.seeds);
  const auto& sa = a[best_run(a)].report.final_score;
  const auto& sb = b[best_run(b)].report.final_score;

  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "decoder,nmi,q\n";
  auto row = [&](const TrainConfig& c, const ScoreReport& s) {
    os << to_string(c.objective()) << ',' << (s.nmi ? std::to_string(*s.nmi) : "na") << ',' << s.q << '\n';
  };
  row(base, sa);
  row(other, sb);
  if (sa.nmi && sb.nmi) os << "delta.nmi=" << *sa.nmi - *sb.nmi << '\n';
  os << "delta.q=" << sa.q - sb.q << '\n';
  std::cout << os.str();
  if (!f.out.empty())
    write_outputs(f.out, {{"ablation.txt", os.str()},
                          {"report_" + to_string(base.objective()) + ".txt", format_report(g, a, best_run(a))},
                          {"report_" + to_string(other.objective()) + "_against.txt",
                           format_report(g, b, best_run(b))}});
  return ok;
}

int cmd_sweep(const Flags& f) {
  const TrainConfig config = make_config(f);
  const Graph g = load_dataset(f);
  if (f.kmax < f.kmin || f.kmin < 2 || static_cast<std::size_t>(f.kmax) > g.n())
    throw UsageError("--kmin/--kmax must satisfy 2 <= kmin <= kmax <= n");
  const ModularityContext ctx = build_context(g);
  const auto points = sweep_k(g, ctx, config, f.kmin, f.kmax, f.seeds);
  std::ostringstream os;
  os << "k,q,nmi,seed\n";
  for (const auto& p : points)
    os << p.k << ',' << detail::real(p.q) << ',' << detail::opt_real(p.nmi) << ',' << p.seed << '\n';
  std::cout << os.str();
  if (!f.out.empty()) write_outputs(f.out, {{"sweep.csv", os.str()}});
  return ok;
}

// Best pipeline Q over K = 1..k_max.
double pipeline_best_q(const Graph& g, const TrainConfig& base, int k_max, int seeds) {
  const ModularityContext ctx = ModularityContext::build(g);
  double best = -1.0;
  for (int k = 1; k <= k_max; ++k) {
    TrainConfig c = base;
    c.clusters = k;
    for (const auto& r : train_seeds(g, ctx, c, seeds)) best = std::max(best, r.report.final_score.q);
  }
  return best;
}

int cmd_oracle(const Flags& f) {
  TrainConfig config = make_config(f);
  std::vector<std::pair<std::string, Graph>> suite;
  if (!f.graph.empty()) {
    suite.emplace_back(f.graph, load_dataset(f));
    if (suite.back().second.n() > kBruteForceMaxNodes)
      throw UsageError("oracle graphs are capped at " + std::to_string(kBruteForceMaxNodes) + " nodes");
  } else {
    suite.emplace_back("triangle", generators::triangle());
    suite.emplace_back("disjoint_triangles", generators::disjoint_triangles());
    suite.emplace_back("bridged_triangles", generators::bridged_triangles());
  }
  bool all_pass = true;
  std::cout << "graph,q_star,pipeline_q,gap\n";
  for (const auto& [name, g] : suite) {
    const int k_max = f.kmax > 0 ? std::min<int>(f.kmax, static_cast<int>(g.n())) : static_cast<int>(g.n());
    const BruteForceResult bf = brute_force_best_partition(g, k_max);
    const double q = pipeline_best_q(g, config, k_max, f.seeds);
    std::cout << name << ',' << detail::real(bf.q_star) << ',' << detail::real(q) << ','
              << detail::real(bf.q_star - q) << '\n';
  }

  // Double-sum Q against the trace form on random graphs and partitions.
  double worst_form = 0.0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    Rng rng(derive_seed(f.seed, 100, t));
    const int n = 2 + static_cast<int>(rng.below(49));
    Graph g = generators::erdos_renyi(n, rng.uniform(0.05, 0.5), rng.next_u64());
    if (g.edge_count() == 0) g = Graph::from_edges(n, {{0, 1}});
    const int k = 1 + static_cast<int>(rng.below(n));
    std::vector<int> raw(n);
    for (auto& r : raw) r = static_cast<int>(rng.below(k));
    const Partition p = Partition::compact(raw);
    const double q1 = modularity_q(g, p);
    const double q3 = modularity_trace(modularity_matrix(g), one_hot(p), static_cast<std::int64_t>(g.edge_count()));
    worst_form = std::max(worst_form, std::abs(q1 - q3));
  }
  const bool form_ok = worst_form < 1e-10;
  all_pass = all_pass && form_ok;
  std::cout << "form_equivalence max_abs_diff=" << detail::real(worst_form) << ' ' << (form_ok ? "PASS" : "FAIL")
            << '\n';

  // Analytic gradients against central differences on random small instances.
  double worst_grad = 0.0;
  for (std::uint64_t t = 0; t < 20; ++t) {
    Rng rng(derive_seed(f.seed, 200, t));
    const int n = 3 + static_cast<int>(rng.below(6));
    Graph g = generators::erdos_renyi(n, 0.5, rng.next_u64());
    if (g.edge_count() == 0) g = Graph::from_edges(n, {{0, 1}});
    const ModularityContext ctx = ModularityContext::build(g);
    const int h = 1 + static_cast<int>(rng.below(4));
    const int l = 1 + static_cast<int>(rng.below(3));
    for (ModelKind kind : {ModelKind::vgaer, ModelKind::gaer}) {
      const ModelParams params = ModelParams::init(kind, ctx.b0.cols(), h, l, rng);
      const Objective obj = kind == ModelKind::vgaer ? Objective::cross_entropy : Objective::fnorm;
      const LossWeights w{1.0, kind == ModelKind::vgaer ? 1.0 / n : 0.0};
      const DenseMatrix eps = kind == ModelKind::vgaer ? gaussian_sample(n, l, rng) : DenseMatrix();
      worst_grad = std::max(worst_grad, gradient_check(ctx, params, eps, obj, w));
    }
  }
  const bool grad_ok = worst_grad < 1e-4;
  all_pass = all_pass && grad_ok;
  std::cout << "gradient_check max_rel_err=" << detail::real(worst_grad) << ' ' << (grad_ok ? "PASS" : "FAIL")
            << '\n';
  return all_pass ? ok : check_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modkit: community detection by modularity reconstruction"};
  app.require_subcommand(1);
  Flags f;
  auto* train = app.add_subcommand("train", "Train and cluster; report Q and NMI");
  add_common(train, f, true);
  auto* ablate = app.add_subcommand("ablate", "Compare two reconstruction decoders under identical seeds");
  add_common(ablate, f, true);
  ablate->add_option("--against", f.against, "Decoder to compare with (default dot)")
      ->check(CLI::IsMember({"ce", "dot", "fnorm"}));
  auto* sweep = app.add_subcommand("sweep", "Train once per K in [kmin, kmax] and report Q");
  add_common(sweep, f, true);
  sweep->add_option("--kmin", f.kmin, "Smallest K")->required();
  sweep->add_option("--kmax", f.kmax, "Largest K")->required();
  auto* oracle = app.add_subcommand("oracle", "Brute-force, form-equivalence and gradient checks");
  add_common(oracle, f, false);
  oracle->add_option("--kmax", f.kmax, "Largest community count searched (default n)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    const auto parsed = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
    return bad_flags;
  }

  try {
    if (*train) return cmd_train(f);
    if (*ablate) return cmd_ablate(f);
    if (*sweep) return cmd_sweep(f);
    return cmd_oracle(f);
  } catch (const UsageError& e) {
    const auto parsed = app.get_subcommands();
    std::cerr << "error: " << e.what() << "\n\n" << (parsed.empty() ? app.help() : parsed.front()->help());
    return bad_flags;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << '\n';
    return load_failure;
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "; last finite loss " << e.last_finite().total << '\n';
    return aborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return bad_flags;
  }
}
