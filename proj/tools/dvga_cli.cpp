// Command-line driver: synth, train, eval, summarize, sweep.

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dvga/graph.hpp"
#include "dvga/metrics.hpp"
#include "dvga/runtime.hpp"
#include "dvga/training.hpp"

extern char** environ;

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kSchemaVersion = 1;

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kConfig = 3,
  kData = 4,
  kNumeric = 5,
  kShape = 6,
};

void error_line(const char* kind, const std::string& message) {
  json j = {{"error", kind}, {"message", message}};
  std::cerr << "dvga-error " << j.dump() << "\n";
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw dvga::DataError("cannot create output directory: " + dir.string());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw dvga::DataError("cannot write " + path.string());
  return out;
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// --- synth -------------------------------------------------------------------

struct SynthArgs {
  int factors = 4;
  dvga::Index nodes = 1000;
  int classes = 16;
  double p = 0.0;
  double q = 3e-5;
  double target_degree = -1.0;
  std::uint64_t seed = 0;
  std::string out = "synth";
};

int cmd_synth(const SynthArgs& a) {
  dvga::SyntheticSpec spec;
  spec.factors = a.factors;
  spec.nodes = a.nodes;
  spec.classes = a.classes;
  spec.q = a.q;
  spec.seed = a.seed;
  spec.p = a.p;
  double expected = 0.0;
  if (a.target_degree >= 0) {
    const dvga::DegreeFit fit =
        dvga::tune_p_for_degree(a.nodes, a.classes, a.q, a.target_degree, a.seed, a.factors);
    spec.p = fit.p;
    expected = fit.expected_degree;
  }
  const dvga::Graph g = dvga::synth_graph(spec);
  const fs::path dir(a.out);
  ensure_dir(dir);

  auto edges = open_out(dir / "edges.txt");
  for (const dvga::Edge& e : g.edges()) edges << e.u << " " << e.v << "\n";
  auto features = open_out(dir / "features.txt");
  const dvga::Matrix& x = g.features();
  for (dvga::Index i = 0; i < x.rows(); ++i) {
    features << i;
    for (dvga::Index j = 0; j < x.cols(); ++j) features << " " << x(i, j);
    features << "\n";
  }
  auto labels = open_out(dir / "labels.txt");
  for (dvga::Index i = 0; i < g.num_nodes(); ++i) {
    labels << i;
    for (const auto& view : g.labels()) labels << " " << view[static_cast<std::size_t>(i)];
    labels << "\n";
  }
  for (std::size_t f = 0; f < g.labels().size(); ++f) {
    auto per = open_out(dir / ("labels_factor" + std::to_string(f) + ".txt"));
    for (dvga::Index i = 0; i < g.num_nodes(); ++i) per << i << " " << g.labels()[f][static_cast<std::size_t>(i)] << "\n";
  }
  json manifest = {{"schema_version", kSchemaVersion},
                   {"factors", a.factors},
                   {"nodes", a.nodes},
                   {"classes", a.classes},
                   {"p", spec.p},
                   {"q", a.q},
                   {"seed", a.seed},
                   {"num_edges", g.num_edges()},
                   {"realized_degree", g.mean_degree()}};
  if (a.target_degree >= 0) {
    manifest["target_degree"] = a.target_degree;
    manifest["expected_degree"] = expected;
  }
  open_out(dir / "manifest.json") << manifest.dump(2) << "\n";
  std::cout << manifest.dump() << "\n";
  return kOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
};

int cmd_train(const TrainArgs& a) {
  const dvga::TrainConfig config = dvga::load_config(a.config, a.overrides);
  const fs::path dir(a.out.empty() ? config.output_dir : a.out);
  ensure_dir(dir);
  std::vector<std::string> warnings;
  const dvga::Graph full = dvga::load_dataset(config, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  const dvga::EdgeSplit split = dvga::prepare_split(full, config);
  const dvga::TrainResult result = dvga::train(split, config);

  const std::string hash = dvga::config_hash(config);
  open_out(dir / "config.cfg") << dvga::format_config(config);
  dvga::save_split_pairs(split, (dir / "split.txt").string());
  dvga::Checkpoint cp{config, result.model, result.params, result.history.best_epoch};
  dvga::save_checkpoint((dir / "checkpoint.txt").string(), cp);

  auto history = open_out(dir / "history.jsonl");
  auto curve = open_out(dir / "loss.csv");
  curve << "epoch,recon,kl,indep,total,clamped\n";
  for (const dvga::EpochRecord& r : result.history.epochs) {
    json j = {{"schema_version", kSchemaVersion}, {"type", "epoch"},       {"epoch", r.epoch},
              {"recon", r.loss.recon},            {"kl", r.loss.kl},       {"indep", r.loss.indep},
              {"total", r.loss.total},            {"clamped", r.clamped}};
    history << j.dump() << "\n";
    curve << r.epoch << "," << num(r.loss.recon) << "," << num(r.loss.kl) << "," << num(r.loss.indep) << ","
          << num(r.loss.total) << "," << r.clamped << "\n";
  }
  for (const dvga::EvalRecord& r : result.history.evals) {
    json j = {{"schema_version", kSchemaVersion}, {"type", "eval"}, {"epoch", r.epoch},
              {"val_auc", r.auc},                 {"val_ap", r.ap}};
    history << j.dump() << "\n";
  }
  json summary = {{"schema_version", kSchemaVersion},
                  {"type", "summary"},
                  {"config_hash", hash},
                  {"seed", config.seed},
                  {"epochs", config.epochs},
                  {"best_epoch", result.history.best_epoch},
                  {"best_val_auc", result.history.best_val_auc}};
  history << summary.dump() << "\n";
  std::cout << summary.dump() << "\n";
  return kOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string split;
  std::string tasks = "linkpred";
  int k = 0;
  int label_view = 0;
  std::string out = "metrics.jsonl";
  std::string corr_csv;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_eval(const EvalArgs& a) {
  const dvga::Checkpoint cp = dvga::load_checkpoint(a.checkpoint);
  const dvga::Graph full = dvga::load_dataset(cp.config);
  dvga::EdgeSplit split = dvga::load_split_pairs(full, a.split);
  dvga::apply_feature_source(split, cp.config);
  const dvga::Graph& g = split.train;
  if (g.features().cols() != cp.model.in_features) {
    throw dvga::ShapeError("feature dimension " + std::to_string(g.features().cols()) +
                           " does not match checkpoint input dimension " +
                           std::to_string(cp.model.in_features));
  }
  json record = {{"schema_version", kSchemaVersion},
                 {"config_hash", dvga::config_hash(cp.config)},
                 {"seed", cp.config.seed},
                 {"mode", cp.config.mode == dvga::ModelMode::kDVGA ? "DVGA" : "DGA"},
                 {"channels", cp.config.channels},
                 {"best_epoch", cp.best_epoch}};
  const dvga::Matrix z = dvga::embed(cp.params, cp.model, g.features(), g.arcs());
  for (const std::string& task : split_list(a.tasks)) {
    if (task == "linkpred") {
      if (split.test_pos.empty() || split.test_neg.empty()) throw dvga::DataError("split has no test pairs");
      const dvga::RankMetrics m = dvga::evaluate_link(cp.params, cp.model, g, split.test_pos, split.test_neg);
      record["auc"] = m.auc;
      record["ap"] = m.ap;
    } else if (task == "cluster") {
      if (full.labels().empty()) throw dvga::DataError("dataset has no labels for clustering");
      if (a.label_view < 0 || static_cast<std::size_t>(a.label_view) >= full.labels().size()) {
        throw dvga::DataError("label view out of range");
      }
      const std::vector<int>& truth = full.labels()[static_cast<std::size_t>(a.label_view)];
      int k = a.k;
      if (k <= 0) k = *std::max_element(truth.begin(), truth.end()) + 1;
      const dvga::KMeansResult km = dvga::kmeans(z, k, cp.config.seed);
      const std::vector<int> matched = dvga::apply_matching(km.labels, truth);
      const dvga::ClusterMetrics m = dvga::clustering_metrics(matched, truth);
      record["k"] = k;
      record["acc"] = m.acc;
      record["precision"] = m.precision;
      record["f1"] = m.f1;
      record["nmi"] = m.nmi;
      record["ari"] = m.ari;
      if (m.degenerate) record["nmi_degenerate"] = true;
    } else if (task == "correlation") {
      const dvga::CorrelationSummary c = dvga::latent_correlation(z, cp.model.channels);
      record["corr_within"] = c.within;
      record["corr_between"] = c.between;
      record["block_ratio"] = c.ratio;
      record["constant_columns"] = c.constant_columns.size();
      const std::string path = a.corr_csv.empty() ? (fs::path(a.out).replace_extension("") += "_corr.csv").string()
                                                  : a.corr_csv;
      auto csv = open_out(path);
      for (dvga::Index i = 0; i < c.matrix.rows(); ++i) {
        for (dvga::Index j = 0; j < c.matrix.cols(); ++j) csv << (j ? "," : "") << num(c.matrix(i, j));
        csv << "\n";
      }
    } else {
      throw dvga::ConfigError({"unknown task '" + task + "' (expected linkpred, cluster, correlation)"});
    }
  }
  open_out(a.out, std::ios::app) << record.dump() << "\n";
  std::cout << record.dump() << "\n";
  return kOk;
}

// --- summarize ---------------------------------------------------------------

int cmd_summarize(const std::vector<std::string>& inputs, const std::string& out_path) {
  // config_hash -> metric -> values, in first-seen order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<std::string, std::vector<double>>>> groups;
  for (const std::string& path : inputs) {
    std::ifstream in(path);
    if (!in) throw dvga::DataError("cannot read " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!j.contains("config_hash")) continue;
      const std::string hash = j["config_hash"];
      if (!groups.count(hash)) order.push_back(hash);
      auto& metrics = groups[hash];
      for (const auto& [key, value] : j.items()) {
        if (!value.is_number_float() || key == "seed") continue;
        auto it = std::find_if(metrics.begin(), metrics.end(), [&](const auto& m) { return m.first == key; });
        if (it == metrics.end()) {
          metrics.push_back({key, {}});
          it = std::prev(metrics.end());
        }
        it->second.push_back(value.get<double>());
      }
    }
  }
  std::ostringstream csv;
  csv << "config_hash,metric,n,mean,stderr\n";
  for (const std::string& hash : order) {
    for (const auto& [metric, values] : groups[hash]) {
      const dvga::MeanStderr s = dvga::mean_stderr(values);
      csv << hash << "," << metric << "," << values.size() << "," << num(s.mean) << "," << num(s.stderr_) << "\n";
    }
  }
  if (out_path.empty()) {
    std::cout << csv.str();
  } else {
    open_out(out_path) << csv.str();
  }
  return kOk;
}

// --- sweep -------------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::vector<std::string> grid;
  std::vector<std::string> overrides;
  std::string out = "sweep";
  int jobs = 1;
};

int cmd_sweep(const SweepArgs& a) {
  std::vector<std::pair<std::string, std::vector<std::string>>> grid;
  for (const std::string& g : a.grid) {
    const auto eq = g.find('=');
    if (eq == std::string::npos) throw dvga::ConfigError({"grid entry must be key=v1,v2,...: " + g});
    grid.emplace_back(g.substr(0, eq), split_list(g.substr(eq + 1)));
  }
  const auto points = dvga::expand_grid(grid);
  // Validate every point before launching anything.
  std::vector<std::string> problems;
  for (const auto& point : points) {
    std::vector<std::string> overrides = a.overrides;
    overrides.insert(overrides.end(), point.begin(), point.end());
    try {
      dvga::load_config(a.config, overrides);
    } catch (const dvga::ConfigError& e) {
      for (const std::string& p : e.problems()) problems.push_back(p);
    }
  }
  if (!problems.empty()) throw dvga::ConfigError(problems);
  ensure_dir(a.out);

  const std::string self = fs::read_symlink("/proc/self/exe").string();
  std::vector<pid_t> running;
  int failures = 0;
  auto reap_one = [&]() {
    int status = 0;
    const pid_t pid = ::wait(&status);
    if (pid <= 0) return;
    running.erase(std::remove(running.begin(), running.end(), pid), running.end());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
  };
  auto index = open_out(fs::path(a.out) / "runs.txt");
  for (std::size_t i = 0; i < points.size(); ++i) {
    const std::string run_dir = (fs::path(a.out) / ("run" + std::to_string(i))).string();
    std::vector<std::string> args = {self, "train", "--config", a.config, "--out", run_dir};
    std::string described;
    for (const std::string& o : a.overrides) args.insert(args.end(), {"--set", o});
    for (const std::string& o : points[i]) {
      args.insert(args.end(), {"--set", o});
      described += " " + o;
    }
    index << "run" << i << described << "\n";
    std::vector<char*> argv;
    for (std::string& s : args) argv.push_back(s.data());
    argv.push_back(nullptr);
    while (static_cast<int>(running.size()) >= std::max(1, a.jobs)) reap_one();
    pid_t pid = 0;
    if (posix_spawn(&pid, self.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw dvga::DataError("failed to launch run " + std::to_string(i));
    }
    running.push_back(pid);
  }
  while (!running.empty()) reap_one();
  if (failures > 0) {
    error_line("sweep", std::to_string(failures) + " of " + std::to_string(points.size()) + " runs failed");
    return kFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  dvga::tune_allocator();
  CLI::App app{"Disentangled graph auto-encoders: synthesis, training and evaluation"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-factor graph");
  s->add_option("--factors", synth.factors, "Number of latent factors")->capture_default_str();
  s->add_option("--nodes", synth.nodes, "Number of nodes")->capture_default_str();
  s->add_option("--classes", synth.classes, "Classes per factor")->capture_default_str();
  s->add_option("--p", synth.p, "Intra-class edge probability")->capture_default_str();
  s->add_option("--q", synth.q, "Inter-class edge probability")->capture_default_str();
  s->add_option("--target-degree", synth.target_degree, "Solve p for this expected mean degree");
  s->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
  s->add_option("--out", synth.out, "Output directory")->capture_default_str();

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model from a config file");
  t->add_option("--config", train.config, "Config file (key=value)")->required();
  t->add_option("--set", train.overrides, "Override key=value (repeatable)");
  t->add_option("--out", train.out, "Output directory (default: output_dir key)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint file")->required();
  e->add_option("--split", eval.split, "Split file written by train")->required();
  e->add_option("--tasks", eval.tasks, "Comma list of linkpred,cluster,correlation")->capture_default_str();
  e->add_option("--k", eval.k, "Clusters for k-means (default: number of classes)");
  e->add_option("--label-view", eval.label_view, "Label column used for clustering")->capture_default_str();
  e->add_option("--out", eval.out, "JSON-lines file to append to")->capture_default_str();
  e->add_option("--corr-csv", eval.corr_csv, "Correlation matrix CSV path");

  std::vector<std::string> summarize_in;
  std::string summarize_out;
  auto* m = app.add_subcommand("summarize", "Aggregate JSON-lines metrics into mean/stderr CSV");
  m->add_option("inputs", summarize_in, "Metric files")->required();
  m->add_option("--out", summarize_out, "CSV output (default: stdout)");

  SweepArgs sweep;
  auto* w = app.add_subcommand("sweep", "Train every point of a parameter grid");
  w->add_option("--config", sweep.config, "Base config file")->required();
  w->add_option("--grid", sweep.grid, "key=v1,v2,... (repeatable)")->required();
  w->add_option("--set", sweep.overrides, "Fixed override key=value (repeatable)");
  w->add_option("--out", sweep.out, "Sweep directory")->capture_default_str();
  w->add_option("--jobs", sweep.jobs, "Parallel training processes")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    if (err.get_exit_code() != 0) error_line("usage", err.what());
    return err.get_exit_code() == 0 ? kOk : (app.exit(err), kUsage);
  }

  try {
    if (s->parsed()) return cmd_synth(synth);
    if (t->parsed()) return cmd_train(train);
    if (e->parsed()) return cmd_eval(eval);
    if (m->parsed()) return cmd_summarize(summarize_in, summarize_out);
    if (w->parsed()) return cmd_sweep(sweep);
  } catch (const dvga::ConfigError& err) {
    for (const std::string& p : err.problems()) error_line("config", p);
    return kConfig;
  } catch (const dvga::DataError& err) {
    error_line("data", err.what());
    return kData;
  } catch (const dvga::NumericError& err) {
    error_line("numeric", err.what());
    return kNumeric;
  } catch (const dvga::ShapeError& err) {
    error_line("shape", err.what());
    return kShape;
  } catch (const std::exception& err) {
    error_line("internal", err.what());
    return kFailure;
  }
  return kFailure;
}
