#include "dvga/training.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dvga/optim.hpp"

namespace dvga {

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
  std::string out = "invalid configuration";
  for (const std::string& p : problems) out += "\n  " + p;
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <typename T>
bool parse_int(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

bool parse_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0") {
    out = false;
    return true;
  }
  return false;
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  /// Returns false when the value cannot be parsed.
  std::function<bool(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field int_field(const char* key, T TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::to_string(c.*member); },
          [member](TrainConfig& c, const std::string& v) { return parse_int(v, c.*member); }};
}

Field double_field(const char* key, double TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return format_double(c.*member); },
          [member](TrainConfig& c, const std::string& v) { return parse_double(v, c.*member); }};
}

Field bool_field(const char* key, bool TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](TrainConfig& c, const std::string& v) { return parse_bool(v, c.*member); }};
}

Field string_field(const char* key, std::string TrainConfig::*member) {
  return {key, [member](const TrainConfig& c) { return c.*member; },
          [member](TrainConfig& c, const std::string& v) {
            c.*member = v;
            return true;
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"mode", [](const TrainConfig& c) { return std::string(c.mode == ModelMode::kDVGA ? "DVGA" : "DGA"); },
       [](TrainConfig& c, const std::string& v) {
         if (v == "DGA") c.mode = ModelMode::kDGA;
         else if (v == "DVGA") c.mode = ModelMode::kDVGA;
         else return false;
         return true;
       }},
      int_field("channels", &TrainConfig::channels),
      int_field("channel_dim", &TrainConfig::channel_dim),
      int_field("layers", &TrainConfig::layers),
      int_field("iterations", &TrainConfig::iterations),
      int_field("flow_steps", &TrainConfig::flow_steps),
      int_field("flow_split", &TrainConfig::flow_split),
      double_field("lambda", &TrainConfig::lambda),
      double_field("learning_rate", &TrainConfig::learning_rate),
      double_field("dropout", &TrainConfig::dropout),
      int_field("epochs", &TrainConfig::epochs),
      int_field("seed", &TrainConfig::seed),
      int_field("eval_every", &TrainConfig::eval_every),
      double_field("val_frac", &TrainConfig::val_frac),
      double_field("test_frac", &TrainConfig::test_frac),
      string_field("edges", &TrainConfig::edges),
      string_field("features", &TrainConfig::features),
      string_field("labels", &TrainConfig::labels),
      {"feature_source",
       [](const TrainConfig& c) {
         switch (c.feature_source) {
           case FeatureSource::kIdentity: return std::string("identity");
           case FeatureSource::kAdjacency: return std::string("adjacency");
           default: return std::string("file");
         }
       },
       [](TrainConfig& c, const std::string& v) {
         if (v == "file") c.feature_source = FeatureSource::kFile;
         else if (v == "identity") c.feature_source = FeatureSource::kIdentity;
         else if (v == "adjacency") c.feature_source = FeatureSource::kAdjacency;
         else return false;
         return true;
       }},
      bool_field("row_normalize", &TrainConfig::row_normalize),
      bool_field("synthetic", &TrainConfig::synthetic),
      int_field("synth_factors", &TrainConfig::synth_factors),
      int_field("synth_nodes", &TrainConfig::synth_nodes),
      int_field("synth_classes", &TrainConfig::synth_classes),
      double_field("synth_p", &TrainConfig::synth_p),
      double_field("synth_q", &TrainConfig::synth_q),
      double_field("synth_target_degree", &TrainConfig::synth_target_degree),
      int_field("synth_seed", &TrainConfig::synth_seed),
      string_field("output_dir", &TrainConfig::output_dir),
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const Field& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

void apply_line(TrainConfig& config, const std::string& raw, const std::string& where,
                std::vector<std::string>& problems) {
  const std::string line = trim(raw.substr(0, raw.find('#')));
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    problems.push_back(where + ": expected key=value, got '" + line + "'");
    return;
  }
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  const Field* field = find_field(key);
  if (field == nullptr) {
    problems.push_back(where + ": unknown key '" + key + "'");
    return;
  }
  if (!field->set(config, value)) {
    problems.push_back(where + ": bad value '" + value + "' for key '" + key + "'");
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_problems(problems)), problems_(std::move(problems)) {}

std::vector<std::string> TrainConfig::problems() const {
  std::vector<std::string> out;
  auto require = [&out](bool ok, const std::string& message) {
    if (!ok) out.push_back(message);
  };
  // K = 1, M = 0 and lambda = 0 are the ablation settings, admitted on top
  // of the search ranges.
  require(channels >= 1 && channels <= 10, "channels must be in [1, 10]");
  require(channel_dim >= 1, "channel_dim must be >= 1");
  require(layers >= 1 && layers <= 6, "layers must be in [1, 6]");
  require(iterations >= 1 && iterations <= 10, "iterations must be in [1, 10]");
  require(flow_steps >= 0 && flow_steps <= 5, "flow_steps must be in [0, 5]");
  require(flow_split >= 0 && (flow_split == 0 || flow_split < channel_dim),
          "flow_split must be 0 (auto) or in [1, channel_dim - 1]");
  if (mode == ModelMode::kDVGA && flow_steps > 0) {
    require(channel_dim >= 2, "flows need channel_dim >= 2");
  }
  require(lambda == 0.0 || (lambda >= 1e-5 && lambda <= 1.0), "lambda must be 0 or in [1e-5, 1]");
  require(learning_rate > 0.0, "learning_rate must be > 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(epochs >= 0, "epochs must be >= 0");
  require(eval_every >= 1, "eval_every must be >= 1");
  require(val_frac >= 0.0 && test_frac >= 0.0 && val_frac + test_frac < 1.0,
          "val_frac and test_frac must be >= 0 with sum < 1");
  if (synthetic) {
    require(synth_factors >= 1, "synth_factors must be >= 1");
    require(synth_nodes >= 2, "synth_nodes must be >= 2");
    require(synth_classes >= 1 && synth_classes <= synth_nodes, "synth_classes must be in [1, synth_nodes]");
    require(synth_p >= 0.0 && synth_p <= 1.0, "synth_p must be in [0, 1]");
    require(synth_q >= 0.0 && synth_q <= 1.0, "synth_q must be in [0, 1]");
    require(synth_target_degree >= 0.0, "synth_target_degree must be >= 0");
  } else {
    require(!edges.empty(), "edges is required unless synthetic=true");
  }
  return out;
}

void TrainConfig::validate() const {
  std::vector<std::string> p = problems();
  if (!p.empty()) throw ConfigError(std::move(p));
}

ModelConfig TrainConfig::model(Index in_features) const {
  ModelConfig m;
  m.mode = mode;
  m.in_features = in_features;
  m.channels = channels;
  m.channel_dim = channel_dim;
  m.layers = layers;
  m.iterations = iterations;
  m.flow_steps = mode == ModelMode::kDVGA ? flow_steps : 0;
  m.flow_split = flow_split;
  m.dropout = dropout;
  return m;
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Field& f : fields()) out.emplace_back(f.key, f.get(config));
  return out;
}

std::string format_config(const TrainConfig& config) {
  std::string out;
  for (const auto& [k, v] : config_entries(config)) out += k + "=" + v + "\n";
  return out;
}

TrainConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  TrainConfig config;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    apply_line(config, line, "line " + std::to_string(number), problems);
  }
  for (const std::string& o : overrides) apply_line(config, o, "--set " + o, problems);
  for (const std::string& p : config.problems()) problems.push_back(p);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return config;
}

TrainConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), overrides);
}

std::string config_hash(const TrainConfig& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : format_config(config)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::vector<std::string>> expand_grid(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& grid) {
  std::vector<std::vector<std::string>> out = {{}};
  for (const auto& [key, values] : grid) {
    std::vector<std::vector<std::string>> next;
    for (const auto& partial : out) {
      for (const std::string& v : values) {
        auto extended = partial;
        extended.push_back(key + "=" + v);
        next.push_back(std::move(extended));
      }
    }
    out = std::move(next);
  }
  return out;
}

// ---------------------------------------------------------------------------

RankMetrics evaluate_link(const ParamStore& params, const ModelConfig& model, const Graph& train,
                          const std::vector<Edge>& pos, const std::vector<Edge>& neg) {
  const Matrix z = embed(params, model, train.features(), train.arcs());
  const Eigen::VectorXd sp = decode_pair_logits(z, model.channels, pos);
  const Eigen::VectorXd sn = decode_pair_logits(z, model.channels, neg);
  return rank_metrics(std::span<const double>(sp.data(), static_cast<std::size_t>(sp.size())),
                      std::span<const double>(sn.data(), static_cast<std::size_t>(sn.size())));
}

namespace {

void check_report(const LossReport& r, int epoch) {
  const std::pair<const char*, double> parts[] = {
      {"recon", r.recon}, {"kl", r.kl}, {"indep", r.indep}, {"total", r.total}};
  for (const auto& [name, value] : parts) {
    if (!std::isfinite(value)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite " + name + " loss");
    }
  }
}

void check_gradients(const GradMap& grads, int epoch) {
  for (const auto& [name, g] : grads) {
    if (!all_finite(g)) {
      throw NumericError("epoch " + std::to_string(epoch) + ": non-finite gradient for " + name);
    }
  }
}

}  // namespace

TrainResult train(const EdgeSplit& split, const TrainConfig& config) {
  config.validate();
  const Graph& g = split.train;
  TrainResult result;
  result.model = config.model(g.features().cols());
  Rng rng(config.seed);
  ParamStore params = init_model(result.model, rng);
  AdamOptions ao;
  ao.learning_rate = config.learning_rate;
  Adam adam(ao);
  // Only the train adjacency ever enters the loss.
  const GraphInputs inputs = make_inputs(g);
  LossOptions lo;
  lo.lambda = config.lambda;
  lo.forward.training = true;

  RunHistory& history = result.history;
  const bool has_val = !split.val_pos.empty() && !split.val_neg.empty();
  bool have_best = false;
  result.params = params;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Tape tape;
    BoundParams bound(tape, params, /*trainable=*/true);
    LossPass pass;
    try {
      pass = model_loss(bound, result.model, inputs, lo, rng);
    } catch (const NumericError& e) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
    }
    check_report(pass.objective.report, epoch);
    const GradMap grads = bound.gradients(tape.backward(pass.objective.total));
    check_gradients(grads, epoch);
    adam.step(params, grads);
    history.epochs.push_back({epoch, pass.objective.report, pass.pass.clamped});

    if (has_val && (epoch % config.eval_every == 0 || epoch == config.epochs)) {
      const RankMetrics m = evaluate_link(params, result.model, g, split.val_pos, split.val_neg);
      history.evals.push_back({epoch, m.auc, m.ap});
      if (!have_best || m.auc > history.best_val_auc) {
        have_best = true;
        history.best_val_auc = m.auc;
        history.best_epoch = epoch;
        result.params = params;
      }
    }
  }
  result.final_params = params;
  if (!have_best) {
    history.best_epoch = config.epochs;
    result.params = params;
  }
  return result;
}

TrainResult train_dvga(const EdgeSplit& split, const TrainConfig& config) {
  if (config.mode != ModelMode::kDVGA) throw ConfigError({"train_dvga requires mode=DVGA"});
  return train(split, config);
}

TrainResult train_dga(const EdgeSplit& split, const TrainConfig& config) {
  if (config.mode != ModelMode::kDGA) throw ConfigError({"train_dga requires mode=DGA"});
  return train(split, config);
}

// ---------------------------------------------------------------------------

Graph load_dataset(const TrainConfig& config, std::vector<std::string>* warnings) {
  if (config.synthetic) {
    SyntheticSpec spec;
    spec.factors = config.synth_factors;
    spec.nodes = config.synth_nodes;
    spec.classes = config.synth_classes;
    spec.q = config.synth_q;
    spec.seed = config.synth_seed;
    spec.p = config.synth_target_degree > 0
                 ? tune_p_for_degree(spec.nodes, spec.classes, spec.q, config.synth_target_degree,
                                     spec.seed, spec.factors)
                       .p
                 : config.synth_p;
    return synth_graph(spec);
  }
  LoadOptions options;
  options.row_normalize_features = config.row_normalize;
  std::optional<std::string> features;
  if (config.feature_source == FeatureSource::kFile && !config.features.empty()) features = config.features;
  std::optional<std::string> labels;
  if (!config.labels.empty()) labels = config.labels;
  return load_graph(config.edges, features, labels, options, warnings);
}

void use_train_adjacency_features(EdgeSplit& split) {
  split.train = split.train.with_features(split.train.adjacency());
}

void apply_feature_source(EdgeSplit& split, const TrainConfig& config) {
  const bool adjacency = config.feature_source == FeatureSource::kAdjacency ||
                         (config.synthetic && config.feature_source == FeatureSource::kFile);
  if (adjacency) {
    use_train_adjacency_features(split);
  } else if (config.feature_source == FeatureSource::kIdentity) {
    const Index n = split.train.num_nodes();
    split.train = split.train.with_features(Matrix::Identity(n, n));
  }
}

EdgeSplit prepare_split(const Graph& full, const TrainConfig& config) {
  EdgeSplit split = split_edges(full, config.val_frac, config.test_frac, config.seed);
  apply_feature_source(split, config);
  return split;
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << "dvga-checkpoint " << kCheckpointVersion << "\n";
  out << "in_features " << checkpoint.model.in_features << "\n";
  out << "best_epoch " << checkpoint.best_epoch << "\n";
  const auto entries = config_entries(checkpoint.config);
  out << "config " << entries.size() << "\n";
  for (const auto& [k, v] : entries) out << k << "=" << v << "\n";
  out << "params " << checkpoint.params.size() << "\n";
  char buf[64];
  for (const auto& [name, m] : checkpoint.params.entries()) {
    out << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%a", m(i, j));
        out << (j ? " " : "") << buf;
      }
      out << "\n";
    }
  }
  out << "end\n";
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  auto fail = [&path](const std::string& what) { return DataError("checkpoint " + path + ": " + what); };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "dvga-checkpoint") throw fail("missing header");
  if (version != kCheckpointVersion) throw fail("unsupported version " + std::to_string(version));
  Index in_features = 0;
  Checkpoint cp;
  std::size_t count = 0;
  if (!(in >> tag >> in_features) || tag != "in_features") throw fail("missing in_features");
  if (!(in >> tag >> cp.best_epoch) || tag != "best_epoch") throw fail("missing best_epoch");
  if (!(in >> tag >> count) || tag != "config") throw fail("missing config block");
  std::string line;
  std::getline(in, line);
  std::string text;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw fail("truncated config block");
    text += line + "\n";
  }
  cp.config = parse_config(text);
  cp.model = cp.config.model(in_features);
  if (!(in >> tag >> count) || tag != "params") throw fail("missing params block");
  for (std::size_t p = 0; p < count; ++p) {
    std::string name;
    Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) throw fail("bad tensor header");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        std::string token;
        if (!(in >> token)) throw fail("truncated tensor " + name);
        char* end = nullptr;
        m(i, j) = std::strtod(token.c_str(), &end);
        if (end != token.c_str() + token.size()) throw fail("bad value in tensor " + name);
      }
    }
    cp.params.add(name, std::move(m));
  }
  if (!(in >> tag) || tag != "end") throw fail("missing end marker");
  return cp;
}

}  // namespace dvga
