#include "dvga/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace dvga {
namespace {

std::uint64_t edge_key(std::int64_t u, std::int64_t v) {
  return (static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint64_t>(v);
}

bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::int64_t x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::int64_t to_integer(const std::string& s) {
  std::int64_t x = 0;
  std::from_chars(s.data(), s.data() + s.size(), x);
  return x;
}

/// Splits a data line into whitespace tokens; returns false for blank/comment lines.
bool tokenize(const std::string& line, std::vector<std::string>& out) {
  out.clear();
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) {
    if (out.empty() && tok[0] == '#') return false;
    out.push_back(tok);
  }
  return !out.empty();
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

[[noreturn]] void malformed(const std::string& path, std::size_t line, const std::string& why) {
  throw DataError(path + ":" + std::to_string(line) + ": " + why);
}

/// Orders id tokens numerically when all are integers, lexically otherwise.
std::vector<std::string> sorted_ids(std::vector<std::string> ids) {
  const bool numeric = std::all_of(ids.begin(), ids.end(), is_integer);
  if (numeric) {
    std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
      return to_integer(a) < to_integer(b);
    });
  } else {
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

std::int64_t uniform_index(Rng& rng, std::int64_t n) {
  return std::uniform_int_distribution<std::int64_t>(0, n - 1)(rng);
}

template <typename T>
void fisher_yates(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<std::int64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

Edge make_edge(std::int64_t a, std::int64_t b) { return a < b ? Edge{a, b} : Edge{b, a}; }

Graph::Graph(Index num_nodes, std::vector<Edge> edges, Matrix features,
             std::vector<std::vector<int>> labels)
    : n_(num_nodes), features_(std::move(features)), labels_(std::move(labels)) {
  if (n_ < 0) throw DataError("negative node count");
  if (features_.rows() != n_) {
    throw DataError("feature rows (" + std::to_string(features_.rows()) + ") != node count (" +
                    std::to_string(n_) + ")");
  }
  for (const auto& view : labels_) {
    if (static_cast<Index>(view.size()) != n_) throw DataError("label view length != node count");
  }
  for (Edge& e : edges) {
    if (e.u == e.v) throw DataError("self-loop on node " + std::to_string(e.u));
    if (e.u < 0 || e.v < 0 || e.u >= n_ || e.v >= n_) throw DataError("edge endpoint out of range");
    e = make_edge(e.u, e.v);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);
  keys_.reserve(edges_.size() * 2);
  for (const Edge& e : edges_) keys_.insert(edge_key(e.u, e.v));
}

bool Graph::has_edge(std::int64_t a, std::int64_t b) const {
  if (a == b) return false;
  const Edge e = make_edge(a, b);
  return keys_.count(edge_key(e.u, e.v)) != 0;
}

Matrix Graph::adjacency() const {
  Matrix a = Matrix::Zero(n_, n_);
  for (const Edge& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Arcs Graph::arcs() const {
  Arcs arcs;
  std::vector<std::int64_t> count(static_cast<std::size_t>(n_) + 1, 0);
  for (const Edge& e : edges_) {
    ++count[static_cast<std::size_t>(e.u) + 1];
    ++count[static_cast<std::size_t>(e.v) + 1];
  }
  std::partial_sum(count.begin(), count.end(), count.begin());
  arcs.offsets = count;
  const std::size_t m = edges_.size() * 2;
  arcs.src.resize(m);
  arcs.dst.resize(m);
  std::vector<std::int64_t> fill(count.begin(), count.end() - 1);
  // Edges are sorted, so each source's destinations come out ascending.
  std::vector<std::pair<std::int64_t, std::int64_t>> directed;
  directed.reserve(m);
  for (const Edge& e : edges_) {
    directed.emplace_back(e.u, e.v);
    directed.emplace_back(e.v, e.u);
  }
  std::sort(directed.begin(), directed.end());
  for (const auto& [s, d] : directed) {
    const auto at = static_cast<std::size_t>(fill[static_cast<std::size_t>(s)]++);
    arcs.src[at] = s;
    arcs.dst[at] = d;
  }
  return arcs;
}

std::vector<Index> Graph::degrees() const {
  std::vector<Index> deg(static_cast<std::size_t>(n_), 0);
  for (const Edge& e : edges_) {
    ++deg[static_cast<std::size_t>(e.u)];
    ++deg[static_cast<std::size_t>(e.v)];
  }
  return deg;
}

double Graph::mean_degree() const {
  return n_ == 0 ? 0.0 : 2.0 * static_cast<double>(edges_.size()) / static_cast<double>(n_);
}

Graph Graph::with_features(Matrix features) const {
  return Graph(n_, edges_, std::move(features), labels_);
}

// ---------------------------------------------------------------------------

Graph load_graph(const std::string& edge_path, const std::optional<std::string>& feature_path,
                 const std::optional<std::string>& label_path, const LoadOptions& options,
                 std::vector<std::string>* warnings) {
  std::vector<std::pair<std::string, std::string>> raw_edges;
  std::vector<std::string> tokens;
  {
    std::ifstream in = open_or_throw(edge_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!tokenize(line, tokens)) continue;
      if (tokens.size() != 2) malformed(edge_path, lineno, "expected 'src dst'");
      raw_edges.emplace_back(tokens[0], tokens[1]);
    }
  }

  std::unordered_map<std::string, std::int64_t> index;
  std::vector<std::vector<double>> feature_rows;
  if (feature_path) {
    std::ifstream in = open_or_throw(*feature_path);
    std::string line;
    std::size_t lineno = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!tokenize(line, tokens)) continue;
      if (tokens.size() < 2) malformed(*feature_path, lineno, "expected 'id f1 ... ff'");
      if (feature_rows.empty()) width = tokens.size() - 1;
      if (tokens.size() - 1 != width) malformed(*feature_path, lineno, "inconsistent feature width");
      if (!index.emplace(tokens[0], static_cast<std::int64_t>(index.size())).second) {
        malformed(*feature_path, lineno, "duplicate node id '" + tokens[0] + "'");
      }
      std::vector<double> row(width);
      for (std::size_t j = 0; j < width; ++j) {
        char* end = nullptr;
        row[j] = std::strtod(tokens[j + 1].c_str(), &end);
        if (end == tokens[j + 1].c_str() || *end != '\0' || !std::isfinite(row[j])) {
          malformed(*feature_path, lineno, "bad feature value '" + tokens[j + 1] + "'");
        }
      }
      feature_rows.push_back(std::move(row));
    }
    for (const auto& [a, b] : raw_edges) {
      if (!index.count(a) || !index.count(b)) {
        throw DataError("edge endpoint '" + (index.count(a) ? b : a) +
                        "' has no feature row: feature row count != node count");
      }
    }
  } else {
    std::vector<std::string> ids;
    std::unordered_set<std::string> seen;
    for (const auto& [a, b] : raw_edges) {
      if (seen.insert(a).second) ids.push_back(a);
      if (seen.insert(b).second) ids.push_back(b);
    }
    for (const std::string& id : sorted_ids(std::move(ids))) {
      index.emplace(id, static_cast<std::int64_t>(index.size()));
    }
  }
  const auto n = static_cast<Index>(index.size());

  std::vector<Edge> edges;
  std::size_t self_loops = 0;
  for (const auto& [a, b] : raw_edges) {
    const std::int64_t u = index.at(a), v = index.at(b);
    if (u == v) {
      ++self_loops;
      continue;
    }
    edges.push_back(make_edge(u, v));
  }
  if (self_loops > 0 && warnings) {
    warnings->push_back("dropped " + std::to_string(self_loops) + " self-loop(s) from " + edge_path);
  }

  Matrix features;
  if (feature_path) {
    const Index f = feature_rows.empty() ? 0 : static_cast<Index>(feature_rows[0].size());
    features.resize(n, f);
    for (Index i = 0; i < n; ++i) {
      features.row(i) = Eigen::Map<const Eigen::RowVectorXd>(feature_rows[i].data(), f);
    }
    if (options.row_normalize_features) {
      for (Index i = 0; i < n; ++i) {
        const double s = features.row(i).sum();
        if (s != 0.0) features.row(i) /= s;
      }
    }
  } else {
    features = Matrix::Identity(n, n);
  }

  std::vector<std::vector<int>> labels;
  if (label_path) {
    std::ifstream in = open_or_throw(*label_path);
    std::string line;
    std::size_t lineno = 0;
    std::vector<std::vector<std::string>> raw(static_cast<std::size_t>(n));
    std::size_t views = 0;
    Index seen = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!tokenize(line, tokens)) continue;
      if (tokens.size() < 2) malformed(*label_path, lineno, "expected 'id label'");
      if (views == 0) views = tokens.size() - 1;
      if (tokens.size() - 1 != views) malformed(*label_path, lineno, "inconsistent label count");
      auto it = index.find(tokens[0]);
      if (it == index.end()) malformed(*label_path, lineno, "unknown node id '" + tokens[0] + "'");
      auto& slot = raw[static_cast<std::size_t>(it->second)];
      if (!slot.empty()) malformed(*label_path, lineno, "duplicate node id '" + tokens[0] + "'");
      slot.assign(tokens.begin() + 1, tokens.end());
      ++seen;
    }
    if (seen != n) throw DataError(*label_path + ": label row count != node count");
    labels.assign(views, std::vector<int>(static_cast<std::size_t>(n)));
    for (std::size_t v = 0; v < views; ++v) {
      std::vector<std::string> names;
      for (const auto& row : raw) names.push_back(row[v]);
      std::sort(names.begin(), names.end());
      names.erase(std::unique(names.begin(), names.end()), names.end());
      std::map<std::string, int> id;
      for (const std::string& s : sorted_ids(names)) id.emplace(s, static_cast<int>(id.size()));
      for (std::size_t i = 0; i < raw.size(); ++i) labels[v][i] = id.at(raw[i][v]);
    }
  }

  return Graph(n, std::move(edges), std::move(features), std::move(labels));
}

// ---------------------------------------------------------------------------

EdgeSplit split_edges(const Graph& g, double val_frac, double test_frac, std::uint64_t seed) {
  if (val_frac < 0 || test_frac < 0 || val_frac + test_frac >= 1) {
    throw std::invalid_argument("split_edges: need val_frac, test_frac >= 0 and sum < 1");
  }
  const auto m = static_cast<std::size_t>(g.num_edges());
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(m)));
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(m)));

  const double n = static_cast<double>(g.num_nodes());
  const double non_edges = n * (n - 1) / 2 - static_cast<double>(m);
  if (static_cast<double>(n_val + n_test) > non_edges) {
    throw DataError("split_edges: graph too dense to supply " + std::to_string(n_val + n_test) +
                    " negative pairs");
  }

  Rng rng(seed);
  std::vector<Edge> shuffled = g.edges();
  fisher_yates(shuffled, rng);

  EdgeSplit split;
  split.test_pos.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_test));
  split.val_pos.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test),
                       shuffled.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
  std::vector<Edge> train(shuffled.begin() + static_cast<std::ptrdiff_t>(n_test + n_val),
                          shuffled.end());

  std::unordered_set<std::uint64_t> taken;
  auto draw = [&](std::size_t count, std::vector<Edge>& out) {
    out.reserve(count);
    while (out.size() < count) {
      const std::int64_t a = uniform_index(rng, g.num_nodes());
      const std::int64_t b = uniform_index(rng, g.num_nodes());
      if (a == b || g.has_edge(a, b)) continue;
      const Edge e = make_edge(a, b);
      if (!taken.insert(edge_key(e.u, e.v)).second) continue;
      out.push_back(e);
    }
  };
  draw(n_test, split.test_neg);
  draw(n_val, split.val_neg);

  split.train = Graph(g.num_nodes(), std::move(train), g.features(), g.labels());
  return split;
}

void save_split_pairs(const EdgeSplit& split, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << "# held-out pairs: <set> <u> <v>\n";
  auto dump = [&](const char* tag, const std::vector<Edge>& edges) {
    for (const Edge& e : edges) out << tag << ' ' << e.u << ' ' << e.v << '\n';
  };
  dump("val_pos", split.val_pos);
  dump("val_neg", split.val_neg);
  dump("test_pos", split.test_pos);
  dump("test_neg", split.test_neg);
  if (!out) throw DataError("write failed for '" + path + "'");
}

EdgeSplit load_split_pairs(const Graph& full, const std::string& path) {
  std::ifstream in = open_or_throw(path);
  EdgeSplit split;
  std::unordered_set<std::uint64_t> held;
  std::string line;
  std::vector<std::string> tokens;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!tokenize(line, tokens)) continue;
    if (tokens.size() != 3 || !is_integer(tokens[1]) || !is_integer(tokens[2])) {
      malformed(path, lineno, "expected '<set> u v'");
    }
    const std::int64_t u = to_integer(tokens[1]), v = to_integer(tokens[2]);
    if (u < 0 || v < 0 || u >= full.num_nodes() || v >= full.num_nodes() || u == v) {
      malformed(path, lineno, "pair out of range");
    }
    const Edge e = make_edge(u, v);
    if (tokens[0] == "val_pos") {
      split.val_pos.push_back(e);
    } else if (tokens[0] == "val_neg") {
      split.val_neg.push_back(e);
    } else if (tokens[0] == "test_pos") {
      split.test_pos.push_back(e);
    } else if (tokens[0] == "test_neg") {
      split.test_neg.push_back(e);
    } else {
      malformed(path, lineno, "unknown set '" + tokens[0] + "'");
    }
    if (tokens[0].ends_with("_pos")) {
      if (!full.has_edge(u, v)) malformed(path, lineno, "positive pair is not an edge");
      held.insert(edge_key(e.u, e.v));
    }
  }
  std::vector<Edge> train;
  for (const Edge& e : full.edges()) {
    if (!held.count(edge_key(e.u, e.v))) train.push_back(e);
  }
  split.train = Graph(full.num_nodes(), std::move(train), full.features(), full.labels());
  return split;
}

// ---------------------------------------------------------------------------

void SyntheticSpec::validate() const {
  if (factors < 1) throw std::invalid_argument("synthetic spec: factors must be >= 1");
  if (nodes < 1) throw std::invalid_argument("synthetic spec: nodes must be >= 1");
  if (classes < 1 || classes > nodes) {
    throw std::invalid_argument("synthetic spec: classes must lie in [1, nodes]");
  }
  if (!(q >= 0 && q <= p && p <= 1)) {
    throw std::invalid_argument("synthetic spec: need 0 <= q <= p <= 1");
  }
}

std::vector<int> factor_classes(Index nodes, int classes, Rng& rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(nodes));
  std::iota(order.begin(), order.end(), 0);
  fisher_yates(order, rng);
  std::vector<int> cls(static_cast<std::size_t>(nodes));
  for (Index i = 0; i < nodes; ++i) {
    cls[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] =
        static_cast<int>(i * classes / nodes);
  }
  return cls;
}

Graph synth_graph(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const Index n = spec.nodes;
  std::vector<std::vector<int>> views;
  std::vector<Edge> edges;
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  for (int f = 0; f < spec.factors; ++f) {
    views.push_back(factor_classes(n, spec.classes, rng));
    const auto& cls = views.back();
    for (Index u = 0; u < n; ++u) {
      for (Index v = u + 1; v < n; ++v) {
        const double prob = cls[static_cast<std::size_t>(u)] == cls[static_cast<std::size_t>(v)]
                                ? spec.p
                                : spec.q;
        if (coin(rng) < prob) edges.push_back(Edge{u, v});
      }
    }
  }
  Graph topology(n, std::move(edges), Matrix::Zero(n, 0), views);
  return topology.with_features(topology.adjacency());
}

DegreeFit tune_p_for_degree(Index nodes, int classes, double q, double target_degree,
                            std::uint64_t seed, int factors) {
  if (nodes < 2) throw std::invalid_argument("tune_p_for_degree: need at least two nodes");
  if (classes < 1 || classes > nodes || factors < 1) {
    throw std::invalid_argument("tune_p_for_degree: bad class or factor count");
  }
  if (!(q >= 0 && q <= 1)) throw std::invalid_argument("tune_p_for_degree: q outside [0, 1]");
  const double others = static_cast<double>(nodes - 1);
  if (!(target_degree >= 0 && target_degree <= others)) {
    throw std::invalid_argument("tune_p_for_degree: target degree infeasible (must be in [0, n-1])");
  }
  // Expected same-class neighbour count for a node under floor(i*classes/n) sizing.
  double same = 0.0;
  for (int c = 0; c < classes; ++c) {
    const double lo = std::ceil(static_cast<double>(c) * static_cast<double>(nodes) / classes);
    const double hi = std::ceil(static_cast<double>(c + 1) * static_cast<double>(nodes) / classes);
    const double size = hi - lo;
    same += size * (size - 1);
  }
  same /= static_cast<double>(nodes);
  const double different = others - same;

  // Per-pair edge probability in one factor so the union hits the target.
  const double union_prob = target_degree / others;
  const double per_factor = 1.0 - std::pow(1.0 - union_prob, 1.0 / factors);
  double p = same > 0 ? (per_factor * others - q * different) / same : q;
  if (std::abs(p) < 1e-12) p = 0.0;
  if (std::abs(p - 1.0) < 1e-12) p = 1.0;
  if (!(p >= q - 1e-12 && p <= 1.0)) {
    throw std::invalid_argument("tune_p_for_degree: target degree infeasible for q = " +
                                std::to_string(q) + " (p would be " + std::to_string(p) + ")");
  }
  p = std::max(p, q);

  DegreeFit fit;
  fit.p = p;
  const double r = (p * same + q * different) / others;
  fit.expected_degree = others * (1.0 - std::pow(1.0 - r, factors));
  SyntheticSpec spec{factors, nodes, classes, p, q, seed};
  fit.realized_degree = synth_graph(spec).mean_degree();
  return fit;
}

std::vector<int> joint_labels(const std::vector<std::vector<int>>& views) {
  if (views.empty()) return {};
  const std::size_t n = views[0].size();
  std::map<std::vector<int>, int> ids;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<int> key;
    for (const auto& v : views) key.push_back(v.at(i));
    out[i] = ids.emplace(std::move(key), static_cast<int>(ids.size())).first->second;
  }
  return out;
}

}  // namespace dvga
