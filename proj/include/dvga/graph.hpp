#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dvga/tensor.hpp"

namespace dvga {

/// Malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undirected edge stored canonically with u < v.
struct Edge {
  std::int64_t u = 0;
  std::int64_t v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

Edge make_edge(std::int64_t a, std::int64_t b);

/// Directed arc lists grouped by source: arcs [offsets[u], offsets[u+1]) leave u.
/// Every undirected edge appears once in each direction.
struct Arcs {
  std::vector<std::int64_t> src;
  std::vector<std::int64_t> dst;
  std::vector<std::int64_t> offsets;
};

/// Simple undirected graph with node features and optional label views.
class Graph {
 public:
  Graph() = default;
  /// Edges are canonicalized, deduplicated and sorted; self-loops and
  /// out-of-range endpoints are rejected.
  Graph(Index num_nodes, std::vector<Edge> edges, Matrix features,
        std::vector<std::vector<int>> labels = {});

  Index num_nodes() const { return n_; }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  /// One entry per label view; each holds a class id per node.
  const std::vector<std::vector<int>>& labels() const { return labels_; }
  bool has_edge(std::int64_t a, std::int64_t b) const;

  /// Dense symmetric 0/1 adjacency without self-loops.
  Matrix adjacency() const;
  Arcs arcs() const;
  std::vector<Index> degrees() const;
  double mean_degree() const;

  /// Same topology, new features.
  Graph with_features(Matrix features) const;

 private:
  Index n_ = 0;
  std::vector<Edge> edges_;
  std::unordered_set<std::uint64_t> keys_;
  Matrix features_;
  std::vector<std::vector<int>> labels_;
};

struct LoadOptions {
  /// Divide each feature row by its sum (rows summing to zero are left alone).
  bool row_normalize_features = false;
};

/// Reads an edge list ("src dst" per line, '#' comments) plus optional
/// feature rows ("id f1 ... ff") and label rows ("id label [label...]").
/// Node ids are re-indexed to 0..n-1: the feature file's order when one is
/// given, otherwise sorted id order. Without features, X is the identity.
Graph load_graph(const std::string& edge_path,
                 const std::optional<std::string>& feature_path = std::nullopt,
                 const std::optional<std::string>& label_path = std::nullopt,
                 const LoadOptions& options = {}, std::vector<std::string>* warnings = nullptr);

/// Train graph plus balanced held-out positive/negative pairs.
struct EdgeSplit {
  Graph train;
  std::vector<Edge> val_pos;
  std::vector<Edge> val_neg;
  std::vector<Edge> test_pos;
  std::vector<Edge> test_neg;
};

/// Holds out floor(val_frac*|E|) and floor(test_frac*|E|) edges uniformly at
/// random and draws as many non-edges for each set by rejection sampling.
EdgeSplit split_edges(const Graph& g, double val_frac, double test_frac, std::uint64_t seed);

/// Writes/reads the held-out lists ("val_pos u v" lines, etc.).
void save_split_pairs(const EdgeSplit& split, const std::string& path);
EdgeSplit load_split_pairs(const Graph& full, const std::string& path);

struct SyntheticSpec {
  int factors = 1;
  Index nodes = 1000;
  int classes = 16;
  double p = 0.0;
  double q = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Class of each node for one factor: node perm[i] gets floor(i*classes/n).
std::vector<int> factor_classes(Index nodes, int classes, Rng& rng);

/// Union of `factors` planted-partition random graphs. Features are the rows
/// of the union adjacency; labels hold one view per factor.
Graph synth_graph(const SyntheticSpec& spec);

struct DegreeFit {
  double p = 0.0;
  double expected_degree = 0.0;
  double realized_degree = 0.0;
};

/// Closed-form intra-class probability giving the requested expected mean
/// degree of the union of `factors` independent factor graphs, followed by
/// one sampled graph to report the realized mean degree.
DegreeFit tune_p_for_degree(Index nodes, int classes, double q, double target_degree,
                            std::uint64_t seed, int factors = 1);

/// Combines per-factor labels into one joint class id per node (ids in
/// order of first appearance).
std::vector<int> joint_labels(const std::vector<std::vector<int>>& views);

}  // namespace dvga
