#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dvga/tensor.hpp"

namespace dvga {

struct RankMetrics {
  double auc = 0.0;
  double ap = 0.0;
};

/// AUC counts correctly ordered (pos, neg) pairs with ties as 1/2. AP is the
/// mean precision at each positive's rank after a stable descending sort of
/// positives followed by negatives.
RankMetrics rank_metrics(std::span<const double> pos, std::span<const double> neg);

struct KMeansOptions {
  int restarts = 20;
  int max_iterations = 300;
  /// Stop when inertia improves by less than this fraction.
  double tolerance = 1e-6;
};

struct KMeansResult {
  std::vector<int> labels;
  Matrix centroids;
  double inertia = 0.0;
};

/// k-means++ seeding and Lloyd iterations; keeps the restart with the lowest
/// inertia. Empty clusters are re-seeded at the point farthest from its centroid.
KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options = {});

/// Minimum-cost assignment of rows to columns for a rows <= cols cost matrix.
/// Returns the column chosen for each row.
std::vector<int> hungarian(const Matrix& cost);

/// Mapping predicted id -> true id maximizing the number of matched nodes.
/// Predicted ids left without a partner (more clusters than classes) map to
/// fresh ids beyond the true range.
std::vector<int> munkres_match(std::span<const int> pred, std::span<const int> truth);

/// Applies munkres_match to relabel `pred`.
std::vector<int> apply_matching(std::span<const int> pred, std::span<const int> truth);

struct ClusterMetrics {
  double acc = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  /// True labels had a single class; NMI reported as 0.
  bool degenerate = false;
};

/// Accuracy, macro precision/F1, NMI (arithmetic-mean normalization) and
/// ARI of already-matched predictions.
ClusterMetrics clustering_metrics(std::span<const int> matched_pred, std::span<const int> truth);

struct CorrelationSummary {
  /// d x d absolute Pearson correlations.
  Matrix matrix;
  /// Mean off-diagonal |corr| inside the channel blocks on the diagonal.
  double within = 0.0;
  /// Mean |corr| outside those blocks.
  double between = 0.0;
  double ratio = 0.0;
  /// Columns with zero variance (their rows/columns are zero).
  std::vector<Index> constant_columns;
};

CorrelationSummary latent_correlation(const Matrix& z, Index channels);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Sample mean and standard error (n - 1 denominator; 0 for n = 1).
MeanStderr mean_stderr(std::span<const double> values);

}  // namespace dvga
