#include "dvga/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dvga {

RankMetrics rank_metrics(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) throw std::invalid_argument("rank_metrics: empty score list");
  struct Item {
    double score;
    bool positive;
  };
  std::vector<Item> items;
  items.reserve(pos.size() + neg.size());
  for (double s : pos) items.push_back({s, true});
  for (double s : neg) items.push_back({s, false});

  // AUC from ascending order: each tie group contributes half its mixed pairs.
  std::vector<Item> asc = items;
  std::stable_sort(asc.begin(), asc.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  double correct = 0.0;
  double neg_below = 0.0;
  for (std::size_t i = 0; i < asc.size();) {
    std::size_t j = i;
    double p = 0, n = 0;
    while (j < asc.size() && asc[j].score == asc[i].score) {
      (asc[j].positive ? p : n) += 1;
      ++j;
    }
    correct += p * neg_below + 0.5 * p * n;
    neg_below += n;
    i = j;
  }
  RankMetrics out;
  out.auc = correct / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));

  std::stable_sort(items.begin(), items.end(),
                   [](const Item& a, const Item& b) { return a.score > b.score; });
  double hits = 0.0, sum_precision = 0.0;
  for (std::size_t r = 0; r < items.size(); ++r) {
    if (!items[r].positive) continue;
    hits += 1;
    sum_precision += hits / static_cast<double>(r + 1);
  }
  out.ap = sum_precision / static_cast<double>(pos.size());
  return out;
}

// ---------------------------------------------------------------------------

namespace {

double assign(const Matrix& points, const Matrix& centroids, std::vector<int>& labels,
              Eigen::VectorXd& dist) {
  double inertia = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < centroids.rows(); ++c) {
      const double d = (points.row(i) - centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    dist(i) = best_d;
    inertia += best_d;
  }
  return inertia;
}

Matrix plus_plus_seeds(const Matrix& points, int k, Rng& rng) {
  const Index n = points.rows();
  Matrix centroids(k, points.cols());
  std::uniform_int_distribution<Index> pick(0, n - 1);
  centroids.row(0) = points.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index chosen = 0;
    if (total <= 0) {
      chosen = pick(rng);
    } else {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (chosen = 0; chosen < n - 1; ++chosen) {
        target -= d2(chosen);
        if (target < 0) break;
      }
    }
    centroids.row(c) = points.row(chosen);
    for (Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, std::uint64_t seed, const KMeansOptions& options) {
  const Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be >= 1");
  if (k > n) throw std::invalid_argument("kmeans: k exceeds the number of points");
  Rng rng(seed);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  std::vector<int> labels(static_cast<std::size_t>(n));
  Eigen::VectorXd dist(n);
  for (int run = 0; run < std::max(1, options.restarts); ++run) {
    Matrix centroids = plus_plus_seeds(points, k, rng);
    double inertia = assign(points, centroids, labels, dist);
    for (int it = 0; it < options.max_iterations; ++it) {
      Matrix sums = Matrix::Zero(k, points.cols());
      std::vector<Index> counts(static_cast<std::size_t>(k), 0);
      for (Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
        } else {
          Index far = 0;
          dist.maxCoeff(&far);
          centroids.row(c) = points.row(far);
          dist(far) = 0.0;
        }
      }
      const double next = assign(points, centroids, labels, dist);
      const bool converged = inertia - next <= options.tolerance * std::max(inertia, 1e-300);
      inertia = next;
      if (converged) break;
    }
    if (inertia < best.inertia) {
      best.inertia = inertia;
      best.labels = labels;
      best.centroids = centroids;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::vector<int> hungarian(const Matrix& cost) {
  const Index n = cost.rows(), m = cost.cols();
  if (n > m) throw std::invalid_argument("hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  // Potentials-based shortest augmenting path, 1-indexed with a sentinel column 0.
  std::vector<double> u(static_cast<std::size_t>(n + 1), 0.0), v(static_cast<std::size_t>(m + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(m + 1), 0), way(static_cast<std::size_t>(m + 1), 0);
  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(m + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (Index j = 1; j <= m; ++j) {
    if (match[static_cast<std::size_t>(j)] != 0) {
      row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = static_cast<int>(j - 1);
    }
  }
  return row_to_col;
}

namespace {

int label_count(std::span<const int> labels) {
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("cluster labels must be non-negative");
    k = std::max(k, l + 1);
  }
  return k;
}

}  // namespace

std::vector<int> munkres_match(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("munkres_match: length mismatch");
  const int kp = label_count(pred), kt = label_count(truth);
  const int size = std::max(kp, kt);
  Matrix cost = Matrix::Zero(size, size);
  for (std::size_t i = 0; i < pred.size(); ++i) cost(pred[i], truth[i]) -= 1.0;
  std::vector<int> assignment = hungarian(cost);
  assignment.resize(static_cast<std::size_t>(kp));
  return assignment;
}

std::vector<int> apply_matching(std::span<const int> pred, std::span<const int> truth) {
  const std::vector<int> map = munkres_match(pred, truth);
  std::vector<int> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) out[i] = map[static_cast<std::size_t>(pred[i])];
  return out;
}

ClusterMetrics clustering_metrics(std::span<const int> pred, std::span<const int> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("clustering_metrics: length mismatch");
  if (pred.empty()) throw std::invalid_argument("clustering_metrics: empty labelings");
  const int kp = label_count(pred), kt = label_count(truth);
  const double n = static_cast<double>(pred.size());
  Matrix table = Matrix::Zero(kp, kt);
  for (std::size_t i = 0; i < pred.size(); ++i) table(pred[i], truth[i]) += 1.0;
  const Eigen::VectorXd row = table.rowwise().sum();
  const Eigen::RowVectorXd col = table.colwise().sum();

  ClusterMetrics m;
  double hits = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i] ? 1.0 : 0.0;
  m.acc = hits / n;

  // Macro averages over every label seen in either labeling.
  const int k = std::max(kp, kt);
  double psum = 0.0, fsum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const double predicted = c < kp ? row(c) : 0.0;
    const double actual = c < kt ? col(c) : 0.0;
    if (predicted == 0 && actual == 0) continue;
    ++present;
    const double tp = (c < kp && c < kt) ? table(c, c) : 0.0;
    const double precision = predicted > 0 ? tp / predicted : 0.0;
    const double recall = actual > 0 ? tp / actual : 0.0;
    psum += precision;
    fsum += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  m.precision = psum / present;
  m.f1 = fsum / present;

  auto entropy = [n](auto counts) {
    double h = 0.0;
    for (Index i = 0; i < counts.size(); ++i) {
      if (counts(i) > 0) h -= counts(i) / n * std::log(counts(i) / n);
    }
    return h;
  };
  const double hp = entropy(row), ht = entropy(col);
  double mi = 0.0;
  for (Index i = 0; i < kp; ++i) {
    for (Index j = 0; j < kt; ++j) {
      const double nij = table(i, j);
      if (nij > 0) mi += nij / n * std::log(n * nij / (row(i) * col(j)));
    }
  }
  if (ht <= 0) {
    m.degenerate = true;
    m.nmi = 0.0;
  } else {
    m.nmi = std::clamp(mi / (0.5 * (hp + ht)), 0.0, 1.0);
  }

  auto comb2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (Index i = 0; i < kp; ++i) {
    for (Index j = 0; j < kt; ++j) index += comb2(table(i, j));
  }
  for (Index i = 0; i < kp; ++i) sum_rows += comb2(row(i));
  for (Index j = 0; j < kt; ++j) sum_cols += comb2(col(j));
  const double expected = sum_rows * sum_cols / comb2(n);
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) {
    m.ari = 1.0;
  } else {
    m.ari = (index - expected) / (max_index - expected);
  }
  return m;
}

// ---------------------------------------------------------------------------

CorrelationSummary latent_correlation(const Matrix& z, Index channels) {
  if (z.rows() < 2) throw std::invalid_argument("latent_correlation: need at least two rows");
  if (channels < 1 || z.cols() % channels != 0) {
    throw std::invalid_argument("latent_correlation: width not divisible by channel count");
  }
  const Index d = z.cols();
  const Index w = d / channels;
  Matrix centered = z.rowwise() - z.colwise().mean();
  Eigen::VectorXd sd(d);
  CorrelationSummary out;
  for (Index j = 0; j < d; ++j) {
    sd(j) = centered.col(j).norm();
    if (sd(j) <= 0) {
      out.constant_columns.push_back(j);
      centered.col(j).setZero();
    } else {
      centered.col(j) /= sd(j);
    }
  }
  out.matrix = (centered.transpose() * centered).cwiseAbs();
  for (Index j = 0; j < d; ++j) {
    if (sd(j) > 0) out.matrix(j, j) = 1.0;
    for (Index i = 0; i < d; ++i) out.matrix(i, j) = std::min(out.matrix(i, j), 1.0);
  }
  double within = 0, between = 0;
  Index nw = 0, nb = 0;
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) {
      if (i == j) continue;
      if (i / w == j / w) {
        within += out.matrix(i, j);
        ++nw;
      } else {
        between += out.matrix(i, j);
        ++nb;
      }
    }
  }
  out.within = nw ? within / static_cast<double>(nw) : 0.0;
  out.between = nb ? between / static_cast<double>(nb) : 0.0;
  out.ratio = out.between > 0 ? out.within / out.between : std::numeric_limits<double>::infinity();
  return out;
}

MeanStderr mean_stderr(std::span<const double> values) {
  MeanStderr out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.stderr_ = std::sqrt(ss / (n - 1)) / std::sqrt(n);
  return out;
}

}  // namespace dvga
