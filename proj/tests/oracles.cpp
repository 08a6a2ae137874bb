#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oracle {

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = probe.data()[i];
    probe.data()[i] = keep + h;
    const double up = f(probe);
    probe.data()[i] = keep - h;
    const double down = f(probe);
    probe.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * h);
  }
  return g;
}

Matrix numerical_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                          const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd y = f(x);
  Matrix j(y.size(), x.size());
  Eigen::VectorXd probe = x;
  for (Index c = 0; c < x.size(); ++c) {
    probe(c) = x(c) + h;
    const Eigen::VectorXd up = f(probe);
    probe(c) = x(c) - h;
    const Eigen::VectorXd down = f(probe);
    probe(c) = x(c);
    j.col(c) = (up - down) / (2 * h);
  }
  return j;
}

double log_abs_det(const Matrix& jacobian) {
  const Eigen::MatrixXd j = jacobian;
  return std::log(std::abs(j.partialPivLu().determinant()));
}

double pairwise_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double score = 0.0;
  for (double p : pos) {
    for (double n : neg) {
      if (p > n) score += 1.0;
      else if (p == n) score += 0.5;
    }
  }
  return score / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double rank_ap(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<double> all = pos;
  all.insert(all.end(), neg.begin(), neg.end());
  double total = 0.0;
  for (std::size_t i = 0; i < pos.size(); ++i) {
    double rank = 1.0, hits = 1.0;
    for (std::size_t j = 0; j < all.size(); ++j) {
      if (j == i) continue;
      const bool above = all[j] > all[i] || (all[j] == all[i] && j < i);
      if (!above) continue;
      rank += 1.0;
      if (j < pos.size()) hits += 1.0;
    }
    total += hits / rank;
  }
  return total / static_cast<double>(pos.size());
}

int brute_force_matched(const std::vector<int>& pred, const std::vector<int>& truth) {
  const int kp = *std::max_element(pred.begin(), pred.end()) + 1;
  const int kt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int k = std::max(kp, kt);
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  int best = 0;
  do {
    int hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += perm[static_cast<std::size_t>(pred[i])] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double pair_counting_ari(const std::vector<int>& a, const std::vector<int>& b) {
  double n11 = 0, n10 = 0, n01 = 0, n00 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      if (sa && sb) n11 += 1;
      else if (sa) n10 += 1;
      else if (sb) n01 += 1;
      else n00 += 1;
    }
  }
  const double den = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
  if (den == 0) return 1.0;
  return 2.0 * (n00 * n11 - n01 * n10) / den;
}

namespace {

void normalize_channel(Matrix& z, Index row, Index k, Index w) {
  double norm = 0.0;
  for (Index i = 0; i < w; ++i) norm += z(row, k * w + i) * z(row, k * w + i);
  norm = std::sqrt(norm);
  for (Index i = 0; i < w; ++i) z(row, k * w + i) = norm < 1e-12 ? 0.0 : z(row, k * w + i) / norm;
}

double channel_dot(const Matrix& a, Index ra, const Matrix& b, Index rb, Index k, Index w) {
  double s = 0.0;
  for (Index i = 0; i < w; ++i) s += a(ra, k * w + i) * b(rb, k * w + i);
  return s;
}

}  // namespace

AssignmentResult naive_assignment(const Matrix& c, const std::vector<std::vector<Index>>& neighbours,
                                  double alpha, double beta, Index channels, int iterations) {
  const Index n = c.rows();
  const Index w = c.cols() / channels;
  AssignmentResult out;
  Matrix z = c;
  for (int t = 0; t < iterations; ++t) {
    std::vector<std::vector<std::vector<double>>> p(static_cast<std::size_t>(n)), q(static_cast<std::size_t>(n));
    Matrix next = c;
    for (Index u = 0; u < n; ++u) {
      const auto& nb = neighbours[static_cast<std::size_t>(u)];
      const std::size_t deg = nb.size();
      p[static_cast<std::size_t>(u)].assign(deg, std::vector<double>(static_cast<std::size_t>(channels)));
      q[static_cast<std::size_t>(u)].assign(deg, std::vector<double>(static_cast<std::size_t>(channels)));
      if (deg == 0) continue;
      // Channel softmax for each neighbour.
      for (std::size_t j = 0; j < deg; ++j) {
        double denom = 0.0;
        for (Index k = 0; k < channels; ++k) denom += std::exp(channel_dot(c, nb[j], z, u, k, w));
        for (Index k = 0; k < channels; ++k) {
          p[static_cast<std::size_t>(u)][j][static_cast<std::size_t>(k)] = std::exp(channel_dot(c, nb[j], z, u, k, w)) / denom;
        }
      }
      // Neighbour softmax for each channel.
      for (Index k = 0; k < channels; ++k) {
        double denom = 0.0;
        for (std::size_t j = 0; j < deg; ++j) denom += std::exp(channel_dot(c, nb[j], z, u, k, w));
        for (std::size_t j = 0; j < deg; ++j) {
          q[static_cast<std::size_t>(u)][j][static_cast<std::size_t>(k)] = std::exp(channel_dot(c, nb[j], z, u, k, w)) / denom;
        }
      }
      for (Index k = 0; k < channels; ++k) {
        for (std::size_t j = 0; j < deg; ++j) {
          const double weight = alpha * p[static_cast<std::size_t>(u)][j][static_cast<std::size_t>(k)] +
                                beta * q[static_cast<std::size_t>(u)][j][static_cast<std::size_t>(k)];
          for (Index i = 0; i < w; ++i) next(u, k * w + i) += weight * c(nb[j], k * w + i);
        }
      }
    }
    for (Index u = 0; u < n; ++u) {
      for (Index k = 0; k < channels; ++k) normalize_channel(next, u, k, w);
    }
    z = next;
    out.p.push_back(std::move(p));
    out.q.push_back(std::move(q));
  }
  out.z = z;
  return out;
}

std::vector<std::vector<Index>> neighbour_lists(const dvga::Graph& g) {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(g.num_nodes()));
  for (const dvga::Edge& e : g.edges()) {
    out[static_cast<std::size_t>(e.u)].push_back(e.v);
    out[static_cast<std::size_t>(e.v)].push_back(e.u);
  }
  for (auto& nb : out) std::sort(nb.begin(), nb.end());
  return out;
}

Matrix naive_decode(const Matrix& z, Index channels, bool ablate) {
  const Index n = z.rows();
  const Index w = z.cols() / channels;
  Matrix p(n, n);
  for (Index u = 0; u < n; ++u) {
    for (Index v = 0; v < n; ++v) {
      double inner = 0.0;
      for (Index i = 0; i < z.cols(); ++i) inner += z(u, i) * z(v, i);
      double best = -2.0;
      for (Index k = 0; k < channels; ++k) {
        double nu = 0.0, nv = 0.0, dot = 0.0;
        for (Index i = 0; i < w; ++i) {
          nu += z(u, k * w + i) * z(u, k * w + i);
          nv += z(v, k * w + i) * z(v, k * w + i);
          dot += z(u, k * w + i) * z(v, k * w + i);
        }
        nu = std::sqrt(nu);
        nv = std::sqrt(nv);
        const double cosine = (nu < 1e-12 || nv < 1e-12) ? 0.0 : dot / (nu * nv);
        best = std::max(best, cosine);
      }
      const double logit = inner + (ablate ? 0.0 : best);
      p(u, v) = 1.0 / (1.0 + std::exp(-logit));
    }
  }
  return p;
}

double naive_gaussian_kl(const Matrix& mu, const Matrix& logvar) {
  double kl = 0.0;
  for (Index i = 0; i < mu.size(); ++i) {
    const double m = mu.data()[i], lv = logvar.data()[i];
    kl += 0.5 * (m * m + std::exp(lv) - 1.0 - lv);
  }
  return kl;
}

dvga::Graph toy_graph() {
  std::vector<dvga::Edge> edges = {{0, 1}, {0, 2}, {1, 2}, {1, 3}, {2, 3}, {3, 4}, {4, 5},  {5, 6},
                                   {6, 7}, {6, 8}, {7, 8}, {7, 9}, {8, 9}, {9, 10}, {0, 5}, {2, 7}};
  // Node 11 is isolated.
  Matrix x(12, 6);
  for (Index i = 0; i < 12; ++i) {
    for (Index j = 0; j < 6; ++j) x(i, j) = static_cast<double>((i * 7 + j * 3) % 5) / 4.0;
  }
  std::vector<int> labels = {0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
  return dvga::Graph(12, std::move(edges), std::move(x), {labels});
}

}  // namespace oracle
