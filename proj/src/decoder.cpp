#include "dvga/decoder.hpp"

#include <cmath>
#include <cstdint>
#include <memory>

namespace dvga {
namespace {

constexpr double kNormEps = 1e-12;

Index channel_width(const Matrix& z, Index channels) {
  if (channels < 1 || z.cols() % channels != 0) {
    throw ShapeError("decoder: embedding width " + std::to_string(z.cols()) +
                     " not divisible by " + std::to_string(channels) + " channels");
  }
  return z.cols() / channels;
}

/// Channel blocks scaled to unit norm; also returns the norms.
Matrix normalized_blocks(const Matrix& z, Index channels, Matrix* norms = nullptr) {
  const Index w = channel_width(z, channels);
  Matrix out(z.rows(), z.cols());
  if (norms) norms->resize(z.rows(), channels);
  for (Index r = 0; r < z.rows(); ++r) {
    for (Index k = 0; k < channels; ++k) {
      const auto seg = z.row(r).segment(k * w, w);
      const double n = seg.norm();
      if (norms) (*norms)(r, k) = n;
      if (n < kNormEps) {
        out.row(r).segment(k * w, w).setZero();
      } else {
        out.row(r).segment(k * w, w) = seg / n;
      }
    }
  }
  return out;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Max over channels of the cosine maps, with the winning channel per entry.
Matrix max_cosine(const Matrix& zn, Index channels, std::vector<std::uint8_t>* winner) {
  const Index n = zn.rows();
  const Index w = zn.cols() / channels;
  Matrix best(n, n);
  if (winner) winner->assign(static_cast<std::size_t>(n * n), 0);
  for (Index k = 0; k < channels; ++k) {
    const Matrix block = zn.middleCols(k * w, w);
    Matrix sim(n, n);
    sim.noalias() = block * block.transpose();
    if (k == 0) {
      best = sim;
      continue;
    }
    for (Index i = 0; i < n * n; ++i) {
      if (sim.data()[i] > best.data()[i]) {
        best.data()[i] = sim.data()[i];
        if (winner) (*winner)[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(k);
      }
    }
  }
  return best;
}

}  // namespace

std::vector<Matrix> factor_similarities(const Matrix& z, Index channels) {
  const Index w = channel_width(z, channels);
  const Matrix zn = normalized_blocks(z, channels);
  std::vector<Matrix> out;
  for (Index k = 0; k < channels; ++k) {
    const Matrix block = zn.middleCols(k * w, w);
    out.emplace_back(block * block.transpose());
  }
  return out;
}

Matrix decode_logits(const Matrix& z, Index channels, const DecoderOptions& options) {
  channel_width(z, channels);
  Matrix logits = z * z.transpose();
  if (!options.ablate_factor) logits += max_cosine(normalized_blocks(z, channels), channels, nullptr);
  return logits;
}

Matrix decode(const Matrix& z, Index channels, const DecoderOptions& options) {
  return decode_logits(z, channels, options).unaryExpr([](double x) { return sigmoid(x); });
}

Eigen::VectorXd decode_pair_logits(const Matrix& z, Index channels, std::span<const Edge> pairs,
                                   const DecoderOptions& options) {
  const Index w = channel_width(z, channels);
  const Matrix zn = normalized_blocks(z, channels);
  Eigen::VectorXd out(static_cast<Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const Index u = pairs[i].u, v = pairs[i].v;
    if (u < 0 || v < 0 || u >= z.rows() || v >= z.rows()) {
      throw ShapeError("decode_pairs: node index out of range");
    }
    double logit = z.row(u).dot(z.row(v));
    if (!options.ablate_factor) {
      double best = -std::numeric_limits<double>::infinity();
      for (Index k = 0; k < channels; ++k) {
        best = std::max(best, zn.row(u).segment(k * w, w).dot(zn.row(v).segment(k * w, w)));
      }
      logit += best;
    }
    out(static_cast<Index>(i)) = logit;
  }
  return out;
}

Eigen::VectorXd decode_pairs(const Matrix& z, Index channels, std::span<const Edge> pairs,
                             const DecoderOptions& options) {
  Eigen::VectorXd out = decode_pair_logits(z, channels, pairs, options);
  for (Index i = 0; i < out.size(); ++i) out(i) = sigmoid(out(i));
  return out;
}

Var decoder_logits(const Var& z, Index channels, const DecoderOptions& options) {
  const Matrix& zv = z.value();
  const Index w = channel_width(zv, channels);
  const Index n = zv.rows();
  Matrix logits(n, n);
  logits.noalias() = zv * zv.transpose();
  auto winner = std::make_shared<std::vector<std::uint8_t>>();
  auto norms = std::make_shared<Matrix>();
  auto zn = std::make_shared<Matrix>();
  if (!options.ablate_factor) {
    if (channels > 255) throw ShapeError("decoder_logits: at most 255 channels supported");
    *zn = normalized_blocks(zv, channels, norms.get());
    logits += max_cosine(*zn, channels, winner.get());
  }
  const std::size_t iz = z.id();
  Tape& tape = *z.tape();
  const bool ablate = options.ablate_factor;
  return tape.record(
      "decoder_logits", std::move(logits), {iz},
      [&tape, iz, ablate, channels, w, n, winner, norms, zn](const Matrix& g, GradSink& s) {
        if (!s.wants(iz)) return;
        const Matrix& zval = tape.value(iz);
        Matrix& dz = s.slot(iz);
        dz.noalias() += g * zval;
        dz.noalias() += g.transpose() * zval;
        if (ablate) return;
        // Entry (i, j) feeds rows i and j, so channel k's adjoint is
        // (M_k + M_k^T) zn_k with M_k the gradient masked to k's wins.
        Matrix masked(n, n);
        Matrix dzn(n, w);
        const std::uint8_t* win = winner->data();
        for (Index k = 0; k < channels; ++k) {
          for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
              const Index ij = i * n + j, ji = j * n + i;
              masked.data()[ij] = (win[ij] == k ? g.data()[ij] : 0.0) + (win[ji] == k ? g.data()[ji] : 0.0);
            }
          }
          const Matrix block = zn->middleCols(k * w, w);
          dzn.noalias() = masked * block;
          for (Index r = 0; r < n; ++r) {
            const double nr = (*norms)(r, k);
            if (nr < kNormEps) continue;
            const auto y = block.row(r);
            const double dot = dzn.row(r).dot(y);
            dz.row(r).segment(k * w, w) += (dzn.row(r) - dot * y) / nr;
          }
        }
      });
}

}  // namespace dvga
