#pragma once

#include <span>
#include <vector>

#include "dvga/graph.hpp"
#include "dvga/tensor.hpp"

namespace dvga {

/// Per-channel cosine similarity matrices, one N x N entry per channel.
/// Zero channel rows (norm below 1e-12) have similarity 0 with everything.
std::vector<Matrix> factor_similarities(const Matrix& z, Index channels);

struct DecoderOptions {
  /// Replaces the max-pooled factor block by a zero map, leaving the plain
  /// inner-product decoder.
  bool ablate_factor = false;
};

/// Link logits max_k cos_k(z_u, z_v) + z_u . z_v for every pair.
Matrix decode_logits(const Matrix& z, Index channels, const DecoderOptions& options = {});

/// Link probabilities sigmoid(decode_logits(z)).
Matrix decode(const Matrix& z, Index channels, const DecoderOptions& options = {});

/// Logits for the listed pairs only.
Eigen::VectorXd decode_pair_logits(const Matrix& z, Index channels, std::span<const Edge> pairs,
                                   const DecoderOptions& options = {});

/// Probabilities for the listed pairs only, without materializing N x N.
Eigen::VectorXd decode_pairs(const Matrix& z, Index channels, std::span<const Edge> pairs,
                             const DecoderOptions& options = {});

/// Taped N x N logits. The max-pool routes its subgradient to the first
/// maximal channel.
Var decoder_logits(const Var& z, Index channels, const DecoderOptions& options = {});

}  // namespace dvga
