#pragma once

#include <string>
#include <vector>

#include "dvga/graph.hpp"
#include "dvga/params.hpp"
#include "dvga/tensor.hpp"

namespace dvga {

/// Per-iteration assignment distributions, one row per arc (see Arcs):
/// p[t](a, k) is the softmax over channels, q[t](a, k) the softmax over the
/// neighbours of the arc's source, both computed from z^{t}.
struct AssignmentTrace {
  std::vector<Matrix> p;
  std::vector<Matrix> q;
};

/// c_{u,k} = normalize(W_k^T x_u + b_k) for all K channel blocks at once.
/// `weight` is f x (K*width), `bias` is 1 x (K*width).
Var project_subspaces(const Var& features, const Var& weight, const Var& bias, Index channels);

/// Iterative neighbourhood assignment. `alpha` and `beta` are 1x1 values in
/// (0, 1). Starting from z = c, each of `iterations` rounds computes the
/// channel softmax p and neighbour softmax q from c_v . z_u, aggregates
/// z_u = c_u + alpha * sum p c_v + beta * sum q c_v and renormalizes each
/// channel block. Nodes without neighbours keep z = c.
Var dynamic_assignment(const Var& projected, const Arcs& arcs, const Var& alpha, const Var& beta,
                       Index channels, int iterations, AssignmentTrace* trace = nullptr);

enum class EncodeMode { kDeterministic, kVariational };

struct EncoderConfig {
  Index in_features = 0;
  Index channels = 4;
  Index channel_dim = 16;
  int layers = 1;
  int iterations = 3;
  double dropout = 0.0;
  EncodeMode mode = EncodeMode::kDeterministic;

  Index dim() const { return channels * channel_dim; }
  void validate() const;
};

/// Adds enc.* parameters: per-layer projections and squashed-scalar
/// coefficients, plus per-channel mu/logvar heads in variational mode.
void init_encoder_params(ParamStore& params, const EncoderConfig& config, Rng& rng);

struct EncodeOptions {
  /// Applies dropout and, in variational mode, draws the reparameterization noise.
  bool training = false;
  /// Forces the noise to zero while training (the sample then equals mu).
  bool zero_noise = false;
  /// Receives the first layer's assignment distributions when non-null.
  AssignmentTrace* trace = nullptr;
};

struct EncoderOutput {
  /// Deterministic mode: the concatenated channel embeddings. Variational
  /// mode: mu + eps * sigma while training, mu otherwise.
  Var z;
  Var mu;
  Var logvar;
  /// The reparameterization noise (zeros when not sampled).
  Matrix noise;
  /// First layer's projected channel embeddings (N x d).
  Var first_projection;
};

EncoderOutput encode(const BoundParams& params, const EncoderConfig& config, const Var& features,
                     const Arcs& arcs, const EncodeOptions& options, Rng& rng);

std::string layer_param(int layer, const char* what);
std::string head_param(const char* head, Index channel, const char* what);

}  // namespace dvga
