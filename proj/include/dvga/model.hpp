#pragma once

#include <string>

#include "dvga/decoder.hpp"
#include "dvga/encoder.hpp"
#include "dvga/flows.hpp"
#include "dvga/graph.hpp"
#include "dvga/objectives.hpp"
#include "dvga/params.hpp"

namespace dvga {

/// Architecture of a DGA/DVGA model. DGA ignores the flow settings.
struct ModelConfig {
  ModelMode mode = ModelMode::kDGA;
  Index in_features = 0;
  Index channels = 4;
  Index channel_dim = 16;
  int layers = 1;
  int iterations = 3;
  int flow_steps = 0;
  Index flow_split = 0;
  double dropout = 0.0;

  Index dim() const { return channels * channel_dim; }
  EncoderConfig encoder() const;
  FlowConfig flows() const;
  void validate() const;
};

/// Fresh parameters: encoder, (DVGA) heads and flows, discriminator.
ParamStore init_model(const ModelConfig& config, Rng& rng);

/// Graph-side inputs of a forward pass.
struct GraphInputs {
  Matrix features;
  Arcs arcs;
  /// Reconstruction target: train adjacency with unit diagonal.
  Matrix target;
};

GraphInputs make_inputs(const Graph& train_graph);

struct ForwardOptions {
  bool training = true;
  /// Variational noise forced to zero (the sample equals mu).
  bool zero_noise = false;
  AssignmentTrace* trace = nullptr;
};

struct ForwardPass {
  EncoderOutput encoder;
  /// Decoder input: flowed sample (DVGA) or encoder output (DGA).
  Var z;
  /// Per-node flow log-determinant (DVGA only).
  std::optional<Var> logdet;
  Index clamped = 0;
};

ForwardPass forward(const BoundParams& params, const ModelConfig& config, const Var& features,
                    const Arcs& arcs, const ForwardOptions& options, Rng& rng);

struct LossOptions {
  double lambda = 0.0;
  ForwardOptions forward;
};

struct LossPass {
  ForwardPass pass;
  Objective objective;
};

/// Full training objective on one tape: forward, dense decoder, recon,
/// KL (DVGA) and the independence regularizer.
LossPass model_loss(const BoundParams& params, const ModelConfig& config, const GraphInputs& inputs,
                    const LossOptions& options, Rng& rng);

/// Test-time embedding: encoder without dropout, mu for DVGA, pushed through the flows.
Matrix embed(const ParamStore& params, const ModelConfig& config, const Matrix& features,
             const Arcs& arcs);

/// First-layer projected channel embeddings c (N x d) at test time.
Matrix first_projection(const ParamStore& params, const ModelConfig& config,
                        const Matrix& features, const Arcs& arcs);

}  // namespace dvga
