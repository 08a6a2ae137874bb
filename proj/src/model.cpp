#include "dvga/model.hpp"

namespace dvga {

EncoderConfig ModelConfig::encoder() const {
  EncoderConfig e;
  e.in_features = in_features;
  e.channels = channels;
  e.channel_dim = channel_dim;
  e.layers = layers;
  e.iterations = iterations;
  e.dropout = dropout;
  e.mode = mode == ModelMode::kDVGA ? EncodeMode::kVariational : EncodeMode::kDeterministic;
  return e;
}

FlowConfig ModelConfig::flows() const {
  FlowConfig f;
  f.channels = channels;
  f.width = channel_dim;
  f.steps = mode == ModelMode::kDVGA ? flow_steps : 0;
  f.split = flow_split;
  return f;
}

void ModelConfig::validate() const {
  encoder().validate();
  flows().validate();
}

ParamStore init_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  ParamStore params;
  init_encoder_params(params, config.encoder(), rng);
  init_flow_params(params, config.flows(), rng);
  init_discriminator(params, config.channel_dim, config.channels, 2 * config.channels, rng);
  return params;
}

GraphInputs make_inputs(const Graph& train_graph) {
  GraphInputs in;
  in.features = train_graph.features();
  in.arcs = train_graph.arcs();
  in.target = train_graph.adjacency();
  in.target.diagonal().setOnes();
  return in;
}

ForwardPass forward(const BoundParams& params, const ModelConfig& config, const Var& features,
                    const Arcs& arcs, const ForwardOptions& options, Rng& rng) {
  ForwardPass pass;
  EncodeOptions eo;
  eo.training = options.training;
  eo.zero_noise = options.zero_noise;
  eo.trace = options.trace;
  pass.encoder = encode(params, config.encoder(), features, arcs, eo, rng);
  if (config.mode == ModelMode::kDGA) {
    pass.z = pass.encoder.z;
    return pass;
  }
  FlowOutput flowed = apply_flows(params, config.flows(), pass.encoder.z);
  pass.z = flowed.z;
  pass.clamped = flowed.clamped;
  if (config.flows().steps > 0) pass.logdet = flowed.logdet;
  return pass;
}

LossPass model_loss(const BoundParams& params, const ModelConfig& config, const GraphInputs& inputs,
                    const LossOptions& options, Rng& rng) {
  Tape& tape = params.tape();
  const Var features = tape.constant(inputs.features);
  LossPass out;
  out.pass = forward(params, config, features, inputs.arcs, options.forward, rng);
  LossParts parts;
  parts.recon = recon_loss_logits(decoder_logits(out.pass.z, config.channels), inputs.target);
  if (config.mode == ModelMode::kDVGA) {
    const EncoderOutput& enc = out.pass.encoder;
    std::optional<Var> flowed;
    if (out.pass.logdet) flowed = out.pass.z;
    parts.kl = kl_with_flow(enc.mu, enc.logvar, enc.noise, flowed, out.pass.logdet);
  }
  parts.indep = independence_loss(params, out.pass.encoder.first_projection, config.channels);
  out.objective = total_objective(config.mode, parts, options.lambda);
  return out;
}

Matrix embed(const ParamStore& params, const ModelConfig& config, const Matrix& features,
             const Arcs& arcs) {
  Tape tape;
  BoundParams bound(tape, params, /*trainable=*/false);
  Rng unused(0);
  ForwardOptions fo;
  fo.training = false;
  return forward(bound, config, tape.constant(features), arcs, fo, unused).z.value();
}

Matrix first_projection(const ParamStore& params, const ModelConfig& config,
                        const Matrix& features, const Arcs& arcs) {
  Tape tape;
  BoundParams bound(tape, params, /*trainable=*/false);
  Rng unused(0);
  EncodeOptions eo;
  return encode(bound, config.encoder(), tape.constant(features), arcs, eo, unused)
      .first_projection.value();
}

}  // namespace dvga
