#include "dvga/encoder.hpp"

namespace dvga {

std::string layer_param(int layer, const char* what) {
  return "enc.l" + std::to_string(layer) + "." + what;
}

std::string head_param(const char* head, Index channel, const char* what) {
  return std::string("enc.") + head + ".k" + std::to_string(channel) + "." + what;
}

Var project_subspaces(const Var& features, const Var& weight, const Var& bias, Index channels) {
  if (weight.cols() % channels != 0) {
    throw ShapeError("project_subspaces: projection width not divisible by channel count");
  }
  const Matrix& x = features.value();
  const Index nonzeros = (x.array() != 0.0).count();
  // Constant, mostly-zero inputs (bag-of-words or adjacency rows) take the sparse product.
  if (!features.requires_grad() && nonzeros * 5 <= x.size()) {
    auto sparse = std::make_shared<const SparseMatrix>(x.sparseView());
    return normalize_blocks(add_row(matmul_sparse(std::move(sparse), weight), bias), channels);
  }
  return normalize_blocks(add_row(matmul(features, weight), bias), channels);
}

Var dynamic_assignment(const Var& projected, const Arcs& arcs, const Var& alpha, const Var& beta,
                       Index channels, int iterations, AssignmentTrace* trace) {
  if (iterations < 1) throw std::invalid_argument("dynamic_assignment: iterations must be >= 1");
  if (projected.cols() % channels != 0) {
    throw ShapeError("dynamic_assignment: width not divisible by channel count");
  }
  const Index n = projected.rows();
  if (static_cast<Index>(arcs.offsets.size()) != n + 1) {
    throw ShapeError("dynamic_assignment: arc offsets do not match node count");
  }
  const Index width = projected.cols() / channels;
  if (arcs.src.empty()) {
    // No neighbour sums anywhere: every iteration returns c unchanged.
    if (trace) {
      for (int t = 0; t < iterations; ++t) {
        trace->p.emplace_back(0, channels);
        trace->q.emplace_back(0, channels);
      }
    }
    return projected;
  }

  const Var neighbours = gather_rows(projected, arcs.dst);
  Var z = projected;
  for (int t = 0; t < iterations; ++t) {
    const Var scores = block_sums(mul(neighbours, gather_rows(z, arcs.src)), channels);
    const Var p = softmax(scores, Axis::kCols);
    const Var q = segment_softmax(scores, arcs.offsets);
    if (trace) {
      trace->p.push_back(p.value());
      trace->q.push_back(q.value());
    }
    const Var weights = add(scale_by(p, alpha), scale_by(q, beta));
    const Var messages = mul(repeat_blocks(weights, width), neighbours);
    z = normalize_blocks(add(projected, scatter_add_rows(messages, arcs.src, n)), channels);
  }
  return z;
}

void EncoderConfig::validate() const {
  if (in_features < 1) throw std::invalid_argument("encoder: in_features must be >= 1");
  if (channels < 1) throw std::invalid_argument("encoder: channels (K) must be >= 1");
  if (channel_dim < 1) throw std::invalid_argument("encoder: channel_dim must be >= 1");
  if (layers < 1) throw std::invalid_argument("encoder: layers (L) must be >= 1");
  if (iterations < 1) throw std::invalid_argument("encoder: iterations (T) must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) throw std::invalid_argument("encoder: dropout must be in [0, 1)");
}

void init_encoder_params(ParamStore& params, const EncoderConfig& config, Rng& rng) {
  config.validate();
  const Index d = config.dim();
  for (int l = 0; l < config.layers; ++l) {
    const Index fan_in = l == 0 ? config.in_features : d;
    Matrix w(fan_in, d);
    for (Index k = 0; k < config.channels; ++k) {
      w.middleCols(k * config.channel_dim, config.channel_dim) =
          glorot_uniform(fan_in, config.channel_dim, rng);
    }
    params.add(layer_param(l, "weight"), std::move(w));
    params.add(layer_param(l, "bias"), Matrix::Zero(1, d));
    // squash(0) = 0.5
    params.add(layer_param(l, "alpha"), Matrix::Zero(1, 1));
    params.add(layer_param(l, "beta"), Matrix::Zero(1, 1));
  }
  if (config.mode == EncodeMode::kVariational) {
    for (const char* head : {"mu", "logvar"}) {
      for (Index k = 0; k < config.channels; ++k) {
        params.add(head_param(head, k, "weight"),
                   glorot_uniform(config.channel_dim, config.channel_dim, rng));
        params.add(head_param(head, k, "bias"), Matrix::Zero(1, config.channel_dim));
      }
    }
  }
}

namespace {

Var dropout(const Var& x, double rate, Rng& rng) {
  if (rate <= 0) return x;
  std::bernoulli_distribution keep(1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  return mul(x, x.tape()->constant(std::move(mask)));
}

Var channel_head(const BoundParams& params, const char* head, const Var& z, Index channels,
                 Index width) {
  std::vector<Var> parts;
  for (Index k = 0; k < channels; ++k) {
    parts.push_back(add_row(matmul(slice_cols(z, k * width, width), params[head_param(head, k, "weight")]),
                            params[head_param(head, k, "bias")]));
  }
  return concat_cols(parts);
}

}  // namespace

EncoderOutput encode(const BoundParams& params, const EncoderConfig& config, const Var& features,
                     const Arcs& arcs, const EncodeOptions& options, Rng& rng) {
  config.validate();
  if (features.cols() != config.in_features) {
    throw ShapeError("encode: feature width " + std::to_string(features.cols()) +
                     " does not match the model's " + std::to_string(config.in_features));
  }
  const bool variational = config.mode == EncodeMode::kVariational;
  if (variational && !params.contains(head_param("mu", 0, "weight"))) {
    throw std::invalid_argument("encode: variational mode needs mu/logvar heads in the parameters");
  }
  if (!variational && params.contains(head_param("mu", 0, "weight"))) {
    throw std::invalid_argument("encode: deterministic mode given variational parameters");
  }

  EncoderOutput out;
  Var h = features;
  for (int l = 0; l < config.layers; ++l) {
    const Var input = options.training ? dropout(h, config.dropout, rng) : h;
    const Var c = project_subspaces(input, params[layer_param(l, "weight")],
                                    params[layer_param(l, "bias")], config.channels);
    if (l == 0) out.first_projection = c;
    h = dynamic_assignment(c, arcs, sigmoid(params[layer_param(l, "alpha")]),
                           sigmoid(params[layer_param(l, "beta")]), config.channels,
                           config.iterations, l == 0 ? options.trace : nullptr);
  }

  const Index n = features.rows();
  out.noise = Matrix::Zero(n, config.dim());
  if (!variational) {
    out.z = h;
    return out;
  }
  out.mu = channel_head(params, "mu", h, config.channels, config.channel_dim);
  out.logvar = channel_head(params, "logvar", h, config.channels, config.channel_dim);
  if (options.training && !options.zero_noise) {
    out.noise = standard_normal(n, config.dim(), rng);
    const Var sigma = exp(scale(out.logvar, 0.5));
    out.z = add(out.mu, mul(features.tape()->constant(out.noise), sigma));
  } else {
    out.z = out.mu;
  }
  return out;
}

}  // namespace dvga
