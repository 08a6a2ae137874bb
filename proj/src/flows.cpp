#include "dvga/flows.hpp"

#include <cmath>

namespace dvga {

std::string flow_param(Index channel, int step, const char* net, const char* what) {
  return "flow.k" + std::to_string(channel) + ".m" + std::to_string(step) + "." + net + "." + what;
}

void FlowConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("flows: channels must be >= 1");
  if (steps < 0) throw std::invalid_argument("flows: steps must be >= 0");
  if (steps == 0) return;
  const Index d = resolved_split();
  if (d < 1 || d >= width) {
    throw std::invalid_argument("flows: channel width " + std::to_string(width) +
                                " cannot be split at " + std::to_string(d));
  }
}

CouplingResult coupling_forward(const Eigen::VectorXd& z, const VectorFn& s, const VectorFn& t,
                                Index split) {
  if (split < 1 || split >= z.size()) throw ShapeError("coupling_forward: bad split point");
  const Eigen::VectorXd head = z.head(split);
  const Eigen::VectorXd sv = s(head);
  const Eigen::VectorXd tv = t(head);
  const Index rest = z.size() - split;
  if (sv.size() != rest || tv.size() != rest) {
    throw ShapeError("coupling_forward: scale/shift output length mismatch");
  }
  CouplingResult out;
  out.z = z;
  out.z.tail(rest) = z.tail(rest).cwiseProduct(sv.array().exp().matrix()) + tv;
  out.logdet = sv.sum();
  return out;
}

Eigen::VectorXd coupling_inverse(const Eigen::VectorXd& z, const VectorFn& s, const VectorFn& t,
                                 Index split) {
  if (split < 1 || split >= z.size()) throw ShapeError("coupling_inverse: bad split point");
  const Eigen::VectorXd head = z.head(split);
  const Eigen::VectorXd sv = s(head);
  const Eigen::VectorXd tv = t(head);
  const Index rest = z.size() - split;
  if (sv.size() != rest || tv.size() != rest) {
    throw ShapeError("coupling_inverse: scale/shift output length mismatch");
  }
  Eigen::VectorXd out = z;
  out.tail(rest) = (z.tail(rest) - tv).cwiseProduct((-sv).array().exp().matrix());
  return out;
}

void init_flow_params(ParamStore& params, const FlowConfig& config, Rng& rng) {
  config.validate();
  const Index d = config.resolved_split();
  const Index hidden = config.width;
  const Index rest = config.width - d;
  for (Index k = 0; k < config.channels; ++k) {
    for (int m = 0; m < config.steps; ++m) {
      for (const char* net : {"s", "t"}) {
        params.add(flow_param(k, m, net, "w1"), glorot_uniform(d, hidden, rng));
        params.add(flow_param(k, m, net, "b1"), Matrix::Zero(1, hidden));
        params.add(flow_param(k, m, net, "w2"), Matrix::Zero(hidden, rest));
        params.add(flow_param(k, m, net, "b2"), Matrix::Zero(1, rest));
      }
    }
  }
}

namespace {

Var net_forward(const BoundParams& p, Index k, int m, const char* net, const Var& x) {
  const Var h = tanh(add_row(matmul(x, p[flow_param(k, m, net, "w1")]), p[flow_param(k, m, net, "b1")]));
  return add_row(matmul(h, p[flow_param(k, m, net, "w2")]), p[flow_param(k, m, net, "b2")]);
}

Matrix net_forward(const ParamStore& p, Index k, int m, const char* net, const Matrix& x) {
  Matrix h = (x * p.get(flow_param(k, m, net, "w1"))).rowwise() +
             p.get(flow_param(k, m, net, "b1")).row(0);
  h = h.array().tanh().matrix();
  return (h * p.get(flow_param(k, m, net, "w2"))).rowwise() + p.get(flow_param(k, m, net, "b2")).row(0);
}

}  // namespace

FlowOutput apply_flows(const BoundParams& params, const FlowConfig& config, const Var& z0) {
  config.validate();
  if (z0.cols() != config.channels * config.width) {
    throw ShapeError("apply_flows: embedding width does not match channels * width");
  }
  Tape& tape = *z0.tape();
  FlowOutput out;
  if (config.steps == 0) {
    out.z = z0;
    out.logdet = tape.constant(Matrix::Zero(z0.rows(), 1));
    return out;
  }
  const Index d = config.resolved_split();
  const Index rest = config.width - d;
  std::vector<Var> blocks;
  std::vector<Var> logdets;
  for (Index k = 0; k < config.channels; ++k) {
    Var x = slice_cols(z0, k * config.width, config.width);
    for (int m = 0; m < config.steps; ++m) {
      const bool flipped = m % 2 == 1;
      if (flipped) x = reverse_cols(x);
      const Var head = slice_cols(x, 0, d);
      const Var raw_scale = net_forward(params, k, m, "s", head);
      out.clamped += (raw_scale.value().array().abs() > kFlowScaleClamp).count();
      const Var s = clamp(raw_scale, -kFlowScaleClamp, kFlowScaleClamp);
      const Var t = net_forward(params, k, m, "t", head);
      const Var tail = add(mul(slice_cols(x, d, rest), exp(s)), t);
      const Var parts[] = {head, tail};
      x = concat_cols(parts);
      if (flipped) x = reverse_cols(x);
      logdets.push_back(row_sum(s));
    }
    blocks.push_back(x);
  }
  out.z = concat_cols(blocks);
  Var total = logdets[0];
  for (std::size_t i = 1; i < logdets.size(); ++i) total = add(total, logdets[i]);
  out.logdet = total;
  return out;
}

Matrix flow_forward(const ParamStore& params, const FlowConfig& config, const Matrix& z0,
                    Eigen::VectorXd* logdet) {
  Tape tape;
  BoundParams bound(tape, params, /*trainable=*/false);
  FlowOutput out = apply_flows(bound, config, tape.constant(z0));
  if (logdet) *logdet = out.logdet.value().col(0);
  return out.z.value();
}

Matrix flow_inverse(const ParamStore& params, const FlowConfig& config, const Matrix& z) {
  config.validate();
  if (z.cols() != config.channels * config.width) {
    throw ShapeError("flow_inverse: embedding width does not match channels * width");
  }
  const Index d = config.resolved_split();
  const Index rest = config.width - d;
  Matrix out = z;
  for (Index k = 0; k < config.channels; ++k) {
    Matrix x = z.middleCols(k * config.width, config.width);
    for (int m = config.steps - 1; m >= 0; --m) {
      const bool flipped = m % 2 == 1;
      if (flipped) x = x.rowwise().reverse().eval();
      const Matrix head = x.leftCols(d);
      const Matrix s = net_forward(params, k, m, "s", head).cwiseMax(-kFlowScaleClamp).cwiseMin(kFlowScaleClamp);
      const Matrix t = net_forward(params, k, m, "t", head);
      x.rightCols(rest) = (x.rightCols(rest) - t).cwiseProduct((-s).array().exp().matrix());
      if (flipped) x = x.rowwise().reverse().eval();
    }
    out.middleCols(k * config.width, config.width) = x;
  }
  return out;
}

}  // namespace dvga
