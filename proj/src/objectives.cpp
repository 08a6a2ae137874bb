#include "dvga/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace dvga {
namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_target(const Var& v, const Matrix& target, const char* who) {
  if (v.rows() != target.rows() || v.cols() != target.cols()) {
    throw ShapeError(std::string(who) + ": prediction and target shapes differ");
  }
}

}  // namespace

ReconWeights recon_weights(const Matrix& target) {
  const double total = static_cast<double>(target.size());
  const double positives = target.sum();
  ReconWeights w;
  if (positives <= 0 || positives >= total) return w;
  w.pos_weight = (total - positives) / positives;
  w.norm = total / (2.0 * (total - positives));
  return w;
}

Var recon_loss(const Var& probs, const Matrix& target) {
  check_target(probs, target, "recon_loss");
  const ReconWeights w = recon_weights(target);
  Tape& tape = *probs.tape();
  const Var p = clamp(probs, kProbClamp, 1.0 - kProbClamp);
  const Var pos = tape.constant(target * w.pos_weight);
  const Var neg = tape.constant((1.0 - target.array()).matrix());
  const Var terms = add(mul(pos, log(p)), mul(neg, log(add_scalar(scale(p, -1.0), 1.0))));
  return scale(mean(terms), -w.norm);
}

Var recon_loss_logits(const Var& logits, const Matrix& target) {
  check_target(logits, target, "recon_loss_logits");
  const ReconWeights w = recon_weights(target);
  const Matrix& x = logits.value();
  const double scale = w.norm / static_cast<double>(x.size());
  // Per entry: w t softplus(-x) + (1 - t) softplus(x), using
  // softplus(-x) = softplus(x) - x so each entry costs one softplus.
  auto probs = std::make_shared<Matrix>(x.rows(), x.cols());
  double total = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double t = target.data()[i];
    const double xi = x.data()[i];
    const double e = std::exp(-std::abs(xi));
    const double sp = std::max(xi, 0.0) + std::log1p(e);
    total += w.pos_weight * t * (sp - xi) + (1.0 - t) * sp;
    probs->data()[i] = xi >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  }
  Matrix out(1, 1);
  out(0, 0) = total * scale;
  const std::size_t il = logits.id();
  auto tgt = std::make_shared<Matrix>(target);
  return logits.tape()->record("recon_loss_logits", std::move(out), {il},
                               [il, tgt, probs, w, scale](const Matrix& g, GradSink& s) {
                                 if (!s.wants(il)) return;
                                 const double gs = g(0, 0) * scale;
                                 Matrix dx(probs->rows(), probs->cols());
                                 for (Index i = 0; i < dx.size(); ++i) {
                                   const double t = tgt->data()[i];
                                   const double sg = probs->data()[i];
                                   dx.data()[i] = gs * (w.pos_weight * t * (sg - 1.0) + (1.0 - t) * sg);
                                 }
                                 s.add(il, dx);
                               });
}

Var kl_closed_form(const Var& mu, const Var& logvar) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols()) {
    throw ShapeError("kl: mu and logvar shapes differ");
  }
  if (!all_finite(logvar.value())) throw NumericError("kl: non-finite logvar");
  const double n = static_cast<double>(mu.rows());
  const Var inner = sub(add(square(mu), exp(logvar)), add_scalar(logvar, 1.0));
  return scale(sum(inner), 0.5 / (n * n));
}

Var kl_with_flow(const Var& mu, const Var& logvar, const Matrix& noise,
                 const std::optional<Var>& flowed, const std::optional<Var>& logdet) {
  if (!flowed || !logdet) return kl_closed_form(mu, logvar);
  if (!all_finite(logvar.value())) throw NumericError("kl: non-finite logvar");
  if (noise.rows() != mu.rows() || noise.cols() != mu.cols() || flowed->rows() != mu.rows() ||
      flowed->cols() != mu.cols() || logdet->rows() != mu.rows() || logdet->cols() != 1) {
    throw ShapeError("kl_with_flow: inconsistent shapes");
  }
  const double n = static_cast<double>(mu.rows());
  // log q(z0) - log p(zM) with the 2*pi constants cancelled:
  //   sum(-0.5 logvar - 0.5 eps^2) + 0.5 sum(zM^2), minus the flow log-det.
  const double noise_term = -0.5 * noise.squaredNorm();
  const Var log_q = add_scalar(scale(sum(logvar), -0.5), noise_term);
  const Var neg_log_p = scale(sum(square(*flowed)), 0.5);
  const Var total = sub(add(log_q, neg_log_p), sum(*logdet));
  return scale(total, 1.0 / (n * n));
}

void init_discriminator(ParamStore& params, Index width, Index channels, Index hidden, Rng& rng) {
  params.add("disc.w1", glorot_uniform(width, hidden, rng));
  params.add("disc.b1", Matrix::Zero(1, hidden));
  params.add("disc.w2", glorot_uniform(hidden, channels, rng));
  params.add("disc.b2", Matrix::Zero(1, channels));
}

Matrix discriminator_probs(const ParamStore& params, const Matrix& projected, Index channels) {
  if (projected.cols() % channels != 0) throw ShapeError("discriminator: width not divisible by K");
  const Index width = projected.cols() / channels;
  const Matrix items = Eigen::Map<const Matrix>(projected.data(), projected.rows() * channels, width);
  Matrix h = ((items * params.get("disc.w1")).rowwise() + params.get("disc.b1").row(0)).cwiseMax(0.0);
  Matrix logits = (h * params.get("disc.w2")).rowwise() + params.get("disc.b2").row(0);
  for (Index r = 0; r < logits.rows(); ++r) {
    logits.row(r).array() -= logits.row(r).maxCoeff();
    logits.row(r) = logits.row(r).array().exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
  return logits;
}

Var independence_loss(const BoundParams& params, const Var& projected, Index channels) {
  if (projected.cols() % channels != 0) throw ShapeError("independence_loss: width not divisible by K");
  const Index width = projected.cols() / channels;
  const Index items = projected.rows() * channels;
  const Var x = reshape(projected, items, width);
  const Var h = relu(add_row(matmul(x, params["disc.w1"]), params["disc.b1"]));
  const Var logits = add_row(matmul(h, params["disc.w2"]), params["disc.b2"]);
  std::vector<int> labels(static_cast<std::size_t>(items));
  for (Index i = 0; i < items; ++i) labels[static_cast<std::size_t>(i)] = static_cast<int>(i % channels);
  return cross_entropy_logits(logits, labels);
}

Objective total_objective(ModelMode mode, const LossParts& parts, double lambda) {
  if (!parts.recon.valid()) throw std::invalid_argument("total_objective: reconstruction term missing");
  if (mode == ModelMode::kDVGA && !parts.kl) {
    throw std::invalid_argument("total_objective: DVGA needs a KL term");
  }
  if (mode == ModelMode::kDGA && parts.kl) {
    throw std::invalid_argument("total_objective: DGA takes no KL term");
  }
  if (lambda != 0 && !parts.indep) {
    throw std::invalid_argument("total_objective: lambda > 0 needs the independence term");
  }
  Objective out;
  out.report.lambda = lambda;
  out.report.recon = parts.recon.scalar();
  Var total = parts.recon;
  if (parts.kl) {
    out.report.kl = parts.kl->scalar();
    total = add(total, *parts.kl);
  }
  if (parts.indep) {
    out.report.indep = parts.indep->scalar();
    if (lambda != 0) total = add(total, scale(*parts.indep, lambda));
  }
  out.total = total;
  out.report.total = total.scalar();
  return out;
}

}  // namespace dvga
