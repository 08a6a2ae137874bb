#include "dvga/optim.hpp"

#include <algorithm>
#include <cmath>

namespace dvga {

Adam::Adam(AdamOptions options) : options_(options) {
  if (!(options_.learning_rate > 0)) throw std::invalid_argument("Adam: learning rate must be > 0");
  if (!(options_.beta1 >= 0 && options_.beta1 < 1 && options_.beta2 >= 0 && options_.beta2 < 1)) {
    throw std::invalid_argument("Adam: betas must lie in [0, 1)");
  }
}

void Adam::step(ParamStore& params, const GradMap& grads) {
  ++step_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (const auto& [name, g] : grads) {
    Matrix& p = params.get_mut(name);
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ShapeError("Adam: gradient shape mismatch for '" + name + "'");
    }
    auto mit = m_.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    Matrix& m = mit.first->second;
    Matrix& v = v_.try_emplace(name, Matrix::Zero(p.rows(), p.cols())).first->second;
    if (m.rows() != p.rows() || m.cols() != p.cols()) {
      throw ShapeError("Adam: parameter '" + name + "' changed shape");
    }
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    p.array() -= options_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + options_.epsilon);
  }
}

const Matrix& Adam::first_moment(const std::string& name) const { return m_.at(name); }
const Matrix& Adam::second_moment(const std::string& name) const { return v_.at(name); }

namespace {

double evaluate(const LossBuilder& loss, const ParamStore& params) {
  Tape tape;
  BoundParams bound(tape, params, /*trainable=*/false);
  return loss(tape, bound).scalar();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, const ParamStore& params,
                           const GradCheckOptions& options) {
  if (!(options.step >= 1e-6 && options.step <= 1e-4)) {
    throw std::invalid_argument("grad_check: step must lie in [1e-6, 1e-4]");
  }
  const double base = evaluate(loss, params);
  if (evaluate(loss, params) != base) {
    throw std::runtime_error("grad_check: loss is not deterministic for fixed inputs");
  }

  GradMap analytic;
  {
    Tape tape;
    BoundParams bound(tape, params, /*trainable=*/true);
    Var l = loss(tape, bound);
    analytic = bound.gradients(tape.backward(l));
  }

  GradCheckResult result;
  ParamStore probe = params;
  for (const auto& [name, value] : params.entries()) {
    if (!options.only.empty() &&
        std::find(options.only.begin(), options.only.end(), name) == options.only.end()) {
      continue;
    }
    const Index n = value.size();
    Index stride = 1;
    if (options.max_entries_per_param > 0 && n > options.max_entries_per_param) {
      stride = (n + options.max_entries_per_param - 1) / options.max_entries_per_param;
    }
    for (Index i = 0; i < n; i += stride) {
      double* x = probe.get_mut(name).data() + i;
      const double saved = *x;
      *x = saved + options.step;
      const double up = evaluate(loss, probe);
      *x = saved - options.step;
      const double down = evaluate(loss, probe);
      *x = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic.at(name).data()[i];
      const double rel = std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
      ++result.checked;
      if (rel > result.max_rel_error || result.worst_index < 0) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = name;
          result.worst_index = i;
          result.analytic = a;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace dvga
