#include "dvga/params.hpp"

#include <cmath>

namespace dvga {

void ParamStore::add(const std::string& name, Matrix value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  values_.emplace(name, std::move(value));
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Matrix& ParamStore::get_mut(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Index ParamStore::count() const {
  Index n = 0;
  for (const auto& [_, m] : values_) n += m.size();
  return n;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store, bool trainable) : tape_(&tape) {
  for (const auto& [name, value] : store.entries()) {
    vars_.emplace(name, trainable ? tape.leaf(value) : tape.constant(value));
  }
}

const Var& BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::out_of_range("parameter '" + name + "' is not bound");
  return it->second;
}

GradMap BoundParams::gradients(const Gradients& grads) const {
  GradMap out;
  for (const auto& [name, var] : vars_) out.emplace(name, grads.of(var));
  return out;
}

Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(fan_in, fan_out);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace dvga
