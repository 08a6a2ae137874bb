#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "dvga/tensor.hpp"

namespace dvga {

using GradMap = std::map<std::string, Matrix>;

/// Named trainable values. Iteration order is the lexical order of names,
/// which keeps optimizer updates and checkpoints deterministic.
class ParamStore {
 public:
  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const Matrix& get(const std::string& name) const;
  Matrix& get_mut(const std::string& name);
  const std::map<std::string, Matrix>& entries() const { return values_; }
  std::size_t size() const { return values_.size(); }
  /// Total number of scalar entries.
  Index count() const;

 private:
  std::map<std::string, Matrix> values_;
};

/// Parameters placed on a tape, either as gradient leaves or as constants.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store, bool trainable);

  const Var& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

  /// Pulls every parameter's gradient out of a backward pass.
  GradMap gradients(const Gradients& grads) const;

 private:
  Tape* tape_;
  std::map<std::string, Var> vars_;
};

/// Glorot/Xavier uniform initialization for a fan_in x fan_out matrix.
Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng);

/// Standard-normal matrix.
Matrix standard_normal(Index rows, Index cols, Rng& rng);

}  // namespace dvga
