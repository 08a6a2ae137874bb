#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dvga/params.hpp"

namespace dvga {

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moments are created lazily with the shape of their
/// parameter and must keep that shape.
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  /// In-place update of every parameter that has an entry in `grads`.
  void step(ParamStore& params, const GradMap& grads);

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const Matrix& first_moment(const std::string& name) const;
  const Matrix& second_moment(const std::string& name) const;

 private:
  AdamOptions options_;
  std::int64_t step_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

/// Builds a scalar loss on the given tape from bound parameters. Must be a
/// deterministic function of the parameter values.
using LossBuilder = std::function<Var(Tape&, const BoundParams&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  Index checked = 0;
};

struct GradCheckOptions {
  double step = 1e-5;
  /// Restrict to these parameters; empty means all.
  std::vector<std::string> only;
  /// Check at most this many entries per parameter (evenly strided); 0 = all.
  Index max_entries_per_param = 0;
};

/// Central finite differences against the tape gradient. Relative error per
/// entry is |a - n| / (|a| + |n| + 1e-8).
GradCheckResult grad_check(const LossBuilder& loss, const ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace dvga
