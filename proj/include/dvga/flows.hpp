#pragma once

#include <functional>
#include <string>

#include "dvga/params.hpp"
#include "dvga/tensor.hpp"

namespace dvga {

/// Per-channel affine-coupling flow layout. Each channel block of width
/// `width` runs through `steps` couplings that keep the first `split`
/// coordinates and affinely transform the rest.
struct FlowConfig {
  Index channels = 1;
  Index width = 16;
  int steps = 0;
  /// d'; 0 selects floor(width / 2).
  Index split = 0;

  Index resolved_split() const { return split == 0 ? width / 2 : split; }
  void validate() const;
};

/// Bound on the scale network output before exponentiation.
inline constexpr double kFlowScaleClamp = 5.0;

using VectorFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct CouplingResult {
  Eigen::VectorXd z;
  double logdet = 0.0;
};

/// One affine coupling on a single vector: z'[:d'] = z[:d'],
/// z'[d':] = z[d':] * exp(s(z[:d'])) + t(z[:d']), logdet = sum s.
CouplingResult coupling_forward(const Eigen::VectorXd& z, const VectorFn& s, const VectorFn& t,
                                Index split);
/// Exact inverse of coupling_forward for the same s, t.
Eigen::VectorXd coupling_inverse(const Eigen::VectorXd& z, const VectorFn& s, const VectorFn& t,
                                 Index split);

/// Adds flow.* parameters. Scale/shift networks are two-layer tanh
/// perceptrons whose output layer starts at zero (identity flow).
void init_flow_params(ParamStore& params, const FlowConfig& config, Rng& rng);

struct FlowOutput {
  Var z;
  /// N x 1 per-node sum of every coupling's log-determinant.
  Var logdet;
  /// Scale outputs that hit the clamp; zero in healthy runs.
  Index clamped = 0;
};

/// Runs every channel block independently through its coupling stack.
/// Odd-numbered steps act on the reversed coordinate order, so consecutive
/// couplings transform complementary halves and the original order is kept.
FlowOutput apply_flows(const BoundParams& params, const FlowConfig& config, const Var& z0);

/// Matrix-level forward pass (no gradients).
Matrix flow_forward(const ParamStore& params, const FlowConfig& config, const Matrix& z0,
                    Eigen::VectorXd* logdet = nullptr);
/// Matrix-level inverse of flow_forward.
Matrix flow_inverse(const ParamStore& params, const FlowConfig& config, const Matrix& z);

std::string flow_param(Index channel, int step, const char* net, const char* what);

}  // namespace dvga
