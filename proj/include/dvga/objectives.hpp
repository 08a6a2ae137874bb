#pragma once

#include <optional>

#include "dvga/params.hpp"
#include "dvga/tensor.hpp"

namespace dvga {

enum class ModelMode { kDGA, kDVGA };

/// Probability clamp used by the probability-space reconstruction loss.
inline constexpr double kProbClamp = 1e-7;

/// Class-balancing constants for a binary target with `positives` ones out
/// of `total` entries: pos_weight = (total - positives) / positives and
/// norm = total / (2 (total - positives)). Both are 1 when the target is
/// all-zero or all-one.
struct ReconWeights {
  double pos_weight = 1.0;
  double norm = 1.0;
};
ReconWeights recon_weights(const Matrix& target);

/// norm * mean(-w t log P - (1 - t) log(1 - P)) over all entries, with P
/// clamped to [1e-7, 1 - 1e-7].
Var recon_loss(const Var& probs, const Matrix& target);

/// Same objective evaluated from logits in a numerically stable form.
Var recon_loss_logits(const Var& logits, const Matrix& target);

/// Closed-form Gaussian KL to N(0, I): sum over nodes and dimensions of
/// 0.5 (mu^2 + sigma^2 - 1 - log sigma^2), divided by N^2 to match the
/// per-entry scale of the reconstruction loss.
Var kl_closed_form(const Var& mu, const Var& logvar);

/// Single-sample estimate of E[log q(z0) - sum s - log p(z_M)] with
/// z0 = mu + noise * sigma, scaled by 1/N^2. When `flowed`/`logdet` are
/// absent (no flow steps) the closed form is used instead.
Var kl_with_flow(const Var& mu, const Var& logvar, const Matrix& noise,
                 const std::optional<Var>& flowed, const std::optional<Var>& logdet);

/// Adds disc.* parameters: width -> hidden (relu) -> channels.
void init_discriminator(ParamStore& params, Index width, Index channels, Index hidden, Rng& rng);

/// Row-wise softmax of the discriminator over every channel embedding.
/// `projected` is N x (K*width); result is (N*K) x K with row u*K+k for c_{u,k}.
Matrix discriminator_probs(const ParamStore& params, const Matrix& projected, Index channels);

/// Mean cross-entropy of the discriminator predicting each channel
/// embedding's channel index. Identically 0 when K = 1.
Var independence_loss(const BoundParams& params, const Var& projected, Index channels);

struct LossReport {
  double recon = 0.0;
  double kl = 0.0;
  double indep = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct LossParts {
  Var recon;
  std::optional<Var> kl;
  std::optional<Var> indep;
};

struct Objective {
  Var total;
  LossReport report;
};

/// DVGA: total = recon + kl + lambda * indep; DGA: total = recon + lambda * indep.
Objective total_objective(ModelMode mode, const LossParts& parts, double lambda);

}  // namespace dvga
