#include <gtest/gtest.h>

#include <cmath>

#include "dvga/model.hpp"
#include "dvga/objectives.hpp"
#include "dvga/optim.hpp"
#include "oracles.hpp"

using namespace dvga;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Matrix target4() {
  Matrix t = Matrix::Identity(4, 4);
  t(0, 1) = t(1, 0) = 1.0;
  return t;
}

double recon_logits(const Matrix& logits, const Matrix& target) {
  Tape t;
  return recon_loss_logits(t.leaf(logits), target).scalar();
}

// Weighted cross-entropy written out entry by entry.
double naive_recon(const Matrix& probs, const Matrix& target) {
  const double total = static_cast<double>(target.size()), pos = target.sum();
  const double w = (total - pos) / pos, norm = total / (2 * (total - pos));
  double acc = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs.data()[i], kProbClamp, 1 - kProbClamp);
    acc += target.data()[i] * w * std::log(p) + (1 - target.data()[i]) * std::log(1 - p);
  }
  return -norm * acc / total;
}

ParamStore disc_params(Index width, Index k, Index hidden, std::uint64_t seed) {
  Rng rng(seed);
  ParamStore p;
  init_discriminator(p, width, k, hidden, rng);
  return p;
}

double indep(const ParamStore& p, const Matrix& c, Index k) {
  Tape t;
  BoundParams b(t, p, false);
  return independence_loss(b, t.constant(c), k).scalar();
}

}  // namespace

TEST(Recon, Weights) {
  const ReconWeights w = recon_weights(target4());
  EXPECT_DOUBLE_EQ(w.pos_weight, 10.0 / 6.0);
  EXPECT_DOUBLE_EQ(w.norm, 16.0 / 20.0);
  EXPECT_EQ(recon_weights(Matrix::Zero(3, 3)).pos_weight, 1.0);
  EXPECT_EQ(recon_weights(Matrix::Ones(3, 3)).norm, 1.0);
}

TEST(Recon, PerfectPredictionNearZero) {
  const Matrix t = target4();
  EXPECT_LT(recon_logits((t.array() * 60 - 30).matrix(), t), 1e-12);
}

TEST(Recon, UninformativePredictionIsLogTwo) {
  EXPECT_NEAR(recon_logits(Matrix::Zero(4, 4), target4()), std::log(2.0), 1e-15);
  EXPECT_NEAR(recon_logits(Matrix::Zero(3, 3), Matrix::Zero(3, 3)), std::log(2.0), 1e-15);
}

TEST(Recon, LogitAndProbabilityFormsAgree) {
  const Matrix t = target4();
  const Matrix logits = random_matrix(4, 4, 1, 3.0);
  const Matrix probs = logits.unaryExpr([](double x) { return 1 / (1 + std::exp(-x)); });
  Tape tape;
  const double from_probs = recon_loss(tape.leaf(probs), t).scalar();
  EXPECT_NEAR(from_probs, naive_recon(probs, t), 1e-14);
  EXPECT_NEAR(recon_logits(logits, t), from_probs, 1e-12);
  EXPECT_THROW(recon_loss(tape.leaf(probs), Matrix::Zero(3, 3)), ShapeError);
}

TEST(Recon, LogitGradientMatchesFiniteDifferences) {
  ParamStore p;
  p.add("x", random_matrix(4, 4, 2, 3.0));
  const Matrix t = target4();
  const auto r = grad_check([&](Tape&, const BoundParams& b) { return recon_loss_logits(b["x"], t); }, p);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Kl, StandardNormalIsZero) {
  Tape t;
  EXPECT_EQ(kl_closed_form(t.leaf(Matrix::Zero(3, 2)), t.leaf(Matrix::Zero(3, 2))).scalar(), 0.0);
}

TEST(Kl, ClosedFormMatchesNaiveScaled) {
  const Matrix mu = random_matrix(5, 4, 3), lv = random_matrix(5, 4, 4);
  Tape t;
  const double kl = kl_closed_form(t.leaf(mu), t.leaf(lv)).scalar();
  EXPECT_NEAR(kl, oracle::naive_gaussian_kl(mu, lv) / 25.0, 1e-14);
  EXPECT_GE(kl, 0.0);
  // Single unit example: mu = 1, sigma^2 = 1 gives 0.5.
  EXPECT_DOUBLE_EQ(kl_closed_form(t.leaf(Matrix::Ones(1, 1)), t.leaf(Matrix::Zero(1, 1))).scalar(), 0.5);
}

TEST(Kl, NoFlowFallsBackToClosedForm) {
  const Matrix mu = random_matrix(5, 4, 5), lv = random_matrix(5, 4, 6);
  Tape t;
  const double a = kl_with_flow(t.leaf(mu), t.leaf(lv), Matrix::Zero(5, 4), std::nullopt, std::nullopt).scalar();
  EXPECT_EQ(a, kl_closed_form(t.leaf(mu), t.leaf(lv)).scalar());
}

TEST(Kl, IdentityFlowEstimatorAveragesToClosedForm) {
  const Matrix mu = random_matrix(3, 2, 7), lv = random_matrix(3, 2, 8);
  Rng rng(9);
  double acc = 0.0;
  const int samples = 40000;
  for (int s = 0; s < samples; ++s) {
    Tape t;
    const Matrix eps = standard_normal(3, 2, rng);
    const Matrix z0 = mu.array() + eps.array() * (0.5 * lv.array()).exp();
    acc += kl_with_flow(t.leaf(mu), t.leaf(lv), eps, t.constant(z0), t.constant(Matrix::Zero(3, 1))).scalar();
  }
  EXPECT_NEAR(acc / samples, oracle::naive_gaussian_kl(mu, lv) / 9.0, 5e-3);
}

TEST(Kl, FlowEstimatorSubtractsLogdet) {
  const Matrix mu = random_matrix(2, 2, 10), lv = random_matrix(2, 2, 11), eps = random_matrix(2, 2, 12);
  const Matrix zm = random_matrix(2, 2, 13);
  Matrix ld(2, 1);
  ld << 0.3, -0.1;
  Tape t;
  const double v = kl_with_flow(t.leaf(mu), t.leaf(lv), eps, t.constant(zm), t.constant(ld)).scalar();
  const double expected = (-0.5 * lv.sum() - 0.5 * eps.squaredNorm() + 0.5 * zm.squaredNorm() - 0.2) / 4.0;
  EXPECT_NEAR(v, expected, 1e-14);
  EXPECT_THROW(kl_with_flow(t.leaf(mu), t.leaf(lv), eps, t.constant(zm), t.constant(Matrix::Zero(3, 1))), ShapeError);
  Matrix bad = lv;
  bad(0, 0) = std::nan("");
  EXPECT_THROW(kl_closed_form(t.constant(mu), t.constant(bad)), NumericError);
}

TEST(Independence, UniformDiscriminatorGivesLogK) {
  for (Index k : {2, 4, 5}) {
    ParamStore p = disc_params(3, k, 6, 14);
    p.get_mut("disc.w2").setZero();
    EXPECT_NEAR(indep(p, random_matrix(7, 3 * k, 15), k), std::log(static_cast<double>(k)), 1e-14);
  }
}

TEST(Independence, HandComputedTwoChannel) {
  ParamStore p = disc_params(2, 2, 4, 16);
  p.get_mut("disc.w2").setZero();
  p.get_mut("disc.b2") << std::log(4.0), 0.0;  // softmax = (0.8, 0.2) for every item
  const double expected = -(std::log(0.8) + std::log(0.2)) / 2;
  EXPECT_NEAR(indep(p, random_matrix(5, 4, 17), 2), expected, 1e-14);
  const Matrix probs = discriminator_probs(p, random_matrix(5, 4, 17), 2);
  EXPECT_EQ(probs.rows(), 10);
  EXPECT_NEAR(probs(3, 0), 0.8, 1e-15);
}

TEST(Independence, SingleChannelIsZero) {
  const ParamStore p = disc_params(4, 1, 8, 18);
  EXPECT_EQ(indep(p, random_matrix(6, 4, 19), 1), 0.0);
}

TEST(Independence, GradientsIncludeProjection) {
  ParamStore p = disc_params(3, 3, 5, 20);
  p.add("c", random_matrix(4, 9, 21));
  const auto r = grad_check([](Tape&, const BoundParams& b) { return independence_loss(b, b["c"], 3); }, p);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
}

TEST(Total, ComposesTermsExactly) {
  Tape t;
  LossParts parts;
  parts.recon = t.leaf(Matrix::Constant(1, 1, 0.7));
  parts.kl = t.leaf(Matrix::Constant(1, 1, 0.05));
  parts.indep = t.leaf(Matrix::Constant(1, 1, 1.2));
  const Objective dvga = total_objective(ModelMode::kDVGA, parts, 0.1);
  EXPECT_NEAR(dvga.report.total, 0.7 + 0.05 + 0.1 * 1.2, 1e-15);
  EXPECT_NEAR(dvga.report.total, dvga.report.recon + dvga.report.kl + dvga.report.lambda * dvga.report.indep, 1e-15);
  EXPECT_EQ(total_objective(ModelMode::kDVGA, parts, 0.0).report.total, 0.75);
  parts.kl.reset();
  EXPECT_NEAR(total_objective(ModelMode::kDGA, parts, 0.5).report.total, 1.3, 1e-15);
}

TEST(Total, RejectsMissingOrExtraTerms) {
  Tape t;
  LossParts parts;
  EXPECT_THROW(total_objective(ModelMode::kDGA, parts, 0.0), std::invalid_argument);
  parts.recon = t.leaf(Matrix::Constant(1, 1, 0.7));
  EXPECT_THROW(total_objective(ModelMode::kDVGA, parts, 0.0), std::invalid_argument);
  EXPECT_THROW(total_objective(ModelMode::kDGA, parts, 0.1), std::invalid_argument);
  parts.kl = t.leaf(Matrix::Zero(1, 1));
  EXPECT_THROW(total_objective(ModelMode::kDGA, parts, 0.0), std::invalid_argument);
}

TEST(FullModel, DvgaLossGradientsMatchFiniteDifferences) {
  const Graph g = oracle::toy_graph();
  ModelConfig c;
  c.mode = ModelMode::kDVGA;
  c.in_features = g.features().cols();
  c.channels = 2;
  c.channel_dim = 4;
  c.iterations = 2;
  c.flow_steps = 2;
  Rng init(22);
  ParamStore p = init_model(c, init);
  // Move flow output layers off zero so their gradients are exercised.
  Rng jitter(23);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (const auto& entry : p.entries()) {
    if (entry.first.rfind("flow.", 0) == 0 && entry.first.find("2") != std::string::npos) {
      Matrix& m = p.get_mut(entry.first);
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = u(jitter);
    }
  }
  const GraphInputs in = make_inputs(g);
  LossOptions o;
  o.lambda = 0.3;
  auto loss = [&](Tape&, const BoundParams& b) {
    Rng rng(24);
    return model_loss(b, c, in, o, rng).objective.total;
  };
  GradCheckOptions gc;
  gc.max_entries_per_param = 12;
  const GradCheckResult r = grad_check(loss, p, gc);
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.max_rel_error, 1e-3) << r.worst_param << "[" << r.worst_index << "] " << r.analytic << " vs " << r.numeric;
}
