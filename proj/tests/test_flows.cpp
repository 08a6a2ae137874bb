#include <gtest/gtest.h>

#include <cmath>

#include "dvga/flows.hpp"
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

// Flow parameters with every output layer moved off zero.
ParamStore random_flow(const FlowConfig& c, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  ParamStore p;
  init_flow_params(p, c, rng);
  std::uint64_t s = seed * 100;
  for (const auto& entry : p.entries()) {
    Matrix& value = p.get_mut(entry.first);
    value = random_matrix(value.rows(), value.cols(), ++s, scale);
  }
  return p;
}

Eigen::VectorXd constant_fn(const Eigen::VectorXd&, Index n, double v) { return Eigen::VectorXd::Constant(n, v); }

}  // namespace

TEST(Coupling, ScaleAndShiftExample) {
  const Eigen::Vector2d z(1.0, 1.0);
  auto s = [](const Eigen::VectorXd& h) { return constant_fn(h, 1, std::log(2.0)); };
  auto t = [](const Eigen::VectorXd& h) { return constant_fn(h, 1, 0.5); };
  const CouplingResult r = coupling_forward(z, s, t, 1);
  EXPECT_DOUBLE_EQ(r.z(0), 1.0);
  EXPECT_DOUBLE_EQ(r.z(1), 2.5);
  EXPECT_DOUBLE_EQ(r.logdet, std::log(2.0));
}

TEST(Coupling, ZeroNetworksAreIdentity) {
  const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(5, -1.0, 3.0);
  auto zero = [](const Eigen::VectorXd& h) { return constant_fn(h, 3, 0.0); };
  const CouplingResult r = coupling_forward(z, zero, zero, 2);
  EXPECT_EQ(r.z, z);
  EXPECT_EQ(r.logdet, 0.0);
}

TEST(Coupling, InverseRoundTripAndJacobian) {
  const Matrix a = random_matrix(3, 2, 1), b = random_matrix(3, 2, 2);
  auto s = [&](const Eigen::VectorXd& h) { return Eigen::VectorXd((a * h).array().tanh()); };
  auto t = [&](const Eigen::VectorXd& h) { return Eigen::VectorXd(b * h); };
  Rng rng(3);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd z(5);
    for (Index j = 0; j < 5; ++j) z(j) = normal(rng);
    const CouplingResult r = coupling_forward(z, s, t, 2);
    EXPECT_LT((coupling_inverse(r.z, s, t, 2) - z).cwiseAbs().maxCoeff(), 1e-10);
    if (i < 20) {
      const Matrix jac = oracle::numerical_jacobian([&](const Eigen::VectorXd& v) { return coupling_forward(v, s, t, 2).z; }, z);
      EXPECT_NEAR(r.logdet, oracle::log_abs_det(jac), 1e-6);
    }
  }
}

TEST(Coupling, RejectsBadSplitAndOutputs) {
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(4);
  auto two = [](const Eigen::VectorXd& h) { return constant_fn(h, 2, 0.0); };
  auto one = [](const Eigen::VectorXd& h) { return constant_fn(h, 1, 0.0); };
  EXPECT_THROW(coupling_forward(z, two, two, 0), ShapeError);
  EXPECT_THROW(coupling_forward(z, two, two, 4), ShapeError);
  EXPECT_THROW(coupling_forward(z, one, two, 2), ShapeError);
  EXPECT_THROW(coupling_inverse(z, two, one, 2), ShapeError);
}

TEST(FlowStack, IdentityAtInitialization) {
  for (int steps : {0, 2}) {
    FlowConfig c{3, 4, steps, 0};
    Rng rng(4);
    ParamStore p;
    init_flow_params(p, c, rng);
    const Matrix z = random_matrix(7, 12, 5);
    Eigen::VectorXd logdet;
    EXPECT_EQ(flow_forward(p, c, z, &logdet), z);
    EXPECT_EQ(logdet, Eigen::VectorXd::Zero(7));
  }
}

TEST(FlowStack, RoundTripAndLogdetAgainstJacobian) {
  FlowConfig c{2, 5, 3, 2};
  const ParamStore p = random_flow(c, 6);
  Rng rng(7);
  std::normal_distribution<double> normal;
  Matrix z(1000, 10);
  for (Index i = 0; i < z.size(); ++i) z.data()[i] = normal(rng);
  Eigen::VectorXd logdet;
  const Matrix out = flow_forward(p, c, z, &logdet);
  EXPECT_LT((flow_inverse(p, c, out) - z).cwiseAbs().maxCoeff(), 1e-10);
  for (Index r = 0; r < 10; ++r) {
    auto row_map = [&](const Eigen::VectorXd& v) {
      return Eigen::VectorXd(flow_forward(p, c, Matrix(v.transpose())).row(0).transpose());
    };
    const Matrix jac = oracle::numerical_jacobian(row_map, z.row(r).transpose());
    EXPECT_NEAR(logdet(r), oracle::log_abs_det(jac), 1e-6);
  }
}

TEST(FlowStack, ChannelsTransformSeparately) {
  FlowConfig c{2, 4, 2, 0};
  const ParamStore p = random_flow(c, 8);
  Matrix z = random_matrix(5, 8, 9);
  const Matrix a = flow_forward(p, c, z);
  z.rightCols(4).setRandom();
  const Matrix b = flow_forward(p, c, z);
  EXPECT_EQ(a.leftCols(4), b.leftCols(4));
}

TEST(FlowStack, AlternatingStepsTransformBothHalves) {
  FlowConfig c{1, 4, 2, 0};
  const ParamStore p = random_flow(c, 10);
  const Matrix z = random_matrix(3, 4, 11);
  const Matrix out = flow_forward(p, c, z);
  EXPECT_GT((out.leftCols(2) - z.leftCols(2)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT((out.rightCols(2) - z.rightCols(2)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FlowStack, ClampCountsSaturatedScales) {
  FlowConfig c{1, 2, 1, 1};
  ParamStore p = random_flow(c, 12);
  Tape t;
  {
    BoundParams b(t, p, false);
    EXPECT_EQ(apply_flows(b, c, t.constant(random_matrix(4, 2, 13))).clamped, 0);
  }
  p.get_mut(flow_param(0, 0, "s", "b2")) = Matrix::Constant(1, 1, 50.0);
  BoundParams b(t, p, false);
  const FlowOutput out = apply_flows(b, c, t.constant(random_matrix(4, 2, 13)));
  EXPECT_EQ(out.clamped, 4);
  EXPECT_LT((out.logdet.value().array() - kFlowScaleClamp).abs().maxCoeff(), 1e-12);
}

TEST(FlowStack, ConfigValidation) {
  EXPECT_THROW((FlowConfig{1, 1, 1, 0}).validate(), std::invalid_argument);
  EXPECT_THROW((FlowConfig{1, 4, 1, 4}).validate(), std::invalid_argument);
  EXPECT_THROW((FlowConfig{1, 4, -1, 0}).validate(), std::invalid_argument);
  EXPECT_NO_THROW((FlowConfig{1, 1, 0, 0}).validate());
  EXPECT_EQ((FlowConfig{1, 5, 1, 0}).resolved_split(), 2);
}

TEST(FlowStack, GradientsMatchFiniteDifferences) {
  FlowConfig c{2, 4, 2, 0};
  const ParamStore p = random_flow(c, 14, 0.3);
  const Matrix z = random_matrix(6, 8, 15);
  const Matrix w = random_matrix(6, 8, 16);
  auto loss = [&](Tape& t, const BoundParams& b) {
    const FlowOutput out = apply_flows(b, c, t.constant(z));
    return add(sum(mul(out.z, t.constant(w))), sum(out.logdet));
  };
  const GradCheckResult r = grad_check(loss, p);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
}
