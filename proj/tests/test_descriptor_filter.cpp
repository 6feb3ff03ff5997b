#include <gtest/gtest.h>

#include <random>

#include "dse/descriptor_filter.hpp"
#include "dse/discretize.hpp"
#include "dse/psmodel.hpp"
#include "test_support.hpp"

namespace dse {
namespace {

using testing::relative_error;

LinearDescriptorSystem scalar_system() {
  LinearDescriptorSystem s;
  s.E = Matrix::Ones(1, 1);
  s.A = Matrix::Ones(1, 1);
  s.C = Matrix::Ones(1, 1);
  s.Q = Matrix::Ones(1, 1);
  s.R = Matrix::Ones(1, 1);
  return s;
}

EstimatorState unit_prior(int n) {
  EstimatorState st;
  st.x = Vector::Zero(n);
  st.P = Matrix::Identity(n, n);
  return st;
}

TEST(LinearStep, ScalarZeroInputsHalvesInformation) {
  const auto next = linear_step(scalar_system(), unit_prior(1), Vector::Zero(1),
                                Vector::Zero(1));
  EXPECT_NEAR(next.x[0], 0.0, 1e-15);
  EXPECT_NEAR(next.P(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(next.k, 1);
}

TEST(LinearStep, ScalarMeasurementByHand) {
  // P^-1 = 1/2 + 1, x = P * 3.
  const auto next = linear_step(scalar_system(), unit_prior(1),
                                Vector::Constant(1, 3.0), Vector::Zero(1));
  EXPECT_NEAR(next.x[0], 2.0, 1e-14);
}

TEST(LinearStep, IdentitySystemWithZeroDataStaysAtZero) {
  LinearDescriptorSystem s;
  s.E = s.A = s.C = s.Q = s.R = Matrix::Identity(3, 3);
  const auto next = linear_step(s, unit_prior(3), Vector::Zero(3), Vector::Zero(3));
  EXPECT_LE(next.x.norm(), 1e-15);
}

TEST(LinearStep, ReducesToTextbookKalmanFilter) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + trial % 6;
    const int m = 1 + trial % 3;
    const Matrix F = testing::random_contraction(rng, n, 0.95);
    const Matrix Q = testing::random_spd(rng, n, 0.1);
    const Matrix H = testing::random_matrix(rng, m, n);
    const Matrix R = testing::random_spd(rng, m, 0.2);
    LinearDescriptorSystem sys;
    sys.E = Matrix::Identity(n, n);
    sys.A = F;
    sys.C = H;
    sys.Q = Q;
    sys.R = R;
    EstimatorState a = unit_prior(n), b = unit_prior(n);
    for (int k = 0; k < 100; ++k) {
      const Vector z = testing::random_vector(rng, m);
      a = linear_step(sys, a, z, Vector::Zero(n));
      b = testing::textbook_kalman_step(F, Q, H, R, b, z);
      ASSERT_LE(relative_error(a.x, b.x, 1e-12), 1e-10) << "trial " << trial;
      ASSERT_LE(relative_error(a.P, b.P), 1e-10) << "trial " << trial;
    }
  }
}

TEST(LinearStep, MatchesBatchRegression) {
  std::mt19937_64 rng(5);
  const auto c = testing::random_descriptor_case(rng, 4, 3, 2);
  EstimatorState st = c.prev;
  for (int k = 0; k < 10; ++k) {
    const Vector z = testing::random_vector(rng, 2);
    const Vector delta = testing::random_vector(rng, 3);
    const auto batch = batch_solve(c.sys, st, z, delta);
    st = linear_step(c.sys, st, z, delta);
    EXPECT_LE(relative_error(st.x, batch.x_k), 1e-8);
    EXPECT_LE(relative_error(st.P, batch.P_k), 1e-8);
  }
}

TEST(BatchSolve, ScalarAndIdentityCases) {
  const auto s = batch_solve(scalar_system(), unit_prior(1),
                             Vector::Constant(1, 3.0), Vector::Zero(1));
  EXPECT_NEAR(s.x_k[0], 2.0, 1e-12);
  LinearDescriptorSystem id;
  id.E = id.A = id.C = id.Q = id.R = Matrix::Identity(3, 3);
  const auto t = batch_solve(id, unit_prior(3), Vector::Zero(3), Vector::Zero(3));
  EXPECT_LE(t.x_k.norm(), 1e-15);
}

TEST(BatchSolve, SixStateSelfConsistency) {
  std::mt19937_64 rng(6);
  const auto c = testing::random_descriptor_case(rng, 6, 5, 3);
  const auto batch = batch_solve(c.sys, c.prev, c.z, c.delta);
  const auto step = linear_step(c.sys, c.prev, c.z, c.delta);
  EXPECT_LE(relative_error(step.x, batch.x_k), 1e-10);
}

TEST(LinearStep, CovarianceSymmetricPositiveAndInformationGrows) {
  std::mt19937_64 rng(8);
  auto c = testing::random_descriptor_case(rng, 5, 5, 2);
  // A with E = I and A = I: adding data never loses information.
  c.sys.E = c.sys.A = Matrix::Identity(5, 5);
  EstimatorState st = c.prev;
  for (int k = 0; k < 30; ++k) {
    const auto next = linear_step(c.sys, st, testing::random_vector(rng, 2),
                                  Vector::Zero(5));
    const double asym = (next.P - next.P.transpose()).lpNorm<Eigen::Infinity>();
    EXPECT_LE(asym, 1e-12 * next.P.lpNorm<Eigen::Infinity>());
    EXPECT_EQ(Eigen::LLT<Matrix>(next.P).info(), Eigen::Success);
    // Update information exceeds the propagated prior information.
    const Matrix prior_info = (c.sys.Q + st.P).inverse();
    const Eigen::SelfAdjointEigenSolver<Matrix> gain(next.P.inverse() - prior_info);
    EXPECT_GE(gain.eigenvalues().minCoeff(), -1e-9);
    st = next;
  }
}

TEST(LinearStep, RejectsMismatchedDimensionsAndRankDeficiency) {
  auto s = scalar_system();
  EXPECT_THROW(linear_step(s, unit_prior(2), Vector::Zero(1), Vector::Zero(1)),
               std::invalid_argument);
  s.E = Matrix::Zero(1, 2);
  s.A = Matrix::Zero(1, 2);
  s.C = Matrix::Zero(1, 2);
  EXPECT_THROW(linear_step(s, unit_prior(2), Vector::Zero(1), Vector::Zero(1)),
               FactorizationError);
}

TEST(FilterConfig, Validation) {
  FilterConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.epsilon = 1e-4;
  cfg.max_iterations = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Linearization, AffineModelHasZeroOffsetResidual) {
  std::mt19937_64 rng(21);
  const auto model = testing::random_affine_model(rng, 3, 4, 2);
  const DiscretizationScheme scheme{SchemeKind::kTrapezoidal, 0.02};
  const Vector xp = testing::random_vector(rng, 7);
  const Vector xi = testing::random_vector(rng, 7);
  const auto ws = assemble_linearization(model, scheme, xp, xi);
  // For affine f, g the linearization is exact: E x_i - A x_p - Delta equals
  // the true discretized residual, which for these data is a constant.
  const auto ws2 = assemble_linearization(model, scheme, testing::random_vector(rng, 7),
                                          testing::random_vector(rng, 7));
  EXPECT_LE((ws.Delta_k - ws2.Delta_k).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LE((ws.E_k - ws2.E_k).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Linearization, LinearModelHasZeroOffset) {
  std::mt19937_64 rng(22);
  const auto model = testing::random_affine_model(rng, 3, 4, 2, false);
  for (SchemeKind kind : {SchemeKind::kForwardEuler, SchemeKind::kBackwardEuler,
                          SchemeKind::kTrapezoidal}) {
    const auto ws = assemble_linearization(model, {kind, 0.02},
                                           testing::random_vector(rng, 7),
                                           testing::random_vector(rng, 7));
    EXPECT_LE(ws.Delta_k.lpNorm<Eigen::Infinity>(), 1e-14);
  }
}

TEST(Iekf, AffineModelConvergesInTwoIterations) {
  std::mt19937_64 rng(3);
  const auto model = testing::random_affine_model(rng, 3, 4, 2);
  for (SchemeKind kind : {SchemeKind::kForwardEuler, SchemeKind::kBackwardEuler,
                          SchemeKind::kTrapezoidal}) {
    EstimatorState prev;
    prev.x = testing::random_vector(rng, 7);
    prev.P = Matrix::Identity(7, 7);
    const auto res = iekf_step(model, {kind, 0.02}, prev,
                               testing::random_vector(rng, model.measurement_size()),
                               FilterConfig{});
    EXPECT_EQ(res.iterations, 2);
    EXPECT_TRUE(res.converged);
    EXPECT_LE(res.final_delta, 1e-12 * (1.0 + res.state.x.norm()));
  }
}

// Two-bus area: a known two-axis unit at bus 1, an unknown injector at bus 2
// observed by a voltage and a branch-current PMU.
PowerSystemModel two_bus_model() {
  Branch line;
  line.from = 1;
  line.to = 2;
  line.r = 0.01;
  line.x = 0.12;
  line.b = 0.02;
  EstimationModelData d;
  d.network = NetworkModel({{1, {0.0, 0.0}}, {2, {0.0, 0.0}}}, {line});
  GeneratorUnit u;
  u.bus = 1;
  u.machine.h = 3.0;
  u.machine.xd = 1.8;
  u.machine.xq = 1.7;
  u.machine.xd1 = 0.3;
  u.machine.xq1 = 0.55;
  u.machine.td01 = 8.0;
  u.machine.tq01 = 0.4;
  u.exciter = {20.0, 0.05, 1.0, 0.5, 0.05, 1.0, -10.0, 10.0};
  u.v_ref = 1.05;
  u.p_ref = 0.8;
  d.generators = {u};
  d.unknown_buses = {2};
  Pmu v2;
  v2.bus = 2;
  Pmu i21;
  i21.kind = PmuKind::kBranchCurrent;
  i21.bus = 2;
  i21.other = 1;
  d.pmus = {v2, i21};
  d.noise = {1e-4, 1e-5, 1e-4, 1e-2};
  return PowerSystemModel(d);
}

TEST(Iekf, FixedPointIsStationaryForTheNonlinearObjective) {
  const PowerSystemModel model = two_bus_model();
  const int nd = model.differential_size();
  const int n = model.state_size();
  EstimatorState prev;
  prev.x = Vector::Zero(n);
  prev.x << 0.6, 1.0, 1.0, 0.3, 2.0, 2.0, 0.1, 0.8, 0.8, 1.02, 0.1, 0.98, -0.02;
  prev.P = 1e-3 * Matrix::Identity(n, n);
  const Vector z = (Vector(4) << 0.97, -0.05, 0.7, -0.2).finished();
  const DiscretizationScheme scheme{SchemeKind::kTrapezoidal, 0.02};
  FilterConfig cfg;
  cfg.epsilon = 1e-13;
  cfg.max_iterations = 60;
  const auto res = iekf_step(model, scheme, prev, z, cfg);
  ASSERT_TRUE(res.converged);

  // Objective after eliminating x_{k-1}: Phi' S^-1 Phi + (C x - z)' R^-1 (.)
  // with Phi the discretized residual and S = Q + A P A' from the prior.
  const auto ws = assemble_linearization(model, scheme, prev.x, prev.x);
  Matrix q = Matrix::Zero(ws.E_k.rows(), ws.E_k.rows());
  q.topLeftCorner(nd, nd) = model.differential_noise();
  q.bottomRightCorner(model.equation_size(), model.equation_size()) =
      model.algebraic_noise();
  const Matrix s_inv = (q + ws.A_km1 * prev.P * ws.A_km1.transpose()).inverse();
  const Matrix r_inv = model.measurement_noise().inverse();
  const Matrix& c2 = model.measurement_matrix();
  const Vector f_prev = model.differential_rhs(prev.x.head(nd), prev.x.tail(n - nd));
  auto objective = [&](const Vector& x) {
    const Vector y = x.head(nd), v = x.tail(n - nd);
    Vector phi(ws.E_k.rows());
    phi.head(nd) = 0.5 * scheme.h * (f_prev + model.differential_rhs(y, v)) - y +
                   prev.x.head(nd);
    phi.tail(model.equation_size()) = model.algebraic_residual(y, v);
    const Vector e = c2 * v - z;
    return Vector::Constant(1, phi.dot(s_inv * phi) + e.dot(r_inv * e));
  };
  const Matrix grad = testing::numeric_jacobian(objective, res.state.x, 1e-6);
  EXPECT_LE(grad.lpNorm<Eigen::Infinity>(), 1e-6);

  // A single linearization is not yet stationary, so the check has teeth.
  cfg.max_iterations = 1;
  const auto once = iekf_step(model, scheme, prev, z, cfg);
  const Matrix grad1 = testing::numeric_jacobian(objective, once.state.x, 1e-6);
  EXPECT_GT(grad1.lpNorm<Eigen::Infinity>(), 1e-3);
}

TEST(InitialUpdate, AffineModelMatchesWeightedLeastSquares) {
  std::mt19937_64 rng(77);
  const auto model = testing::random_affine_model(rng, 3, 5, 3);
  const int nd = 3, na = 5, n = nd + na;
  EstimatorState prior;
  prior.x = testing::random_vector(rng, n);
  prior.P = testing::random_spd(rng, n, 0.5);
  prior.k = 0;
  const Vector z = testing::random_vector(rng, model.measurement_size());

  // min (x-x0)' P0^-1 (x-x0) + g' Qa^-1 g + (z-Cx)' R^-1 (z-Cx),
  // g = J x + d with d = g(0).
  Matrix j(model.equation_size(), n);
  const ModelJacobians jac = model.jacobians(prior.x.head(nd), prior.x.tail(na));
  j << jac.gy, jac.gv;
  const Vector d = model.algebraic_residual(Vector::Zero(nd), Vector::Zero(na));
  Matrix c = Matrix::Zero(model.measurement_size(), n);
  c.rightCols(na) = model.measurement_matrix();
  const Matrix p_inv = prior.P.inverse();
  const Matrix qa_inv = model.algebraic_noise().inverse();
  const Matrix r_inv = model.measurement_noise().inverse();
  const Matrix info = p_inv + j.transpose() * qa_inv * j + c.transpose() * r_inv * c;
  const Vector rhs = p_inv * prior.x - j.transpose() * qa_inv * d +
                     c.transpose() * r_inv * z;
  const Vector x_ref = info.ldlt().solve(rhs);

  FilterConfig cfg;
  cfg.epsilon = 1e-10;
  const IekfResult res = initial_update(model, prior, z, cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 2);
  EXPECT_EQ(res.state.k, 0);
  EXPECT_LE(testing::relative_error(res.state.x, x_ref), 1e-10);
  EXPECT_LE(testing::relative_error(res.state.P, Matrix(info.inverse())), 1e-9);
}

}  // namespace
}  // namespace dse
