#include <gtest/gtest.h>

#include <random>

#include "dse/psmodel.hpp"
#include "test_support.hpp"

namespace dse {
namespace {

using testing::AreaFixture;

// Analytic Jacobians against central differences of f~ and g.
double jacobian_error(const PowerSystemModel& m, const Vector& x) {
  const int nd = m.differential_size(), na = m.algebraic_size();
  const Vector y = x.head(nd), v = x.tail(na);
  const ModelJacobians j = m.jacobians(y, v);
  const auto f_y = [&](const Vector& a) { return m.differential_rhs(a, v); };
  const auto f_v = [&](const Vector& a) { return m.differential_rhs(y, a); };
  const auto g_y = [&](const Vector& a) { return m.algebraic_residual(a, v); };
  const auto g_v = [&](const Vector& a) { return m.algebraic_residual(y, a); };
  double worst = 0.0;
  worst = std::max(worst, testing::max_scaled_error(j.fy, testing::numeric_jacobian(f_y, y)));
  worst = std::max(worst, testing::max_scaled_error(j.fv, testing::numeric_jacobian(f_v, v)));
  worst = std::max(worst, testing::max_scaled_error(j.gy, testing::numeric_jacobian(g_y, y)));
  worst = std::max(worst, testing::max_scaled_error(j.gv, testing::numeric_jacobian(g_v, v)));
  return worst;
}

// Whole 39-bus system with every injector known and no PMUs.
AreaFixture full_system_fixture() {
  AreaFixture f;
  f.data = load_case_file(testing::data_path("steady_noiseless.cfg"));
  f.data.area.clear();
  f.data.unknown.clear();
  f.data.pmus.clear();
  f.equilibrium = initialize_equilibrium(f.data);
  f.model = std::make_unique<PowerSystemModel>(build_estimation_data(f.data, f.equilibrium));
  const GroundTruthModel truth(f.data.network(), f.equilibrium.units,
                              f.equilibrium.loads);
  f.x0 = project_truth(truth, *f.model, f.equilibrium.state);
  return f;
}

class AreaModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    area_ = new AreaFixture(testing::area_fixture("case1_short_circuit.cfg"));
  }
  static void TearDownTestSuite() { delete area_; }
  static AreaFixture* area_;
};
AreaFixture* AreaModel::area_ = nullptr;

TEST_F(AreaModel, Dimensions) {
  const PowerSystemModel& m = *area_->model;
  EXPECT_EQ(m.differential_size(), 4 * two_axis::kSize);
  EXPECT_EQ(m.algebraic_size(), 2 * 11);
  // Buses 19, 22 and 33-36 carry balance rows.
  EXPECT_EQ(m.equation_size(), 2 * 6);
  EXPECT_EQ(m.measurement_size(), 12);
  EXPECT_EQ(m.measurement_noise().rows(), 12);
}

TEST_F(AreaModel, EquilibriumIsStationary) {
  const PowerSystemModel& m = *area_->model;
  const int nd = m.differential_size();
  const Vector y = area_->x0.head(nd), v = area_->x0.tail(m.algebraic_size());
  EXPECT_LE(m.differential_rhs(y, v).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LE(m.algebraic_residual(y, v).lpNorm<Eigen::Infinity>(), 1e-8);
}

TEST_F(AreaModel, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Vector x = testing::perturbed_state(rng, *area_->model, area_->x0);
    EXPECT_LE(jacobian_error(*area_->model, x), 1e-5) << "trial " << trial;
  }
}

TEST_F(AreaModel, ZeroVoltageGivesZeroNetworkResidual) {
  // Without generator currents, every balance row is linear or homogeneous
  // in v: nodal currents and both load parts vanish at v = 0.
  EstimationModelData d = build_estimation_data(area_->data, area_->equilibrium);
  d.generators.clear();
  const PowerSystemModel m(d);
  const Vector r = m.algebraic_residual(Vector(0), Vector::Zero(m.algebraic_size()));
  EXPECT_LE(r.lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST_F(AreaModel, MeasurementRows) {
  const PowerSystemModel& m = *area_->model;
  const Matrix& c2 = m.measurement_matrix();
  const NetworkModel& net = m.network();
  std::mt19937_64 rng(5);
  const Vector v = testing::random_vector(rng, m.algebraic_size());
  auto phasor = [&](int id) {
    const int b = net.index_of(id);
    return Complex(v[2 * b], v[2 * b + 1]);
  };
  const Vector z = c2 * v;
  for (std::size_t p = 0; p < m.pmus().size(); ++p) {
    const Pmu& pmu = m.pmus()[p];
    Complex expected;
    if (pmu.kind == PmuKind::kVoltage) {
      expected = phasor(pmu.bus);
    } else {
      const Branch& br = net.branches()[*net.find_branch(pmu.bus, pmu.other)];
      const BranchAdmittance ya = br.admittance();
      expected = br.from == pmu.bus
                     ? ya.ff * phasor(pmu.bus) + ya.ft * phasor(pmu.other)
                     : ya.tt * phasor(pmu.bus) + ya.tf * phasor(pmu.other);
    }
    EXPECT_NEAR(z[2 * p], expected.real(), 1e-12) << pmu.label();
    EXPECT_NEAR(z[2 * p + 1], expected.imag(), 1e-12) << pmu.label();
  }
}

TEST_F(AreaModel, RemovingAnUnknownAddsTwoRows) {
  CaseData data = area_->data;
  data.unknown.erase(std::find(data.unknown.begin(), data.unknown.end(), 16));
  const PowerSystemModel m(build_estimation_data(data, area_->equilibrium));
  EXPECT_EQ(m.equation_size(), area_->model->equation_size() + 2);
  EXPECT_EQ(m.algebraic_size(), area_->model->algebraic_size());
}

TEST_F(AreaModel, SwitchingModeLatchesLimiter) {
  const PowerSystemModel& m = *area_->model;
  const int nd = m.differential_size();
  Vector y = area_->x0.head(nd);
  const Vector v = area_->x0.tail(m.algebraic_size());
  const SwitchingMode free_mode = m.switching_mode(y, v);
  ASSERT_EQ(free_mode.size(), static_cast<std::size_t>(kUnitLimiters * 4));
  for (signed char s : free_mode) EXPECT_EQ(s, 0);

  // Exciter of the first unit pushed to its upper bound with a positive drive.
  const int vr = m.index_map().generator_state(0, two_axis::kVr);
  y[vr] = m.generators()[0].exciter.vr_max;
  // Raised rate feedback state drives VR upward.
  y[m.index_map().generator_state(0, two_axis::kRf)] += 5.0;
  const SwitchingMode held = m.switching_mode(y, v);
  EXPECT_EQ(held[0], 1);
  EXPECT_EQ(m.evaluate(y, v, held).rhs[vr], 0.0);
  EXPECT_GT(m.evaluate(y, v, free_mode).rhs[vr], 0.0);
  // The held mode removes VR's own dynamics from the Jacobian row.
  EXPECT_EQ(m.evaluate(y, v, held).jac.fy.row(vr).norm(), 0.0);
}

TEST(FullSystemModel, JacobiansAndEquilibrium) {
  const AreaFixture f = full_system_fixture();
  const PowerSystemModel& m = *f.model;
  EXPECT_EQ(m.differential_size(), 10 * two_axis::kSize);
  EXPECT_EQ(m.equation_size(), m.algebraic_size());
  const int nd = m.differential_size();
  const Vector y = f.x0.head(nd), v = f.x0.tail(m.algebraic_size());
  EXPECT_LE(m.differential_rhs(y, v).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LE(m.algebraic_residual(y, v).lpNorm<Eigen::Infinity>(), 1e-8);
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    EXPECT_LE(jacobian_error(m, testing::perturbed_state(rng, m, f.x0)), 1e-5);
  }
  // With every injector known the network block is solvable for v.
  const Matrix gv = m.jacobians(y, v).gv;
  Eigen::FullPivLU<Matrix> lu(gv);
  EXPECT_EQ(lu.rank(), gv.cols());
}

}  // namespace
}  // namespace dse
