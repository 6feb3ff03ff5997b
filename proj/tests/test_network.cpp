#include <gtest/gtest.h>

#include <random>
#include <stdexcept>

#include "dse/network.hpp"
#include "test_support.hpp"

namespace dse {
namespace {

// Y built entry by entry from the pi model, tap on the from side.
ComplexMatrix admittance_oracle(const std::vector<Bus>& buses,
                                const std::vector<Branch>& branches) {
  const int n = static_cast<int>(buses.size());
  auto pos = [&](int id) {
    for (int i = 0; i < n; ++i)
      if (buses[i].id == id) return i;
    throw std::logic_error("bus");
  };
  ComplexMatrix y = ComplexMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) y(i, i) += buses[i].shunt;
  for (const Branch& br : branches) {
    if (!br.in_service) continue;
    const Complex ys = 1.0 / Complex(br.r, br.x);
    const Complex half_b(0.0, br.b / 2.0);
    const double t = br.ratio;
    const int f = pos(br.from), k = pos(br.to);
    y(f, f) += (ys + half_b) / (t * t);
    y(k, k) += ys + half_b;
    y(f, k) -= ys / t;
    y(k, f) -= ys / t;
  }
  return y;
}

TEST(Network, AdmittanceMatchesOracle) {
  std::vector<Bus> buses = {{1, {0.0, 0.0}}, {5, {0.01, 0.2}}, {3, {0.0, -0.1}}};
  std::vector<Branch> branches = {
      {1, 5, 0.01, 0.1, 0.05, 1.0, true},
      {5, 3, 0.02, 0.2, 0.0, 1.05, true},
      {3, 1, 0.0, 0.05, 0.0, 0.98, true},
      {1, 3, 0.1, 0.3, 0.0, 1.0, false},
  };
  const NetworkModel net(buses, branches);
  const ComplexMatrix ref = admittance_oracle(buses, branches);
  EXPECT_LE((net.admittance_dense() - ref).norm(), 1e-12 * ref.norm());
}

TEST(Network, CaseAdmittanceIsSymmetricAndMatchesOracle) {
  const auto data = load_case_file(testing::data_path("case1_short_circuit.cfg"));
  const NetworkModel net = data.network();
  ASSERT_EQ(net.bus_count(), 39);
  EXPECT_TRUE(net.is_connected());
  const ComplexMatrix y = net.admittance_dense();
  EXPECT_LE((y - y.transpose()).norm(), 1e-12 * y.norm());
  const ComplexMatrix ref = admittance_oracle(net.buses(), net.branches());
  EXPECT_LE((y - ref).norm(), 1e-12 * ref.norm());
}

TEST(Network, RealExpansionActsLikeComplexProduct) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix y(4, 4);
  ComplexVector v(4);
  for (int i = 0; i < 4; ++i) {
    v[i] = {n(rng), n(rng)};
    for (int j = 0; j < 4; ++j) y(i, j) = {n(rng), n(rng)};
  }
  const Matrix yr = real_expansion(y);
  Vector vr(8);
  for (int i = 0; i < 4; ++i) {
    vr[2 * i] = v[i].real();
    vr[2 * i + 1] = v[i].imag();
  }
  const ComplexVector i_ref = y * v;
  const Vector i_real = yr * vr;
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(i_real[2 * i], i_ref[i].real(), 1e-12);
    EXPECT_NEAR(i_real[2 * i + 1], i_ref[i].imag(), 1e-12);
  }
}

TEST(Network, SubnetworkKeepsInternalBranchesOnly) {
  const auto data = load_case_file(testing::data_path("case1_short_circuit.cfg"));
  const NetworkModel net = data.network();
  const NetworkModel sub = net.subnetwork({16, 19, 21, 22, 23, 24});
  ASSERT_EQ(sub.bus_count(), 6);
  EXPECT_EQ(sub.index_of(16), 0);
  EXPECT_EQ(sub.index_of(24), 5);
  for (const Branch& br : sub.branches()) {
    EXPECT_TRUE(sub.has_bus(br.from) && sub.has_bus(br.to));
  }
  EXPECT_TRUE(sub.find_branch(16, 19).has_value());
  EXPECT_TRUE(sub.find_branch(23, 22).has_value());
  EXPECT_FALSE(sub.find_branch(16, 17).has_value());
  EXPECT_THROW(sub.index_of(17), std::out_of_range);
}

TEST(Network, AdjacencyAndConnectivity) {
  const NetworkModel net({{1, {}}, {2, {}}, {3, {}}},
                         {{1, 2, 0.0, 0.1, 0.0, 1.0, true}});
  const auto adj = net.adjacency();
  EXPECT_EQ(adj[0], std::vector<int>{1});
  EXPECT_TRUE(adj[2].empty());
  EXPECT_FALSE(net.is_connected());
}

}  // namespace
}  // namespace dse
