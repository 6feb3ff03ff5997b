#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <random>

#include "dse/estimability.hpp"
#include "test_support.hpp"

namespace dse {
namespace {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// Pattern of [E4; C2] derived directly from topology. Every branch has
// nonzero r and x, so each coupling block is a full 2x2 block; diagonal
// blocks are full for connected or device buses; unknown-bus rows are zero.
BoolMatrix pattern_oracle(const testing::RandomPlacement& p) {
  const NetworkModel& net = p.network;
  const int n = net.bus_count();
  const auto adj = net.adjacency();
  auto contains = [](const std::vector<int>& v, int id) {
    return std::find(v.begin(), v.end(), id) != v.end();
  };
  BoolMatrix pat = BoolMatrix::Constant(2 * n + 2 * static_cast<int>(p.pmus.size()),
                                        2 * n, false);
  auto block = [&](int row, int bus) { pat.block(row, 2 * bus, 2, 2).setConstant(true); };
  for (int i = 0; i < n; ++i) {
    const int id = net.buses()[i].id;
    if (contains(p.unknown, id)) continue;
    if (!adj[i].empty() || contains(p.device_buses, id)) block(2 * i, i);
    for (int j : adj[i]) block(2 * i, j);
  }
  for (std::size_t k = 0; k < p.pmus.size(); ++k) {
    const Pmu& pmu = p.pmus[k];
    const int row = 2 * n + 2 * static_cast<int>(k);
    const int b = net.index_of(pmu.bus);
    switch (pmu.kind) {
      case PmuKind::kVoltage:
        pat(row, 2 * b) = pat(row + 1, 2 * b + 1) = true;
        break;
      case PmuKind::kBranchCurrent:
        block(row, b);
        block(row, net.index_of(pmu.other));
        break;
      case PmuKind::kInjectionCurrent:
        block(row, b);
        for (int j : adj[b]) block(row, j);
        break;
    }
  }
  return pat;
}

// Generic rank of a pattern: full column rank of a random instantiation.
bool oracle_full_rank(const BoolMatrix& pat, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Matrix m = pat.cast<double>().unaryExpr([&](double s) { return s * n(rng); });
  if (m.cols() == 0) return true;
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() < m.cols()) return false;
  return s[m.cols() - 1] > 1e-9 * s[0];
}

StructuredPairGraph graph_of(const testing::RandomPlacement& p) {
  return build_structured_pair(p.network, p.unknown, p.device_buses, p.pmus);
}

TEST(Estimability, ThreeVertexToyPair) {
  // Columns v1..v3; rows v1..v3 of E, then v4 of C.
  //   E = [0 a12 0; 0 a22 a23; a31 0 0],  C = [0 0 a43]
  const std::vector<std::vector<int>> cols = {{2}, {0, 1}, {1, 3}};
  EXPECT_EQ(hopcroft_karp(3, 4, cols).size, 3);
  // Without a31 the first column is empty.
  EXPECT_EQ(hopcroft_karp(3, 4, {{}, {0, 1}, {1, 3}}).size, 2);
}

TEST(Estimability, SingleBusWithDevice) {
  const NetworkModel net({{1, {}}}, {});
  const auto g = build_structured_pair(net, {}, {1}, {});
  const auto cert = check_topological_estimability(g);
  EXPECT_TRUE(cert.estimable);
  EXPECT_EQ(cert.structural_rank, 2);
  EXPECT_TRUE(check_numeric_rank(g, 3, 1));
}

TEST(Estimability, IsolatedUnknownColumn) {
  // Unknown bus 3 is isolated: its columns carry no entries at all.
  const NetworkModel net({{1, {}}, {2, {}}, {3, {}}},
                         {{1, 2, 0.01, 0.1, 0.0, 1.0, true}});
  const auto g = build_structured_pair(net, {3}, {1, 2}, {});
  const auto cert = check_topological_estimability(g);
  EXPECT_FALSE(cert.estimable);
  EXPECT_EQ(cert.unmatched_columns.size(), 2u);
  EXPECT_FALSE(check_numeric_rank(g, 20, 2));
}

class AreaPlacement : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    area_ = new testing::AreaFixture(testing::area_fixture("case1_short_circuit.cfg"));
  }
  static void TearDownTestSuite() { delete area_; }
  static testing::AreaFixture* area_;
};
testing::AreaFixture* AreaPlacement::area_ = nullptr;

TEST_F(AreaPlacement, ReferencePlacementIsEstimable) {
  const auto g = build_structured_pair(*area_->model);
  const auto cert = check_topological_estimability(g);
  EXPECT_TRUE(cert.estimable);
  EXPECT_EQ(cert.structural_rank, cert.columns);
  ASSERT_TRUE(cert.paths_found);
  EXPECT_EQ(cert.paths.size(), 5u);
  EXPECT_TRUE(verify_disjoint_paths(g, cert.paths, cert.assignment));
  EXPECT_TRUE(check_numeric_rank(g, 5, 3));

  // The published routing: 16->16, 20->34, 21->22, 23->23, 24->24.
  std::vector<int> assignment;
  for (const Pmu& p : g.pmus) assignment.push_back(p.assigned_bus());
  EXPECT_EQ(assignment, (std::vector<int>{19, 23, 34, 16, 24, 22}));
  EXPECT_TRUE(verify_disjoint_paths(g, testing::reference_area_paths(g), assignment));
  // A path that ends on another injector's bus is rejected.
  auto bad = testing::reference_area_paths(g);
  bad[1].buses = {20, 19, 16};
  EXPECT_FALSE(verify_disjoint_paths(g, bad, assignment));
}

TEST_F(AreaPlacement, DroppingLineCurrentPmuBreaksEstimability) {
  const CaseData d = load_case_file(testing::data_path("no_line_22_23_pmu.cfg"));
  const PowerSystemModel m(build_estimation_data(d, initialize_equilibrium(d)));
  const auto g = build_structured_pair(m);
  const auto cert = check_topological_estimability(g);
  EXPECT_FALSE(cert.estimable);
  EXPECT_EQ(cert.structural_rank + static_cast<int>(cert.unmatched_columns.size()),
            cert.columns);
  EXPECT_FALSE(cert.unmatched_columns.empty());
  EXPECT_FALSE(check_numeric_rank(g, 20, 4));
}

TEST_F(AreaPlacement, NumericRankAtEquilibrium) {
  // Actual parameters: [g_v; C2] at the operating point, then the full
  // discretized [E; C] at h = 0.02.
  const PowerSystemModel& m = *area_->model;
  const int nd = m.differential_size(), na = m.algebraic_size();
  const Vector y = area_->x0.head(nd), v = area_->x0.tail(na);
  const Matrix gv = m.jacobians(y, v).gv;
  Matrix e4c2(gv.rows() + m.measurement_size(), na);
  e4c2 << gv, m.measurement_matrix();
  EXPECT_EQ(numeric_column_rank(e4c2), na);

  for (SchemeKind k : {SchemeKind::kForwardEuler, SchemeKind::kBackwardEuler,
                       SchemeKind::kTrapezoidal}) {
    const auto lin = assemble_linearization(m, {k, 0.02}, area_->x0, area_->x0);
    Matrix ec(lin.E_k.rows() + m.measurement_size(), nd + na);
    ec << lin.E_k, Matrix::Zero(m.measurement_size(), nd), m.measurement_matrix();
    EXPECT_EQ(numeric_column_rank(ec), nd + na) << to_string(k);
  }
}

TEST(Estimability, NoUnknownsNoPmus) {
  const CaseData d = load_case_file(testing::data_path("steady_noiseless.cfg"));
  const NetworkModel net = d.network().subnetwork(d.area_buses());
  std::vector<int> devices;
  for (const Bus& b : net.buses()) devices.push_back(b.id);
  const auto g = build_structured_pair(net, {}, devices, {});
  EXPECT_TRUE(check_topological_estimability(g).estimable);
}

TEST(Estimability, PatternMatchesTopologyOracle) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 200; ++t) {
    const auto p = testing::random_placement(rng);
    EXPECT_EQ(structured_pattern(graph_of(p)), pattern_oracle(p)) << "placement " << t;
  }
}

TEST(Estimability, DecisionAgreesWithNumericRank) {
  std::mt19937_64 rng(2024);
  int estimable = 0;
  for (int t = 0; t < 200; ++t) {
    const auto p = testing::random_placement(rng);
    const auto g = graph_of(p);
    const bool decided = check_topological_estimability(g).estimable;
    EXPECT_EQ(decided, oracle_full_rank(pattern_oracle(p), rng)) << "placement " << t;
    EXPECT_EQ(decided, check_numeric_rank(g, 3, 100 + t)) << "placement " << t;
    estimable += decided;
  }
  // Both outcomes are exercised.
  EXPECT_GT(estimable, 20);
  EXPECT_LT(estimable, 180);
}

TEST(Estimability, DecisionIgnoresParameterValues) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.2, 5.0);
  for (int t = 0; t < 50; ++t) {
    auto p = testing::random_placement(rng);
    const bool before = check_topological_estimability(graph_of(p)).estimable;
    std::vector<Branch> branches = p.network.branches();
    for (Branch& br : branches) {
      br.r *= u(rng);
      br.x *= u(rng);
      br.b = 0.1 * u(rng);
      br.ratio = 0.9 + 0.04 * u(rng);
    }
    p.network = NetworkModel(p.network.buses(), branches);
    EXPECT_EQ(check_topological_estimability(graph_of(p)).estimable, before);
  }
}

TEST(Estimability, AddingPmuNeverHurts) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 100; ++t) {
    auto p = testing::random_placement(rng);
    const bool before = check_topological_estimability(graph_of(p)).estimable;
    std::uniform_int_distribution<int> bus(1, p.network.bus_count());
    Pmu extra;
    extra.kind = PmuKind::kVoltage;
    extra.bus = bus(rng);
    p.pmus.push_back(extra);
    const bool after = check_topological_estimability(graph_of(p)).estimable;
    EXPECT_TRUE(after || !before) << "placement " << t;
  }
}

TEST(Estimability, RejectsInvalidAssignment) {
  const NetworkModel net({{1, {}}, {2, {}}, {3, {}}},
                         {{1, 2, 0.01, 0.1, 0.0, 1.0, true},
                          {2, 3, 0.01, 0.1, 0.0, 1.0, true}});
  Pmu p;
  p.kind = PmuKind::kBranchCurrent;
  p.bus = 1;
  p.other = 2;
  p.assigned = 3;
  EXPECT_THROW(build_structured_pair(net, {1}, {}, {p}), std::invalid_argument);
}

}  // namespace
}  // namespace dse
