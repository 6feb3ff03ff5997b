#include "dse/pmu.hpp"

#include <stdexcept>

namespace dse {
namespace {

void put(Matrix& c2, Eigen::Index row, int col_bus, Complex y) {
  c2(row, 2 * col_bus) += y.real();
  c2(row, 2 * col_bus + 1) += -y.imag();
  c2(row + 1, 2 * col_bus) += y.imag();
  c2(row + 1, 2 * col_bus + 1) += y.real();
}

void require_bus(const NetworkModel& net, int id, const Pmu& pmu) {
  if (!net.has_bus(id)) {
    throw std::invalid_argument("PMU " + pmu.label() +
                                " references bus " + std::to_string(id) +
                                " outside the network");
  }
}

}  // namespace

std::string Pmu::label() const {
  switch (kind) {
    case PmuKind::kVoltage: return "V" + std::to_string(bus);
    case PmuKind::kBranchCurrent:
      return "I" + std::to_string(bus) + "-" + std::to_string(other);
    case PmuKind::kInjectionCurrent: return "Iinj" + std::to_string(bus);
  }
  return "?";
}

Matrix measurement_matrix(const NetworkModel& network,
                          const std::vector<Pmu>& pmus) {
  const int n = network.bus_count();
  Matrix c2 = Matrix::Zero(2 * static_cast<Eigen::Index>(pmus.size()), 2 * n);
  const ComplexMatrix y = network.admittance_dense();
  for (std::size_t p = 0; p < pmus.size(); ++p) {
    const Pmu& pmu = pmus[p];
    const Eigen::Index row = 2 * static_cast<Eigen::Index>(p);
    require_bus(network, pmu.bus, pmu);
    const int b = network.index_of(pmu.bus);
    switch (pmu.kind) {
      case PmuKind::kVoltage:
        put(c2, row, b, Complex(1.0, 0.0));
        break;
      case PmuKind::kBranchCurrent: {
        require_bus(network, pmu.other, pmu);
        const auto idx = network.find_branch(pmu.bus, pmu.other);
        if (!idx) {
          throw std::invalid_argument("PMU " + pmu.label() +
                                      " references a missing branch");
        }
        const Branch& br = network.branches()[*idx];
        const BranchAdmittance ya = br.admittance();
        const int o = network.index_of(pmu.other);
        if (br.from == pmu.bus) {
          put(c2, row, b, ya.ff);
          put(c2, row, o, ya.ft);
        } else {
          put(c2, row, b, ya.tt);
          put(c2, row, o, ya.tf);
        }
        break;
      }
      case PmuKind::kInjectionCurrent:
        for (int j = 0; j < n; ++j) {
          if (y(b, j) != Complex(0.0, 0.0)) put(c2, row, j, y(b, j));
        }
        break;
    }
  }
  return c2;
}

std::vector<int> pmu_support(const NetworkModel& network, const Pmu& pmu) {
  switch (pmu.kind) {
    case PmuKind::kVoltage: return {pmu.bus};
    case PmuKind::kBranchCurrent: return {pmu.bus, pmu.other};
    case PmuKind::kInjectionCurrent: {
      std::vector<int> out{pmu.bus};
      const auto adj = network.adjacency();
      for (int j : adj[network.index_of(pmu.bus)]) {
        out.push_back(network.buses()[j].id);
      }
      return out;
    }
  }
  return {};
}

}  // namespace dse
