#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dse/network.hpp"

namespace dse {

enum class PmuKind { kVoltage, kBranchCurrent, kInjectionCurrent };

/// One phasor channel pair (real, imaginary).
///  - kVoltage: voltage at `bus`.
///  - kBranchCurrent: current leaving `bus` on the branch towards `other`.
///  - kInjectionCurrent: net network current injected at `bus`.
/// `assigned` is the bus the measurement is attributed to in the
/// estimability graph; when empty, `bus` is used.
struct Pmu {
  PmuKind kind = PmuKind::kVoltage;
  int bus = 0;
  int other = 0;
  std::optional<int> assigned;

  int assigned_bus() const { return assigned.value_or(bus); }
  std::string label() const;
};

/// C2 for the given network: 2 rows per PMU over interleaved (re, im)
/// bus voltages. Throws std::invalid_argument for PMUs that reference a bus
/// or branch absent from `network`.
Matrix measurement_matrix(const NetworkModel& network,
                          const std::vector<Pmu>& pmus);

/// Buses whose voltages a PMU row depends on (structural, for assignment
/// checks).
std::vector<int> pmu_support(const NetworkModel& network, const Pmu& pmu);

}  // namespace dse
