#pragma once

#include <vector>

#include "dse/network.hpp"

namespace dse {

enum class BusType { kPQ, kPV, kSlack };

/// Per-bus specification in network order. Powers are net injections in pu.
/// `v_set` is used for PV and slack buses; the slack angle is zero.
struct PowerFlowSpec {
  std::vector<BusType> type;
  Vector p_injection;
  Vector q_injection;
  Vector v_set;
};

struct PowerFlowResult {
  ComplexVector voltage;
  ComplexVector injection;   ///< net complex power injection S = V conj(I)
  int iterations = 0;
  bool converged = false;
  double mismatch = 0.0;     ///< max-norm of the final mismatch
};

/// Newton-Raphson in polar coordinates from a flat start. Needs exactly one
/// slack bus; throws std::invalid_argument otherwise.
PowerFlowResult solve_power_flow(const NetworkModel& network,
                                 const PowerFlowSpec& spec,
                                 double tolerance = 1e-10,
                                 int max_iterations = 30);

}  // namespace dse
