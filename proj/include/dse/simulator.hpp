#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "dse/case_data.hpp"
#include "dse/devices.hpp"
#include "dse/network.hpp"
#include "dse/power_flow.hpp"
#include "dse/psmodel.hpp"

namespace dse {

/// Integration failure (Newton divergence or state blow-up) at `time`.
class SimulationError : public std::runtime_error {
 public:
  SimulationError(const std::string& msg, double time)
      : std::runtime_error(msg + " at t=" + std::to_string(time) + " s"),
        time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

/// Steady operating point of the full system: power flow plus device
/// set points and internal states.
struct Equilibrium {
  PowerFlowResult power_flow;
  std::vector<GeneratorUnit> units;   ///< set points filled in
  std::vector<TruthLoad> loads;
  Vector state;                        ///< ground-truth state [y; v]
};

/// Fully known DAE of the whole system with the richer machine model.
/// Layout: subtransient::kSize states per generator, then interleaved
/// (re, im) voltages of all buses in network order.
class GroundTruthModel {
 public:
  GroundTruthModel(NetworkModel network, std::vector<GeneratorUnit> units,
                   std::vector<TruthLoad> loads);

  int differential_size() const { return subtransient::kSize * unit_count(); }
  int algebraic_size() const { return 2 * network_.bus_count(); }
  int size() const { return differential_size() + algebraic_size(); }
  int unit_count() const { return static_cast<int>(units_.size()); }

  const NetworkModel& network() const { return network_; }
  const std::vector<GeneratorUnit>& units() const { return units_; }
  const std::vector<TruthLoad>& loads() const { return loads_; }
  int unit_offset(int g) const { return subtransient::kSize * g; }
  int voltage_offset(int bus_id) const {
    return differential_size() + 2 * network_.index_of(bus_id);
  }

  /// Stacked [f~(x); g(x)].
  Vector residual(const Vector& x) const;
  /// d [f~; g] / d x, dense.
  Matrix jacobian(const Vector& x) const;

  /// Replaces the active admittance matrix (faults, line trips).
  void set_admittance(const ComplexMatrix& y);
  const ComplexMatrix& admittance() const { return y_; }
  /// Changes a load's consumed power; both load parts scale with it.
  void step_load(int bus_id, Complex delta_power, double impedance_fraction,
                 double v_base);

  /// Keeps limited states inside their bounds.
  void clamp_limits(Vector& x) const;

 private:
  NetworkModel network_;
  std::vector<GeneratorUnit> units_;
  std::vector<TruthLoad> loads_;
  std::vector<int> unit_pos_;
  std::vector<int> load_pos_;
  ComplexMatrix y_;
  Matrix y_real_;
  double omega_s_;
};

/// Ground-truth units with subtransient data derived from the two-axis set.
std::vector<GeneratorUnit> ground_truth_units(const CaseData& data);

/// Power flow for the case dispatch followed by device initialization.
/// Throws SimulationError on power-flow divergence and std::invalid_argument
/// when a limited state starts outside its bounds.
Equilibrium initialize_equilibrium(const CaseData& data);

/// Admittance matrix with a shunt fault at `fraction` along branch
/// from-to, the mid-line node eliminated.
ComplexMatrix faulted_admittance(const NetworkModel& network, int from, int to,
                                 double fraction, Complex fault_admittance);

struct Trajectory {
  std::vector<double> time;     ///< scan instants k * scan_period
  std::vector<Vector> state;    ///< full ground-truth state per scan
  int newton_iterations = 0;
  int factorizations = 0;
};

struct SimulationOptions {
  double newton_tolerance = 1e-10;
  int max_newton_iterations = 25;
  double blowup_limit = 1e3;
};

/// Fixed-step trapezoidal integration with simplified Newton. Events act at
/// the start of the internal step nearest to their time, after that
/// instant has been recorded.
Trajectory simulate(const CaseData& data, const Equilibrium& eq,
                    const SimulationOptions& opts = {});

struct MeasurementStream {
  double scan_period = 0.02;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> channels;  ///< "V19.re", "I16-19.im", ...
  std::vector<double> time;
  std::vector<Vector> z;
};

/// z_k = C2 v(t_k) + N(0, noise_std^2) per channel.
MeasurementStream sample_pmu(const Trajectory& traj, const GroundTruthModel& truth,
                             const std::vector<Pmu>& pmus, double scan_period,
                             double noise_std, std::uint64_t seed);

/// Estimation model of the case area built from the case data and the set
/// points found at equilibrium.
EstimationModelData build_estimation_data(const CaseData& data,
                                          const Equilibrium& eq);

/// Maps a ground-truth state onto the estimator layout of `model`.
Vector project_truth(const GroundTruthModel& truth, const PowerSystemModel& model,
                     const Vector& truth_state);

/// CSV with a time column followed by the named columns.
void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& names,
               const std::vector<double>& time, const std::vector<Vector>& rows);

}  // namespace dse
