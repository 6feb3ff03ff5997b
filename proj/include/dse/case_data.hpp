#pragma once

#include <filesystem>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dse/devices.hpp"
#include "dse/network.hpp"
#include "dse/pmu.hpp"
#include "dse/psmodel.hpp"

namespace dse {

/// Parse or validation failure, with "file:line: " context in what().
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadRecord {
  int bus = 0;
  double p_mw = 0.0;
  double q_mvar = 0.0;
};

struct GeneratorRecord {
  int bus = 0;
  double p_mw = 0.0;
  double v_set = 1.0;
  MachineParams machine;
  ExciterParams exciter;
  GovernorParams governor;
  bool has_machine = false;
  bool has_exciter = false;
  bool has_governor = false;
};

enum class EventKind { kFaultApply, kFaultClear, kLoadStep };

struct ScenarioEvent {
  double time = 0.0;
  EventKind kind = EventKind::kFaultApply;
  int from = 0;             ///< faulted branch end / load bus
  int to = 0;
  double fraction = 0.5;    ///< fault location along the branch from `from`
  double dp_mw = 0.0;       ///< load step
  double dq_mvar = 0.0;
};

struct Scenario {
  double duration = 15.0;
  double step = 0.001;          ///< ground-truth integration step
  double scan_period = 0.02;    ///< PMU reporting period
  double noise_std = 0.001;     ///< PMU channel noise (pu)
  double fault_susceptance = -1e4;
  std::vector<ScenarioEvent> events;

  /// Event times increasing and inside the horizon; every clear follows a
  /// fault on the same branch. Throws ConfigError.
  void validate() const;
};

/// Estimator tuning carried by the case file.
struct EstimatorSettings {
  NoiseSettings noise;
  double init_rel_std = 0.01;          ///< relative error of initial states
  double init_speed_rel_std = 0.0005;  ///< ... for rotor speeds
  double p0_differential_floor = 1e-6; ///< minimum initial variance
  double p0_voltage = 0.04;            ///< initial variance of voltages
  double mse_window_start = 7.5;
};

/// Whole-system data plus the estimation area, PMUs and scenario.
struct CaseData {
  std::string source;
  double base_mva = 100.0;
  double frequency = 60.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<LoadRecord> loads;
  std::vector<GeneratorRecord> generators;
  int slack_bus = -1;
  std::vector<int> area;      ///< empty: whole system
  std::vector<int> unknown;
  std::vector<Pmu> pmus;
  double load_impedance_fraction = 0.5;
  double load_v_threshold = 0.7;
  Scenario scenario;
  EstimatorSettings estimator;

  NetworkModel network() const;
  std::vector<int> area_buses() const;
};

CaseData parse_case(std::istream& in, const std::string& name,
                    const std::filesystem::path& base_dir = {});
CaseData load_case_file(const std::filesystem::path& path);

}  // namespace dse
