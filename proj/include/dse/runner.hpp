#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dse/case_data.hpp"
#include "dse/descriptor_filter.hpp"
#include "dse/discretize.hpp"
#include "dse/estimability.hpp"
#include "dse/psmodel.hpp"
#include "dse/simulator.hpp"

namespace dse {

/// Refusal to run a non-estimable configuration without override.
class EstimabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Case data plus everything that does not depend on the scheme or seed:
/// equilibrium, ground-truth trajectory, estimation model and its
/// estimability certificate.
struct PreparedCase {
  CaseData data;
  Equilibrium equilibrium;
  Trajectory trajectory;
  std::unique_ptr<GroundTruthModel> truth;
  std::unique_ptr<PowerSystemModel> model;
  StructuredPairGraph graph;
  EstimabilityCertificate certificate;
  double simulation_seconds = 0.0;
};

PreparedCase prepare_case(CaseData data, const SimulationOptions& sim = {});

struct RunOptions {
  SchemeKind scheme = SchemeKind::kTrapezoidal;
  std::uint64_t seed = 1;
  FilterConfig filter;
  bool override_estimability = false;
};

struct RunReport {
  SchemeKind scheme = SchemeKind::kTrapezoidal;
  std::uint64_t seed = 0;
  std::vector<std::string> state_names;
  std::vector<double> time;
  std::vector<Vector> estimate;
  std::vector<Vector> truth;        ///< ground truth in the estimator layout
  std::vector<int> iterations;      ///< per scan (0 for the initial scan)
  std::vector<bool> converged;
  std::vector<double> step_ms;      ///< wall time of each filter step
  MeasurementStream measurements;

  bool diverged = false;
  std::string failure;
  double voltage_mse = 0.0;         ///< mean over area buses and window
  std::vector<double> bus_voltage_mse;
  double mse_window_start = 0.0;
  double t_avg_ms = 0.0;
  double t_max_ms = 0.0;
  int max_iterations = 0;
  int nonconverged_scans = 0;
};

/// Runs the estimator over the prepared scenario. Throws EstimabilityError
/// when the certificate is negative and no override is given. Filter
/// failures mark the report as diverged and keep the scans done so far.
RunReport run_estimator(const PreparedCase& prepared, const RunOptions& opts);

/// Voltage-magnitude MSE per area bus over scans with t >= window_start.
std::vector<double> bus_voltage_mse(const PowerSystemModel& model,
                                    const RunReport& report, double window_start);

/// Root-mean-square error of state `index` over scans with t >= from.
double state_rmse(const RunReport& report, int index, double from,
                  double to = 1e300);

/// truth.csv, estimate.csv, measurements.csv, scans.csv and manifest.txt
/// are deterministic; summary.txt and timing.csv carry wall-clock data.
void write_report(const std::filesystem::path& dir, const PreparedCase& prepared,
                  const RunReport& report);

std::string format_summary(const RunReport& report);

}  // namespace dse
