#include "dse/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace dse {
namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

EstimatorState initial_estimate(const PowerSystemModel& model,
                                const EstimatorSettings& settings,
                                const Vector& truth0, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x1a2b3c}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int nd = model.differential_size();
  EstimatorState st;
  st.x = truth0;
  st.x.tail(model.algebraic_size()) = model.flat_start_voltages();
  Vector p0(model.state_size());
  for (int i = 0; i < nd; ++i) {
    const bool speed = (i % two_axis::kSize) == two_axis::kOmega;
    const double rel = speed ? settings.init_speed_rel_std : settings.init_rel_std;
    st.x[i] = truth0[i] * (1.0 + rel * normal(rng));
    p0[i] = std::max(std::pow(rel * truth0[i], 2), settings.p0_differential_floor);
  }
  p0.tail(model.algebraic_size()).setConstant(settings.p0_voltage);
  st.P = p0.asDiagonal();
  st.k = 0;
  return st;
}

}  // namespace

PreparedCase prepare_case(CaseData data, const SimulationOptions& sim) {
  PreparedCase pc;
  pc.data = std::move(data);
  pc.equilibrium = initialize_equilibrium(pc.data);
  pc.truth = std::make_unique<GroundTruthModel>(
      pc.data.network(), pc.equilibrium.units, pc.equilibrium.loads);
  pc.model = std::make_unique<PowerSystemModel>(
      build_estimation_data(pc.data, pc.equilibrium));
  pc.graph = build_structured_pair(*pc.model);
  pc.certificate = check_topological_estimability(pc.graph);
  const auto start = std::chrono::steady_clock::now();
  pc.trajectory = simulate(pc.data, pc.equilibrium, sim);
  pc.simulation_seconds = seconds_since(start);
  return pc;
}

RunReport run_estimator(const PreparedCase& prepared, const RunOptions& opts) {
  if (!prepared.certificate.estimable && !opts.override_estimability) {
    throw EstimabilityError(
        "configuration is not topologically estimable; rerun with the "
        "estimability override to force the estimator");
  }
  opts.filter.validate();
  const PowerSystemModel& model = *prepared.model;
  const CaseData& data = prepared.data;
  const Trajectory& traj = prepared.trajectory;

  RunReport rep;
  rep.scheme = opts.scheme;
  rep.seed = opts.seed;
  rep.state_names = model.index_map().names();
  rep.mse_window_start = data.estimator.mse_window_start;
  rep.measurements = sample_pmu(traj, *prepared.truth, data.pmus,
                                data.scenario.scan_period,
                                data.scenario.noise_std, opts.seed);

  const DiscretizationScheme scheme{opts.scheme, data.scenario.scan_period};
  EstimatorState st = initial_estimate(
      model, data.estimator, project_truth(*prepared.truth, model, traj.state[0]),
      opts.seed);

  auto record = [&](std::size_t k, int iters, bool conv, double ms) {
    rep.time.push_back(traj.time[k]);
    rep.estimate.push_back(st.x);
    rep.truth.push_back(project_truth(*prepared.truth, model, traj.state[k]));
    rep.iterations.push_back(iters);
    rep.converged.push_back(conv);
    rep.step_ms.push_back(ms);
  };
  {
    const IekfResult init =
        initial_update(model, st, rep.measurements.z[0], opts.filter);
    st = init.state;
    record(0, init.iterations, init.converged, 0.0);
  }

  for (std::size_t k = 1; k < traj.state.size(); ++k) {
    try {
      const auto start = std::chrono::steady_clock::now();
      IekfResult res = iekf_step(model, scheme, st, rep.measurements.z[k], opts.filter);
      const double ms = 1e3 * seconds_since(start);
      st = std::move(res.state);
      if (!st.x.allFinite()) throw std::domain_error("estimate became non-finite");
      record(k, res.iterations, res.converged, ms);
    } catch (const std::exception& e) {
      rep.diverged = true;
      rep.failure = "scan " + std::to_string(k) + " (t=" +
                    std::to_string(traj.time[k]) + " s): " + e.what();
      break;
    }
  }

  const std::size_t steps = rep.step_ms.size() - 1;
  double sum = 0.0;
  for (std::size_t k = 1; k < rep.step_ms.size(); ++k) {
    sum += rep.step_ms[k];
    rep.t_max_ms = std::max(rep.t_max_ms, rep.step_ms[k]);
    rep.max_iterations = std::max(rep.max_iterations, rep.iterations[k]);
    if (!rep.converged[k]) ++rep.nonconverged_scans;
  }
  rep.t_avg_ms = steps ? sum / static_cast<double>(steps) : 0.0;
  rep.bus_voltage_mse = bus_voltage_mse(model, rep, rep.mse_window_start);
  double total = 0.0;
  for (double v : rep.bus_voltage_mse) total += v;
  rep.voltage_mse = rep.bus_voltage_mse.empty()
                        ? 0.0
                        : total / static_cast<double>(rep.bus_voltage_mse.size());
  if (rep.diverged) rep.voltage_mse = std::numeric_limits<double>::infinity();
  return rep;
}

std::vector<double> bus_voltage_mse(const PowerSystemModel& model,
                                    const RunReport& report, double window_start) {
  const int nb = model.network().bus_count();
  std::vector<double> out(nb, 0.0);
  long count = 0;
  for (std::size_t k = 0; k < report.time.size(); ++k) {
    if (report.time[k] < window_start - 1e-9) continue;
    ++count;
    for (int b = 0; b < nb; ++b) {
      const int i = model.index_map().state_voltage_re(b);
      const double est = std::hypot(report.estimate[k][i], report.estimate[k][i + 1]);
      const double tru = std::hypot(report.truth[k][i], report.truth[k][i + 1]);
      out[b] += (est - tru) * (est - tru);
    }
  }
  // An empty window has no defined error.
  for (double& v : out) {
    v = count ? v / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

double state_rmse(const RunReport& report, int index, double from, double to) {
  double acc = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < report.time.size(); ++k) {
    if (report.time[k] < from - 1e-9 || report.time[k] > to + 1e-9) continue;
    const double e = report.estimate[k][index] - report.truth[k][index];
    acc += e * e;
    ++count;
  }
  return count ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
}

std::string format_summary(const RunReport& r) {
  std::ostringstream out;
  out.precision(6);
  out << "scheme            " << to_string(r.scheme) << '\n'
      << "seed              " << r.seed << '\n'
      << "scans             " << r.time.size() << '\n'
      << "t_avg_ms          " << r.t_avg_ms << '\n'
      << "t_max_ms          " << r.t_max_ms << '\n'
      << "max_iterations    " << r.max_iterations << '\n'
      << "nonconverged      " << r.nonconverged_scans << '\n'
      << "voltage_mse       " << r.voltage_mse << "  (t >= " << r.mse_window_start
      << " s)\n";
  if (r.diverged) out << "FAILED            " << r.failure << '\n';
  return out.str();
}

void write_report(const std::filesystem::path& dir, const PreparedCase& prepared,
                  const RunReport& report) {
  std::filesystem::create_directories(dir);
  write_csv(dir / "truth.csv", report.state_names, report.time, report.truth);
  write_csv(dir / "estimate.csv", report.state_names, report.time, report.estimate);
  write_csv(dir / "measurements.csv", report.measurements.channels,
            report.measurements.time, report.measurements.z);

  std::vector<Vector> scans;
  for (std::size_t k = 0; k < report.time.size(); ++k) {
    Vector row(2);
    row << report.iterations[k], report.converged[k] ? 1.0 : 0.0;
    scans.push_back(row);
  }
  write_csv(dir / "scans.csv", {"iterations", "converged"}, report.time, scans);

  std::vector<Vector> timing;
  for (double ms : report.step_ms) timing.push_back(Vector::Constant(1, ms));
  write_csv(dir / "timing.csv", {"step_ms"}, report.time, timing);

  std::ofstream manifest(dir / "manifest.txt");
  manifest << "# column -> estimator state index (truth.csv / estimate.csv)\n";
  for (std::size_t i = 0; i < report.state_names.size(); ++i) {
    manifest << report.state_names[i] << ' ' << i << '\n';
  }
  manifest << "# measurements.csv channels (rectangular, pu)\n";
  for (const std::string& c : report.measurements.channels) manifest << c << '\n';

  std::ofstream summary(dir / "summary.txt");
  summary << format_summary(report);
  summary << "simulation_s      " << prepared.simulation_seconds << '\n';
  const auto& buses = prepared.model->network().buses();
  for (std::size_t b = 0; b < report.bus_voltage_mse.size(); ++b) {
    summary << "mse_V" << buses[b].id << "  " << report.bus_voltage_mse[b] << '\n';
  }
}

}  // namespace dse
