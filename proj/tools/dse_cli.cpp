#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dse/case_data.hpp"
#include "dse/estimability.hpp"
#include "dse/runner.hpp"
#include "dse/simulator.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kFailed = 1,
  kConfigError = 2,
  kNotEstimable = 3,
};

nlohmann::json certificate_json(const dse::StructuredPairGraph& g,
                                const dse::EstimabilityCertificate& c) {
  nlohmann::json j;
  j["estimable"] = c.estimable;
  j["structural_rank"] = c.structural_rank;
  j["columns"] = c.columns;
  j["paths_found"] = c.paths_found;
  j["paths"] = nlohmann::json::array();
  for (const auto& p : c.paths) {
    j["paths"].push_back({{"injector", p.injector},
                          {"buses", p.buses},
                          {"pmu", g.pmus[p.pmu].label()}});
  }
  j["assignment"] = nlohmann::json::object();
  for (std::size_t k = 0; k < c.assignment.size(); ++k) {
    j["assignment"][g.pmus[k].label()] = c.assignment[k];
  }
  j["unmatched_columns"] = nlohmann::json::array();
  for (int col : c.unmatched_columns) j["unmatched_columns"].push_back(g.vertex_name(col));
  return j;
}

int cmd_estimability(const std::string& config, bool as_json) {
  const dse::CaseData data = dse::load_case_file(config);
  const dse::Equilibrium eq = dse::initialize_equilibrium(data);
  const dse::PowerSystemModel model(dse::build_estimation_data(data, eq));
  const dse::StructuredPairGraph graph = dse::build_structured_pair(model);
  const dse::EstimabilityCertificate cert = dse::check_topological_estimability(graph);
  if (as_json) {
    nlohmann::json j = certificate_json(graph, cert);
    j["numeric_rank_check"] = dse::check_numeric_rank(graph, 3, 1);
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << dse::render_certificate(graph, cert);
  }
  return cert.estimable ? kOk : kNotEstimable;
}

int cmd_simulate(const std::string& config, const std::string& out,
                 std::uint64_t seed) {
  const dse::CaseData data = dse::load_case_file(config);
  const dse::Equilibrium eq = dse::initialize_equilibrium(data);
  const dse::Trajectory traj = dse::simulate(data, eq);
  const dse::GroundTruthModel truth(data.network(), eq.units, eq.loads);
  std::vector<std::string> names;
  for (const auto& u : truth.units()) {
    static constexpr const char* kNames[] = {"delta", "omega", "eq1", "ed1", "eq2", "ed2",
                                             "efd",   "vr",    "rf",  "pv",  "pt"};
    for (const char* s : kNames) names.push_back("G" + std::to_string(u.bus) + "." + s);
  }
  for (const auto& b : truth.network().buses()) {
    names.push_back("V" + std::to_string(b.id) + ".re");
    names.push_back("V" + std::to_string(b.id) + ".im");
  }
  std::filesystem::create_directories(out);
  dse::write_csv(std::filesystem::path(out) / "trajectory.csv", names, traj.time,
                 traj.state);
  const dse::MeasurementStream ms = dse::sample_pmu(
      traj, truth, data.pmus, data.scenario.scan_period, data.scenario.noise_std, seed);
  dse::write_csv(std::filesystem::path(out) / "measurements.csv", ms.channels, ms.time,
                 ms.z);
  std::cout << "simulated " << traj.time.size() << " scans, "
            << traj.factorizations << " factorizations, " << traj.newton_iterations
            << " Newton iterations\n";
  return kOk;
}

int cmd_run(const std::string& config, const std::vector<std::string>& schemes,
            const std::vector<std::uint64_t>& seeds, double epsilon, int max_iter,
            const std::string& out, bool override_estimability, int jobs) {
  dse::CaseData data = dse::load_case_file(config);
  dse::FilterConfig filter;
  filter.epsilon = epsilon;
  filter.max_iterations = max_iter;
  filter.validate();
  std::vector<dse::RunOptions> runs;
  for (const std::string& s : schemes) {
    for (std::uint64_t seed : seeds) {
      dse::RunOptions o;
      o.scheme = dse::parse_scheme_kind(s);
      o.seed = seed;
      o.filter = filter;
      o.override_estimability = override_estimability;
      runs.push_back(o);
    }
  }
  const dse::PreparedCase prepared = dse::prepare_case(std::move(data));
  if (!prepared.certificate.estimable) {
    std::cerr << dse::render_certificate(prepared.graph, prepared.certificate);
    if (!override_estimability) {
      std::cerr << "refusing to run: configuration is not estimable "
                   "(use --override-estimability)\n";
      return kNotEstimable;
    }
  }

  const bool nested = runs.size() > 1;
  std::vector<dse::RunReport> reports(runs.size());
  std::vector<std::string> errors(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < runs.size();) {
      try {
        reports[i] = dse::run_estimator(prepared, runs[i]);
        std::filesystem::path dir(out);
        if (nested) {
          dir /= dse::to_string(runs[i].scheme) + "_seed" + std::to_string(runs[i].seed);
        }
        dse::write_report(dir, prepared, reports[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(runs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = kOk;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    std::cout << "== " << dse::to_string(runs[i].scheme) << " seed " << runs[i].seed
              << '\n';
    if (!errors[i].empty()) {
      std::cout << "error: " << errors[i] << '\n';
      code = kFailed;
      continue;
    }
    std::cout << dse::format_summary(reports[i]);
    if (reports[i].diverged) code = kFailed;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic state estimation for power systems with unknown injectors"};
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "simulate a case and run the estimator");
  run->add_option("config", config, "case file")->required()->check(CLI::ExistingFile);
  std::vector<std::string> schemes{"trapezoidal"};
  std::vector<std::uint64_t> seeds{1};
  double epsilon = 1e-4;
  int max_iter = 10;
  std::string out = "out";
  bool override_est = false;
  int jobs = 1;
  run->add_option("--scheme", schemes, "forward | backward | trapezoidal (repeatable)")
      ->check(CLI::IsMember({"forward", "forward-euler", "backward", "backward-euler",
                             "trapezoidal"}))
      ->capture_default_str();
  run->add_option("--seed", seeds, "random seed(s) for noise and initialization")
      ->capture_default_str();
  run->add_option("--epsilon", epsilon, "iteration stop threshold (infinity norm)")
      ->check(CLI::PositiveNumber)->capture_default_str();
  run->add_option("--max-iter", max_iter, "iteration cap per scan")
      ->check(CLI::Range(1, 1000))->capture_default_str();
  run->add_option("--out", out, "output directory")->capture_default_str();
  run->add_flag("--override-estimability", override_est,
                "run even when the placement is not estimable");
  run->add_option("--jobs", jobs, "parallel runs over scheme x seed")
      ->check(CLI::Range(1, 256))->capture_default_str();

  auto* est = app.add_subcommand("estimability", "check a PMU placement");
  est->add_option("config", config, "case file")->required()->check(CLI::ExistingFile);
  bool as_json = false;
  est->add_flag("--json", as_json, "machine-readable output");

  auto* sim = app.add_subcommand("simulate", "ground-truth simulation only");
  sim->add_option("config", config, "case file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", out, "output directory")->capture_default_str();
  std::uint64_t sim_seed = 1;
  sim->add_option("--seed", sim_seed, "PMU noise seed")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      return cmd_run(config, schemes, seeds, epsilon, max_iter, out, override_est, jobs);
    }
    if (*est) return cmd_estimability(config, as_json);
    if (*sim) return cmd_simulate(config, out, sim_seed);
  } catch (const dse::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kOk;
}
