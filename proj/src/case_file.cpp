#include "dse/case_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dse {
namespace {

class LineContext {
 public:
  LineContext(std::string file, int line, std::vector<std::string> tokens)
      : file_(std::move(file)), line_(line), tokens_(std::move(tokens)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(file_ + ":" + std::to_string(line_) + ": " + msg);
  }
  [[noreturn]] void fail_field(std::size_t i, const std::string& msg) const {
    fail("field " + std::to_string(i + 1) + " ('" +
         (i < tokens_.size() ? tokens_[i] : std::string()) + "'): " + msg);
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::size_t i) const {
    if (i >= tokens_.size()) fail("missing field " + std::to_string(i + 1));
    return tokens_[i];
  }

  void expect_count(std::size_t lo, std::size_t hi) const {
    if (tokens_.size() < lo || tokens_.size() > hi) {
      fail("'" + tokens_[0] + "' expects " +
           (lo == hi ? std::to_string(lo - 1)
                     : std::to_string(lo - 1) + " to " + std::to_string(hi - 1)) +
           " values, got " + std::to_string(tokens_.size() - 1));
    }
  }

  double number(std::size_t i) const {
    const std::string& s = token(i);
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail_field(i, "expected a number");
    }
    return v;
  }

  int integer(std::size_t i) const {
    const std::string& s = token(i);
    int v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      fail_field(i, "expected an integer");
    }
    return v;
  }

  double positive(std::size_t i) const {
    const double v = number(i);
    if (!(v > 0.0)) fail_field(i, "must be positive");
    return v;
  }

 private:
  std::string file_;
  int line_;
  std::vector<std::string> tokens_;
};

class CaseParser {
 public:
  explicit CaseParser(std::string source) { data_.source = std::move(source); }

  CaseData take() {
    finish();
    return std::move(data_);
  }

  void parse_stream(std::istream& in, const std::string& name,
                    const std::filesystem::path& base_dir, int depth) {
    if (depth > 8) throw ConfigError(name + ": include nesting too deep");
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const auto hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      std::istringstream ss(raw);
      std::vector<std::string> tokens;
      for (std::string t; ss >> t;) tokens.push_back(t);
      if (tokens.empty()) continue;
      LineContext ctx(name, line_no, std::move(tokens));
      if (ctx.token(0) == "include") {
        ctx.expect_count(2, 2);
        const std::filesystem::path p = base_dir / ctx.token(1);
        std::ifstream sub(p);
        if (!sub) ctx.fail("cannot open included file '" + p.string() + "'");
        parse_stream(sub, p.string(), p.parent_path(), depth + 1);
        continue;
      }
      parse_line(ctx);
    }
  }

 private:
  GeneratorRecord& generator_at(const LineContext& ctx, int bus) {
    for (auto& g : data_.generators) {
      if (g.bus == bus) return g;
    }
    ctx.fail("no 'generator' line declared for bus " + std::to_string(bus));
  }

  void parse_line(const LineContext& ctx) {
    const std::string& key = ctx.token(0);
    if (key == "base_mva") {
      ctx.expect_count(2, 2);
      data_.base_mva = ctx.positive(1);
    } else if (key == "frequency") {
      ctx.expect_count(2, 2);
      data_.frequency = ctx.positive(1);
    } else if (key == "bus") {
      ctx.expect_count(2, 4);
      if (ctx.size() == 3) ctx.fail("'bus' takes an id and optionally both gs and bs");
      Bus b;
      b.id = ctx.integer(1);
      if (ctx.size() == 4) b.shunt = Complex(ctx.number(2), ctx.number(3));
      if (!bus_ids_.insert(b.id).second) ctx.fail_field(1, "duplicate bus id");
      data_.buses.push_back(b);
    } else if (key == "branch") {
      ctx.expect_count(6, 7);
      Branch br;
      br.from = ctx.integer(1);
      br.to = ctx.integer(2);
      br.r = ctx.number(3);
      br.x = ctx.number(4);
      br.b = ctx.number(5);
      if (ctx.size() == 7) br.ratio = ctx.positive(6);
      require_bus(ctx, 1, br.from);
      require_bus(ctx, 2, br.to);
      if (br.r == 0.0 && br.x == 0.0) ctx.fail("branch impedance is zero");
      data_.branches.push_back(br);
    } else if (key == "load") {
      ctx.expect_count(4, 4);
      LoadRecord l{ctx.integer(1), ctx.number(2), ctx.number(3)};
      require_bus(ctx, 1, l.bus);
      data_.loads.push_back(l);
    } else if (key == "generator") {
      ctx.expect_count(4, 4);
      GeneratorRecord g;
      g.bus = ctx.integer(1);
      g.p_mw = ctx.number(2);
      g.v_set = ctx.positive(3);
      require_bus(ctx, 1, g.bus);
      for (const auto& other : data_.generators) {
        if (other.bus == g.bus) ctx.fail_field(1, "second generator on bus");
      }
      data_.generators.push_back(g);
    } else if (key == "slack") {
      ctx.expect_count(2, 2);
      data_.slack_bus = ctx.integer(1);
      require_bus(ctx, 1, data_.slack_bus);
    } else if (key == "machine") {
      ctx.expect_count(11, 11);
      GeneratorRecord& g = generator_at(ctx, ctx.integer(1));
      MachineParams& m = g.machine;
      m.h = ctx.positive(2);
      m.d = ctx.number(3);
      m.ra = ctx.number(4);
      m.xd = ctx.positive(5);
      m.xq = ctx.positive(6);
      m.xd1 = ctx.positive(7);
      m.xq1 = ctx.positive(8);
      m.td01 = ctx.positive(9);
      m.tq01 = ctx.positive(10);
      if (m.xd < m.xd1) ctx.fail("xd must not be below xd1");
      if (m.xq < m.xq1) ctx.fail("xq must not be below xq1");
      g.has_machine = true;
    } else if (key == "exciter") {
      ctx.expect_count(10, 10);
      GeneratorRecord& g = generator_at(ctx, ctx.integer(1));
      ExciterParams& e = g.exciter;
      e.ka = ctx.positive(2);
      e.ta = ctx.positive(3);
      e.ke = ctx.number(4);
      e.te = ctx.positive(5);
      e.kf = ctx.number(6);
      e.tf = ctx.positive(7);
      e.vr_min = ctx.number(8);
      e.vr_max = ctx.number(9);
      if (e.vr_min >= e.vr_max) ctx.fail("VRmin must be below VRmax");
      g.has_exciter = true;
    } else if (key == "governor") {
      ctx.expect_count(9, 9);
      GeneratorRecord& g = generator_at(ctx, ctx.integer(1));
      GovernorParams& p = g.governor;
      p.r = ctx.positive(2);
      p.t1 = ctx.positive(3);
      p.t2 = ctx.number(4);
      p.t3 = ctx.positive(5);
      p.v_min = ctx.number(6);
      p.v_max = ctx.number(7);
      p.dt = ctx.number(8);
      if (p.v_min >= p.v_max) ctx.fail("Vmin must be below Vmax");
      g.has_governor = true;
    } else if (key == "area" || key == "unknown") {
      ctx.expect_count(2, 10000);
      auto& list = key == "area" ? data_.area : data_.unknown;
      for (std::size_t i = 1; i < ctx.size(); ++i) {
        const int b = ctx.integer(i);
        require_bus(ctx, i, b);
        list.push_back(b);
      }
    } else if (key == "pmu") {
      parse_pmu(ctx);
    } else if (key == "load_model") {
      ctx.expect_count(3, 3);
      data_.load_impedance_fraction = ctx.number(1);
      if (data_.load_impedance_fraction < 0.0 ||
          data_.load_impedance_fraction > 1.0) {
        ctx.fail_field(1, "impedance fraction must be in [0, 1]");
      }
      data_.load_v_threshold = ctx.positive(2);
    } else if (key == "duration") {
      ctx.expect_count(2, 2);
      data_.scenario.duration = ctx.positive(1);
    } else if (key == "sim_step") {
      ctx.expect_count(2, 2);
      data_.scenario.step = ctx.positive(1);
    } else if (key == "scan_period") {
      ctx.expect_count(2, 2);
      data_.scenario.scan_period = ctx.positive(1);
    } else if (key == "pmu_noise") {
      ctx.expect_count(2, 2);
      data_.scenario.noise_std = ctx.number(1);
      if (data_.scenario.noise_std < 0.0) ctx.fail_field(1, "must be >= 0");
    } else if (key == "fault_susceptance") {
      ctx.expect_count(2, 2);
      data_.scenario.fault_susceptance = ctx.number(1);
    } else if (key == "event") {
      parse_event(ctx);
    } else if (key == "process_noise") {
      ctx.expect_count(4, 4);
      data_.estimator.noise.differential = ctx.positive(1);
      data_.estimator.noise.speed = ctx.positive(2);
      data_.estimator.noise.algebraic = ctx.positive(3);
    } else if (key == "init_error") {
      ctx.expect_count(3, 3);
      data_.estimator.init_rel_std = ctx.number(1);
      data_.estimator.init_speed_rel_std = ctx.number(2);
      if (data_.estimator.init_rel_std < 0 || data_.estimator.init_speed_rel_std < 0) {
        ctx.fail("init_error values must be >= 0");
      }
    } else if (key == "initial_covariance") {
      ctx.expect_count(3, 3);
      data_.estimator.p0_differential_floor = ctx.positive(1);
      data_.estimator.p0_voltage = ctx.positive(2);
    } else if (key == "mse_window") {
      ctx.expect_count(2, 2);
      data_.estimator.mse_window_start = ctx.number(1);
    } else {
      ctx.fail("unknown keyword '" + key + "'");
    }
  }

  void parse_pmu(const LineContext& ctx) {
    Pmu p;
    const std::string& kind = ctx.token(1);
    std::size_t next = 0;
    if (kind == "voltage") {
      p.kind = PmuKind::kVoltage;
      p.bus = ctx.integer(2);
      require_bus(ctx, 2, p.bus);
      next = 3;
    } else if (kind == "current") {
      p.kind = PmuKind::kBranchCurrent;
      p.bus = ctx.integer(2);
      p.other = ctx.integer(3);
      require_bus(ctx, 2, p.bus);
      require_bus(ctx, 3, p.other);
      next = 4;
    } else if (kind == "injection") {
      p.kind = PmuKind::kInjectionCurrent;
      p.bus = ctx.integer(2);
      require_bus(ctx, 2, p.bus);
      next = 3;
    } else {
      ctx.fail_field(1, "expected voltage, current or injection");
    }
    if (ctx.size() == next + 2) {
      if (ctx.token(next) != "assign") ctx.fail_field(next, "expected 'assign'");
      p.assigned = ctx.integer(next + 1);
      require_bus(ctx, next + 1, *p.assigned);
    } else if (ctx.size() != next) {
      ctx.fail("unexpected trailing fields after PMU definition");
    }
    if (p.kind == PmuKind::kVoltage && p.assigned && *p.assigned != p.bus) {
      ctx.fail("a voltage PMU can only be assigned to its own bus");
    }
    if (p.kind == PmuKind::kBranchCurrent && p.assigned &&
        *p.assigned != p.bus && *p.assigned != p.other) {
      ctx.fail("a branch-current PMU must be assigned to one of its ends");
    }
    data_.pmus.push_back(p);
  }

  void parse_event(const LineContext& ctx) {
    ScenarioEvent ev;
    const std::string& kind = ctx.token(1);
    ev.time = ctx.number(2);
    if (kind == "fault") {
      ctx.expect_count(5, 6);
      ev.kind = EventKind::kFaultApply;
      ev.from = ctx.integer(3);
      ev.to = ctx.integer(4);
      if (ctx.size() == 6) ev.fraction = ctx.number(5);
      if (!(ev.fraction > 0.0 && ev.fraction < 1.0)) {
        ctx.fail_field(5, "fault location must be strictly inside (0, 1)");
      }
    } else if (kind == "clear") {
      ctx.expect_count(5, 5);
      ev.kind = EventKind::kFaultClear;
      ev.from = ctx.integer(3);
      ev.to = ctx.integer(4);
    } else if (kind == "load_step") {
      ctx.expect_count(6, 6);
      ev.kind = EventKind::kLoadStep;
      ev.from = ctx.integer(3);
      ev.dp_mw = ctx.number(4);
      ev.dq_mvar = ctx.number(5);
      require_bus(ctx, 3, ev.from);
    } else {
      ctx.fail_field(1, "expected fault, clear or load_step");
    }
    data_.scenario.events.push_back(ev);
  }

  void require_bus(const LineContext& ctx, std::size_t field, int id) const {
    if (!bus_ids_.count(id)) ctx.fail_field(field, "bus not declared");
  }

  void finish() {
    const std::string& name = data_.source;
    if (data_.buses.empty()) throw ConfigError(name + ": no buses defined");
    if (data_.slack_bus < 0) throw ConfigError(name + ": no slack bus defined");
    bool slack_has_gen = false;
    for (const auto& g : data_.generators) {
      if (!g.has_machine || !g.has_exciter || !g.has_governor) {
        throw ConfigError(name + ": generator at bus " + std::to_string(g.bus) +
                          " needs machine, exciter and governor lines");
      }
      slack_has_gen |= g.bus == data_.slack_bus;
    }
    if (!slack_has_gen) {
      throw ConfigError(name + ": slack bus has no generator");
    }
    const auto area = data_.area_buses();
    const std::set<int> area_set(area.begin(), area.end());
    for (int b : data_.unknown) {
      if (!area_set.count(b)) {
        throw ConfigError(name + ": unknown injector bus " + std::to_string(b) +
                          " is outside the estimation area");
      }
    }
    for (const Pmu& p : data_.pmus) {
      if (!area_set.count(p.bus) ||
          (p.kind == PmuKind::kBranchCurrent && !area_set.count(p.other))) {
        throw ConfigError(name + ": PMU " + p.label() +
                          " is outside the estimation area");
      }
    }
    try {
      data_.network();  // branch checks
    } catch (const std::exception& e) {
      throw ConfigError(name + ": " + e.what());
    }
    data_.scenario.validate();
  }

  CaseData data_;
  std::set<int> bus_ids_;
};

}  // namespace

void Scenario::validate() const {
  if (!(step > 0.0) || !(scan_period > 0.0) || !(duration > 0.0)) {
    throw ConfigError("scenario: step, scan period and duration must be positive");
  }
  const double ratio = scan_period / step;
  if (std::abs(ratio - std::round(ratio)) > 1e-9) {
    throw ConfigError("scenario: scan period must be a multiple of sim_step");
  }
  double last = -1.0;
  std::map<std::pair<int, int>, bool> faulted;
  for (const ScenarioEvent& ev : events) {
    if (!(ev.time > last)) {
      throw ConfigError("scenario: event times must be strictly increasing");
    }
    if (ev.time < 0.0 || ev.time >= duration) {
      throw ConfigError("scenario: event time outside the simulated horizon");
    }
    last = ev.time;
    const auto key = std::minmax(ev.from, ev.to);
    if (ev.kind == EventKind::kFaultApply) {
      faulted[key] = true;
    } else if (ev.kind == EventKind::kFaultClear) {
      if (!faulted[key]) {
        throw ConfigError("scenario: clear at t=" + std::to_string(ev.time) +
                          " has no preceding fault on branch " +
                          std::to_string(ev.from) + "-" + std::to_string(ev.to));
      }
      faulted[key] = false;
    }
  }
}

NetworkModel CaseData::network() const {
  return NetworkModel(buses, branches, base_mva, frequency);
}

std::vector<int> CaseData::area_buses() const {
  if (!area.empty()) return area;
  std::vector<int> out;
  for (const Bus& b : buses) out.push_back(b.id);
  return out;
}

CaseData parse_case(std::istream& in, const std::string& name,
                    const std::filesystem::path& base_dir) {
  CaseParser parser(name);
  parser.parse_stream(in, name, base_dir, 0);
  return parser.take();
}

CaseData load_case_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open case file '" + path.string() + "'");
  return parse_case(in, path.string(), path.parent_path());
}

}  // namespace dse
