#include "dse/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include <Eigen/LU>

namespace dse {
namespace {

constexpr int kUnitIn = subtransient::kSize + 2;

Complex load_power(const LoadRecord& l, double base_mva) {
  return Complex(l.p_mw, l.q_mvar) / base_mva;
}

}  // namespace

GroundTruthModel::GroundTruthModel(NetworkModel network,
                                   std::vector<GeneratorUnit> units,
                                   std::vector<TruthLoad> loads)
    : network_(std::move(network)),
      units_(std::move(units)),
      loads_(std::move(loads)),
      omega_s_(2.0 * std::numbers::pi * network_.frequency()) {
  for (const GeneratorUnit& u : units_) unit_pos_.push_back(network_.index_of(u.bus));
  for (const TruthLoad& l : loads_) load_pos_.push_back(network_.index_of(l.bus));
  set_admittance(network_.admittance_dense());
}

void GroundTruthModel::set_admittance(const ComplexMatrix& y) {
  if (y.rows() != network_.bus_count() || y.cols() != network_.bus_count()) {
    throw std::invalid_argument("admittance matrix size mismatch");
  }
  y_ = y;
  y_real_ = real_expansion(y_);
}

void GroundTruthModel::step_load(int bus_id, Complex delta_power,
                                 double impedance_fraction, double v_base) {
  const int pos = network_.index_of(bus_id);
  auto it = std::find(load_pos_.begin(), load_pos_.end(), pos);
  if (it == load_pos_.end()) {
    TruthLoad l;
    l.bus = bus_id;
    if (!loads_.empty()) l.v_threshold = loads_.front().v_threshold;
    loads_.push_back(l);
    load_pos_.push_back(pos);
    it = load_pos_.end() - 1;
  }
  TruthLoad& l = loads_[it - load_pos_.begin()];
  l.admittance += impedance_fraction * std::conj(delta_power) / (v_base * v_base);
  l.power += (1.0 - impedance_fraction) * delta_power;
}

Vector GroundTruthModel::residual(const Vector& x) const {
  const int nd = differential_size();
  Vector out(size());
  Vector current = Vector::Zero(algebraic_size());
  for (int g = 0; g < unit_count(); ++g) {
    const int vb = nd + 2 * unit_pos_[g];
    double ir = 0.0, ii = 0.0;
    subtransient_unit(units_[g], omega_s_, x.data() + unit_offset(g), x[vb],
                      x[vb + 1], out.data() + unit_offset(g), ir, ii);
    current[vb - nd] += ir;
    current[vb - nd + 1] += ii;
  }
  for (std::size_t l = 0; l < loads_.size(); ++l) {
    const int vb = nd + 2 * load_pos_[l];
    double ir = 0.0, ii = 0.0;
    truth_load_injection(loads_[l], x[vb], x[vb + 1], ir, ii);
    current[vb - nd] += ir;
    current[vb - nd + 1] += ii;
  }
  out.tail(algebraic_size()) = current - y_real_ * x.tail(algebraic_size());
  return out;
}

Matrix GroundTruthModel::jacobian(const Vector& x) const {
  const int nd = differential_size();
  Matrix jac = Matrix::Zero(size(), size());
  jac.bottomRightCorner(algebraic_size(), algebraic_size()) = -y_real_;
  for (int g = 0; g < unit_count(); ++g) {
    const int off = unit_offset(g);
    const int vb = nd + 2 * unit_pos_[g];
    Eigen::Matrix<double, kUnitIn, 1> in;
    in.head<subtransient::kSize>() = x.segment<subtransient::kSize>(off);
    in.tail<2>() = x.segment<2>(vb);
    Eigen::Matrix<double, kUnitIn, 1> out;
    Eigen::Matrix<double, kUnitIn, kUnitIn> d;
    const GeneratorUnit& unit = units_[g];
    const double ws = omega_s_;
    local_jacobian<kUnitIn, kUnitIn>(in, [&](const auto* a, auto* r) {
      subtransient_unit(unit, ws, a, a[subtransient::kSize],
                        a[subtransient::kSize + 1], r, r[subtransient::kSize],
                        r[subtransient::kSize + 1]);
    }, out, d);
    constexpr int n = subtransient::kSize;
    jac.block<n, n>(off, off) = d.topLeftCorner<n, n>();
    jac.block<n, 2>(off, vb) = d.topRightCorner<n, 2>();
    jac.block<2, n>(vb, off) = d.bottomLeftCorner<2, n>();
    jac.block<2, 2>(vb, vb) += d.bottomRightCorner<2, 2>();
  }
  for (std::size_t l = 0; l < loads_.size(); ++l) {
    const int vb = nd + 2 * load_pos_[l];
    Eigen::Vector2d in = x.segment<2>(vb);
    Eigen::Vector2d out;
    Eigen::Matrix2d d;
    const TruthLoad& load = loads_[l];
    local_jacobian<2, 2>(in, [&](const auto* a, auto* r) {
      truth_load_injection(load, a[0], a[1], r[0], r[1]);
    }, out, d);
    jac.block<2, 2>(vb, vb) += d;
  }
  return jac;
}

void GroundTruthModel::clamp_limits(Vector& x) const {
  for (int g = 0; g < unit_count(); ++g) {
    const int off = unit_offset(g);
    const ExciterParams& e = units_[g].exciter;
    const GovernorParams& p = units_[g].governor;
    double& vr = x[off + subtransient::kVr];
    double& pv = x[off + subtransient::kPv];
    vr = std::clamp(vr, e.vr_min, e.vr_max);
    pv = std::clamp(pv, p.v_min, p.v_max);
  }
}

std::vector<GeneratorUnit> ground_truth_units(const CaseData& data) {
  std::vector<GeneratorUnit> out;
  for (const GeneratorRecord& g : data.generators) {
    GeneratorUnit u;
    u.bus = g.bus;
    u.machine = g.machine.with_derived_subtransient();
    u.exciter = g.exciter;
    u.governor = g.governor;
    out.push_back(u);
  }
  return out;
}

Equilibrium initialize_equilibrium(const CaseData& data) {
  const NetworkModel net = data.network();
  const int n = net.bus_count();
  const double base = data.base_mva;

  PowerFlowSpec spec;
  spec.type.assign(n, BusType::kPQ);
  spec.p_injection = Vector::Zero(n);
  spec.q_injection = Vector::Zero(n);
  spec.v_set = Vector::Ones(n);
  ComplexVector load_s = ComplexVector::Zero(n);
  for (const LoadRecord& l : data.loads) load_s[net.index_of(l.bus)] += load_power(l, base);
  for (int i = 0; i < n; ++i) {
    spec.p_injection[i] = -load_s[i].real();
    spec.q_injection[i] = -load_s[i].imag();
  }
  for (const GeneratorRecord& g : data.generators) {
    const int i = net.index_of(g.bus);
    spec.type[i] = g.bus == data.slack_bus ? BusType::kSlack : BusType::kPV;
    spec.p_injection[i] += g.p_mw / base;
    spec.v_set[i] = g.v_set;
  }

  Equilibrium eq;
  eq.power_flow = solve_power_flow(net, spec);
  if (!eq.power_flow.converged) {
    throw SimulationError("power flow did not converge (mismatch " +
                              std::to_string(eq.power_flow.mismatch) + ")",
                          0.0);
  }
  const ComplexVector& v = eq.power_flow.voltage;

  for (const LoadRecord& l : data.loads) {
    const int i = net.index_of(l.bus);
    const Complex s = load_power(l, base);
    TruthLoad tl;
    tl.bus = l.bus;
    tl.admittance = data.load_impedance_fraction * std::conj(s) / std::norm(v[i]);
    tl.power = (1.0 - data.load_impedance_fraction) * s;
    tl.v_threshold = data.load_v_threshold;
    eq.loads.push_back(tl);
  }

  eq.units = ground_truth_units(data);
  const int nd = subtransient::kSize * static_cast<int>(eq.units.size());
  eq.state = Vector::Zero(nd + 2 * n);
  for (std::size_t g = 0; g < eq.units.size(); ++g) {
    GeneratorUnit& u = eq.units[g];
    const MachineParams& m = u.machine;
    const int i = net.index_of(u.bus);
    const Complex s_gen = eq.power_flow.injection[i] + load_s[i];
    const Complex cur = std::conj(s_gen / v[i]);
    const double delta = std::arg(v[i] + Complex(m.ra, m.xq) * cur);
    const double sd = std::sin(delta), cd = std::cos(delta);
    const double vd = v[i].real() * sd - v[i].imag() * cd;
    const double vq = v[i].real() * cd + v[i].imag() * sd;
    const double id = cur.real() * sd - cur.imag() * cd;
    const double iq = cur.real() * cd + cur.imag() * sd;
    const double ed1 = (m.xq - m.xq1) * iq;
    const double eq1 = vq + m.ra * iq + m.xd1 * id;
    const double efd = eq1 + (m.xd - m.xd1) * id;
    const double pe = vd * id + vq * iq + m.ra * (id * id + iq * iq);
    const ExciterParams& e = u.exciter;
    const double vr = e.ke * efd;
    u.v_ref = std::abs(v[i]) + vr / e.ka;
    u.p_ref = pe;
    if (vr < e.vr_min || vr > e.vr_max) {
      throw std::invalid_argument("exciter at bus " + std::to_string(u.bus) +
                                  " starts outside its VR limits");
    }
    if (pe < u.governor.v_min || pe > u.governor.v_max) {
      throw std::invalid_argument("governor at bus " + std::to_string(u.bus) +
                                  " starts outside its valve limits");
    }
    using namespace subtransient;
    double* x = eq.state.data() + kSize * g;
    x[kDelta] = delta;
    x[kOmega] = 1.0;
    x[kEq1] = eq1;
    x[kEd1] = ed1;
    x[kEq2] = eq1 - (m.xd1 - m.xd2) * id;
    x[kEd2] = ed1 + (m.xq1 - m.xq2) * iq;
    x[kEfd] = efd;
    x[kVr] = vr;
    x[kRf] = e.kf / e.tf * efd;
    x[kPv] = pe;
    x[kPt] = pe;
  }
  for (int i = 0; i < n; ++i) {
    eq.state[nd + 2 * i] = v[i].real();
    eq.state[nd + 2 * i + 1] = v[i].imag();
  }
  return eq;
}

ComplexMatrix faulted_admittance(const NetworkModel& network, int from, int to,
                                 double fraction, Complex fault_admittance) {
  const auto idx = network.find_branch(from, to);
  if (!idx) {
    throw std::invalid_argument("fault on missing branch " + std::to_string(from) +
                                "-" + std::to_string(to));
  }
  const Branch& br = network.branches()[*idx];
  if (br.ratio != 1.0) {
    throw std::invalid_argument("faults are only supported on lines");
  }
  // Orient the fraction along the stored branch direction.
  const double a = br.from == from ? fraction : 1.0 - fraction;
  ComplexMatrix y = network.admittance_dense();
  const int f = network.index_of(br.from);
  const int t = network.index_of(br.to);
  const BranchAdmittance old = br.admittance();
  y(f, f) -= old.ff;
  y(f, t) -= old.ft;
  y(t, f) -= old.tf;
  y(t, t) -= old.tt;

  const Complex z(br.r, br.x);
  const Complex y1 = 1.0 / (a * z);
  const Complex y2 = 1.0 / ((1.0 - a) * z);
  const Complex c1(0.0, a * br.b / 2.0);
  const Complex c2(0.0, (1.0 - a) * br.b / 2.0);
  // Local nodes (f, t, m); eliminate m.
  const Complex yff = y1 + c1, ytt = y2 + c2;
  const Complex ymm = y1 + y2 + c1 + c2 + fault_admittance;
  const Complex yfm = -y1, ytm = -y2;
  y(f, f) += yff - yfm * yfm / ymm;
  y(t, t) += ytt - ytm * ytm / ymm;
  y(f, t) += -yfm * ytm / ymm;
  y(t, f) += -ytm * yfm / ymm;
  return y;
}

namespace {

class TrapezoidalIntegrator {
 public:
  TrapezoidalIntegrator(GroundTruthModel& model, double h,
                        const SimulationOptions& opts, Trajectory& stats)
      : model_(model), h_(h), opts_(opts), stats_(stats) {}

  void invalidate() { fresh_ = false; have_lu_ = false; }

  void solve_algebraic(Vector& x, double t) {
    const int na = model_.algebraic_size();
    for (int it = 0; it < opts_.max_newton_iterations; ++it) {
      const Vector r = model_.residual(x).tail(na);
      const Matrix j = model_.jacobian(x).bottomRightCorner(na, na);
      const Vector dv = j.partialPivLu().solve(-r);
      x.tail(na) += dv;
      ++stats_.newton_iterations;
      if (dv.lpNorm<Eigen::Infinity>() <= opts_.newton_tolerance) return;
    }
    throw SimulationError("algebraic re-initialization did not converge", t);
  }

  void step(Vector& x, double t) {
    const int nd = model_.differential_size();
    const Vector f0 = model_.residual(x).head(nd);
    Vector x1 = x;
    int since_factor = 0;
    std::vector<int> pinned;
    for (int it = 0; it < opts_.max_newton_iterations; ++it) {
      if (!have_lu_ || (since_factor >= 4 && !fresh_)) {
        factor(x1);
        since_factor = 0;
      }
      const Vector r = model_.residual(x1);
      Vector res(r.size());
      res.head(nd) = x1.head(nd) - x.head(nd) - 0.5 * h_ * (f0 + r.head(nd));
      res.tail(r.size() - nd) = r.tail(r.size() - nd);
      // A limited state that hits its bound stays pinned there for the rest
      // of the step: its anti-windup rate is discontinuous at the bound, so
      // the unprojected iteration can cycle across it.
      for (int i : pinned) res[i] = 0.0;
      Vector next = x1 + lu_.solve(-res);
      for (int i : pinned) next[i] = x1[i];
      const Vector raw = next;
      model_.clamp_limits(next);
      for (Eigen::Index i = 0; i < next.size(); ++i) {
        if (next[i] != raw[i]) pinned.push_back(static_cast<int>(i));
      }
      const double change = (next - x1).lpNorm<Eigen::Infinity>();
      x1 = std::move(next);
      ++since_factor;
      if (since_factor >= 4) fresh_ = false;
      ++stats_.newton_iterations;
      if (!x1.allFinite()) break;
      if (change <= opts_.newton_tolerance) {
        if (x1.lpNorm<Eigen::Infinity>() > opts_.blowup_limit) {
          throw SimulationError("state norm exceeded the blow-up limit", t + h_);
        }
        x = x1;
        fresh_ = false;
        return;
      }
    }
    throw SimulationError("Newton iteration did not converge", t + h_);
  }

 private:
  void factor(const Vector& x) {
    const int nd = model_.differential_size();
    Matrix j = model_.jacobian(x);
    j.topRows(nd) *= -0.5 * h_;
    j.topLeftCorner(nd, nd).diagonal().array() += 1.0;
    lu_.compute(j);
    have_lu_ = true;
    fresh_ = true;
    ++stats_.factorizations;
  }

  GroundTruthModel& model_;
  double h_;
  const SimulationOptions& opts_;
  Trajectory& stats_;
  Eigen::PartialPivLU<Matrix> lu_;
  bool have_lu_ = false;
  bool fresh_ = false;
};

}  // namespace

Trajectory simulate(const CaseData& data, const Equilibrium& eq,
                    const SimulationOptions& opts) {
  const Scenario& sc = data.scenario;
  sc.validate();
  NetworkModel net = data.network();
  GroundTruthModel model(net, eq.units, eq.loads);
  const double h = sc.step;
  const long per_scan = std::lround(sc.scan_period / h);
  const long total = per_scan * std::lround(sc.duration / sc.scan_period);

  std::multimap<long, const ScenarioEvent*> events;
  for (const ScenarioEvent& ev : sc.events) {
    events.emplace(std::lround(ev.time / h), &ev);
  }

  Trajectory traj;
  TrapezoidalIntegrator integ(model, h, opts, traj);
  Vector x = eq.state;
  std::vector<Branch> branches = net.branches();
  struct ActiveFault { int from, to; double fraction; };
  std::vector<ActiveFault> faults;

  auto rebuild = [&] {
    NetworkModel current(net.buses(), branches, net.base_mva(), net.frequency());
    if (faults.empty()) {
      model.set_admittance(current.admittance_dense());
    } else {
      ComplexMatrix y = current.admittance_dense();
      for (const ActiveFault& f : faults) {
        const ComplexMatrix yf = faulted_admittance(
            current, f.from, f.to, f.fraction, Complex(0.0, sc.fault_susceptance));
        y += yf - current.admittance_dense();
      }
      model.set_admittance(y);
    }
  };

  for (long n = 0;; ++n) {
    const double t = static_cast<double>(n) * h;
    if (n % per_scan == 0) {
      traj.time.push_back(static_cast<double>(n / per_scan) * sc.scan_period);
      traj.state.push_back(x);
    }
    if (n == total) break;
    auto [lo, hi] = events.equal_range(n);
    if (lo != hi) {
      for (auto it = lo; it != hi; ++it) {
        const ScenarioEvent& ev = *it->second;
        switch (ev.kind) {
          case EventKind::kFaultApply:
            faults.push_back({ev.from, ev.to, ev.fraction});
            break;
          case EventKind::kFaultClear: {
            std::erase_if(faults, [&](const ActiveFault& f) {
              return std::minmax(f.from, f.to) == std::minmax(ev.from, ev.to);
            });
            for (Branch& br : branches) {
              if (std::minmax(br.from, br.to) == std::minmax(ev.from, ev.to)) {
                br.in_service = false;
              }
            }
            break;
          }
          case EventKind::kLoadStep: {
            const int i = net.index_of(ev.from);
            model.step_load(ev.from, Complex(ev.dp_mw, ev.dq_mvar) / data.base_mva,
                            data.load_impedance_fraction,
                            std::abs(eq.power_flow.voltage[i]));
            break;
          }
        }
      }
      rebuild();
      integ.invalidate();
      integ.solve_algebraic(x, t);
    }
    integ.step(x, t);
  }
  return traj;
}

MeasurementStream sample_pmu(const Trajectory& traj, const GroundTruthModel& truth,
                             const std::vector<Pmu>& pmus, double scan_period,
                             double noise_std, std::uint64_t seed) {
  if (noise_std < 0.0) throw std::invalid_argument("noise std must be >= 0");
  const Matrix c2 = measurement_matrix(truth.network(), pmus);
  MeasurementStream out;
  out.scan_period = scan_period;
  out.noise_std = noise_std;
  out.seed = seed;
  for (const Pmu& p : pmus) {
    out.channels.push_back(p.label() + ".re");
    out.channels.push_back(p.label() + ".im");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  const int na = truth.algebraic_size();
  for (std::size_t k = 0; k < traj.state.size(); ++k) {
    Vector z = c2 * traj.state[k].tail(na);
    if (noise_std > 0.0) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += noise(rng);
    }
    out.time.push_back(static_cast<double>(k) * scan_period);
    out.z.push_back(std::move(z));
  }
  return out;
}

EstimationModelData build_estimation_data(const CaseData& data,
                                          const Equilibrium& eq) {
  const NetworkModel full = data.network();
  const std::vector<int> area = data.area_buses();
  EstimationModelData out;
  out.network = full.subnetwork(area);
  auto in_area = [&](int bus) { return out.network.has_bus(bus); };
  auto is_unknown = [&](int bus) {
    return std::find(data.unknown.begin(), data.unknown.end(), bus) !=
           data.unknown.end();
  };
  for (std::size_t g = 0; g < data.generators.size(); ++g) {
    const GeneratorRecord& rec = data.generators[g];
    if (!in_area(rec.bus)) continue;
    GeneratorUnit u;
    u.bus = rec.bus;
    u.machine = rec.machine;
    u.exciter = rec.exciter;
    u.governor = rec.governor;
    u.v_ref = eq.units[g].v_ref;
    u.p_ref = eq.units[g].p_ref;
    out.generators.push_back(u);
  }
  for (const LoadRecord& l : data.loads) {
    if (!in_area(l.bus) || is_unknown(l.bus)) continue;
    const Complex v = eq.power_flow.voltage[full.index_of(l.bus)];
    const Complex s = load_power(l, data.base_mva);
    const double frac = data.load_impedance_fraction;
    KnownLoad k;
    k.bus = l.bus;
    k.admittance = frac * std::conj(s) / std::norm(v);
    k.current = (1.0 - frac) * std::conj(s) / std::abs(v);
    out.loads.push_back(k);
  }
  out.unknown_buses = data.unknown;
  out.pmus = data.pmus;
  out.noise = data.estimator.noise;
  if (data.scenario.noise_std > 0.0) {
    out.noise.measurement_std = data.scenario.noise_std;
  }
  return out;
}

Vector project_truth(const GroundTruthModel& truth, const PowerSystemModel& model,
                     const Vector& truth_state) {
  Vector x(model.state_size());
  const StateIndexMap& map = model.index_map();
  for (std::size_t g = 0; g < model.generators().size(); ++g) {
    const int bus = model.generators()[g].bus;
    int tg = -1;
    for (int u = 0; u < truth.unit_count(); ++u) {
      if (truth.units()[u].bus == bus) tg = u;
    }
    if (tg < 0) {
      throw std::invalid_argument("no ground-truth unit at bus " + std::to_string(bus));
    }
    const double* s = truth_state.data() + truth.unit_offset(tg);
    double* d = x.data() + map.generator_offset(static_cast<int>(g));
    d[two_axis::kDelta] = s[subtransient::kDelta];
    d[two_axis::kOmega] = s[subtransient::kOmega];
    d[two_axis::kEq1] = s[subtransient::kEq1];
    d[two_axis::kEd1] = s[subtransient::kEd1];
    d[two_axis::kEfd] = s[subtransient::kEfd];
    d[two_axis::kVr] = s[subtransient::kVr];
    d[two_axis::kRf] = s[subtransient::kRf];
    d[two_axis::kPv] = s[subtransient::kPv];
    d[two_axis::kPt] = s[subtransient::kPt];
  }
  const auto& buses = model.network().buses();
  for (int b = 0; b < static_cast<int>(buses.size()); ++b) {
    const int src = truth.voltage_offset(buses[b].id);
    x[map.state_voltage_re(b)] = truth_state[src];
    x[map.state_voltage_re(b) + 1] = truth_state[src + 1];
  }
  return x;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& names,
               const std::vector<double>& time, const std::vector<Vector>& rows) {
  if (time.size() != rows.size()) {
    throw std::invalid_argument("csv: time and row counts differ");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "time";
  for (const std::string& n : names) out << ',' << n;
  out << '\n';
  char buf[64];
  auto put = [&](double v) {
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
  };
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (static_cast<std::size_t>(rows[k].size()) != names.size()) {
      throw std::invalid_argument("csv: row width does not match header");
    }
    put(time[k]);
    for (Eigen::Index i = 0; i < rows[k].size(); ++i) {
      out << ',';
      put(rows[k][i]);
    }
    out << '\n';
  }
}

}  // namespace dse
