#include "dse/psmodel.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace dse {
namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void MachineParams::validate() const {
  require(h > 0.0, "machine inertia H must be positive");
  require(td01 > 0.0 && tq01 > 0.0, "machine time constants must be positive");
  require(xd1 > 0.0 && xq1 > 0.0, "transient reactances must be positive");
  require(xd >= xd1 && xq >= xq1,
          "synchronous reactances must not be below transient ones");
  require(ra >= 0.0 && d >= 0.0, "ra and D must be non-negative");
}

MachineParams MachineParams::with_derived_subtransient() const {
  MachineParams out = *this;
  out.xd2 = 0.9 * xd1;
  out.xq2 = 0.9 * xq1;
  out.td02 = td01 / 100.0;
  out.tq02 = tq01 / 100.0;
  return out;
}

void ExciterParams::validate() const {
  require(ta > 0.0 && te > 0.0 && tf > 0.0,
          "exciter time constants must be positive");
  require(ka > 0.0, "exciter gain KA must be positive");
  require(vr_min < vr_max, "exciter limits must satisfy VRmin < VRmax");
}

void GovernorParams::validate() const {
  require(r > 0.0, "governor droop R must be positive");
  require(t1 > 0.0 && t3 > 0.0, "governor time constants must be positive");
  require(t2 >= 0.0, "governor T2 must be non-negative");
  require(v_min < v_max, "governor limits must satisfy Vmin < Vmax");
}

StateIndexMap::StateIndexMap(const std::vector<int>& generator_buses,
                             const std::vector<int>& bus_ids)
    : n_d_(two_axis::kSize * static_cast<int>(generator_buses.size())),
      n_a_(2 * static_cast<int>(bus_ids.size())) {
  names_.reserve(n_d_ + n_a_);
  for (int bus : generator_buses) {
    for (const char* s : two_axis::kNames) {
      names_.push_back("G" + std::to_string(bus) + "." + s);
    }
  }
  for (int bus : bus_ids) {
    names_.push_back("V" + std::to_string(bus) + ".re");
    names_.push_back("V" + std::to_string(bus) + ".im");
  }
}

PowerSystemModel::PowerSystemModel(EstimationModelData data)
    : data_(std::move(data)) {
  const NetworkModel& net = data_.network;
  const int nb = net.bus_count();
  require(nb > 0, "estimation model needs at least one bus");
  require(net.is_connected(), "estimation network must be connected");

  std::vector<int> gen_buses;
  for (const GeneratorUnit& u : data_.generators) {
    require(net.has_bus(u.bus),
            "generator at bus " + std::to_string(u.bus) + " is outside the area");
    u.machine.validate();
    u.exciter.validate();
    u.governor.validate();
    gen_buses.push_back(u.bus);
    gen_bus_pos_.push_back(net.index_of(u.bus));
  }
  for (const KnownLoad& l : data_.loads) {
    require(net.has_bus(l.bus),
            "load at bus " + std::to_string(l.bus) + " is outside the area");
    load_bus_pos_.push_back(net.index_of(l.bus));
  }
  for (int b : data_.unknown_buses) {
    require(net.has_bus(b),
            "unknown injector bus " + std::to_string(b) + " is outside the area");
  }
  std::sort(data_.unknown_buses.begin(), data_.unknown_buses.end());
  data_.unknown_buses.erase(
      std::unique(data_.unknown_buses.begin(), data_.unknown_buses.end()),
      data_.unknown_buses.end());
  for (int b : data_.unknown_buses) {
    for (const GeneratorUnit& u : data_.generators) {
      require(u.bus != b, "bus " + std::to_string(b) +
                              " has a modeled generator and is listed unknown");
    }
  }

  std::vector<int> bus_ids;
  for (const Bus& b : net.buses()) bus_ids.push_back(b.id);
  map_ = StateIndexMap(gen_buses, bus_ids);

  row_of_bus_.assign(nb, -1);
  for (int i = 0; i < nb; ++i) {
    if (!is_unknown(net.buses()[i].id)) {
      row_of_bus_[i] = static_cast<int>(modeled_rows_.size());
      modeled_rows_.push_back(i);
    }
  }

  ybus_real_ = real_expansion(net.admittance_dense());
  c2_ = dse::measurement_matrix(net, data_.pmus);
  omega_s_ = 2.0 * std::numbers::pi * net.frequency();

  const NoiseSettings& ns = data_.noise;
  require(ns.differential > 0.0 && ns.speed > 0.0 && ns.algebraic > 0.0 &&
              ns.measurement_std > 0.0,
          "noise variances must be positive");
  Vector qd = Vector::Constant(differential_size(), ns.differential);
  for (std::size_t g = 0; g < data_.generators.size(); ++g) {
    qd[map_.generator_state(static_cast<int>(g), two_axis::kOmega)] = ns.speed;
  }
  noise_.q_d = qd.asDiagonal();
  noise_.q_a = Matrix::Identity(equation_size(), equation_size()) * ns.algebraic;
  noise_.r = Matrix::Identity(c2_.rows(), c2_.rows()) *
             (ns.measurement_std * ns.measurement_std);
}

bool PowerSystemModel::is_unknown(int bus_id) const {
  return std::binary_search(data_.unknown_buses.begin(),
                            data_.unknown_buses.end(), bus_id);
}

std::vector<int> PowerSystemModel::device_bus_positions() const {
  std::vector<int> out = gen_bus_pos_;
  out.insert(out.end(), load_bus_pos_.begin(), load_bus_pos_.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Vector PowerSystemModel::flat_start_voltages() const {
  Vector v = Vector::Zero(algebraic_size());
  for (int b = 0; b < network().bus_count(); ++b) v[map_.voltage_re(b)] = 1.0;
  return v;
}

void PowerSystemModel::evaluate_into(const Vector& y, const Vector& v,
                                     Vector* f, Vector* g,
                                     ModelJacobians* jac,
                                     const SwitchingMode* hold,
                                     SwitchingMode* observed) const {
  const int nd = differential_size();
  const int na = algebraic_size();
  const int ng = equation_size();
  require(y.size() == nd && v.size() == na, "state dimension mismatch");
  const std::size_t modes = kUnitLimiters * data_.generators.size();
  require(!hold || hold->size() == modes, "switching mode size mismatch");
  if (observed) observed->assign(modes, 0);

  // Device currents per bus position (interleaved).
  Vector device_current = Vector::Zero(na);
  if (f) f->setZero(nd);
  if (jac) {
    jac->fy = Matrix::Zero(nd, nd);
    jac->fv = Matrix::Zero(nd, na);
    jac->gy = Matrix::Zero(ng, nd);
  }
  Matrix device_gv = Matrix::Zero(na, na);

  constexpr int kIn = two_axis::kSize + 2;
  constexpr int kOut = two_axis::kSize + 2;
  for (std::size_t gi = 0; gi < data_.generators.size(); ++gi) {
    const GeneratorUnit& unit = data_.generators[gi];
    const int off = map_.generator_offset(static_cast<int>(gi));
    const int vb = map_.voltage_re(gen_bus_pos_[gi]);
    Eigen::Matrix<double, kIn, 1> in;
    in.head<two_axis::kSize>() = y.segment<two_axis::kSize>(off);
    in[two_axis::kSize] = v[vb];
    in[two_axis::kSize + 1] = v[vb + 1];
    Eigen::Matrix<double, kOut, 1> out;
    Eigen::Matrix<double, kOut, kIn> d;
    const double ws = omega_s_;
    const signed char* unit_hold = hold ? hold->data() + kUnitLimiters * gi : nullptr;
    signed char* unit_seen = observed ? observed->data() + kUnitLimiters * gi : nullptr;
    local_jacobian<kIn, kOut>(in, [&](const auto* a, auto* r) {
      two_axis_unit(unit, ws, a, a[two_axis::kSize], a[two_axis::kSize + 1], r,
                    r[two_axis::kSize], r[two_axis::kSize + 1], unit_hold,
                    unit_seen);
    }, out, d);
    if (f) f->segment<two_axis::kSize>(off) = out.head<two_axis::kSize>();
    device_current.segment<2>(vb) += out.tail<2>();
    if (jac) {
      jac->fy.block<two_axis::kSize, two_axis::kSize>(off, off) =
          d.topLeftCorner<two_axis::kSize, two_axis::kSize>();
      jac->fv.block<two_axis::kSize, 2>(off, vb) =
          d.topRightCorner<two_axis::kSize, 2>();
      const int row = row_of_bus_[gen_bus_pos_[gi]];
      jac->gy.block<2, two_axis::kSize>(2 * row, off) =
          d.bottomLeftCorner<2, two_axis::kSize>();
      device_gv.block<2, 2>(vb, vb) += d.bottomRightCorner<2, 2>();
    }
  }

  for (std::size_t li = 0; li < data_.loads.size(); ++li) {
    const KnownLoad& load = data_.loads[li];
    const int vb = map_.voltage_re(load_bus_pos_[li]);
    Eigen::Vector2d in(v[vb], v[vb + 1]);
    Eigen::Vector2d out;
    Eigen::Matrix2d d;
    local_jacobian<2, 2>(in, [&](const auto* a, auto* r) {
      known_load_injection(load, a[0], a[1], r[0], r[1]);
    }, out, d);
    device_current.segment<2>(vb) += out;
    device_gv.block<2, 2>(vb, vb) += d;
  }

  if (g || jac) {
    const Vector network_current = ybus_real_ * v;
    if (g) g->resize(ng);
    if (jac) jac->gv.resize(ng, na);
    for (std::size_t r = 0; r < modeled_rows_.size(); ++r) {
      const int vb = map_.voltage_re(modeled_rows_[r]);
      if (g) {
        g->segment<2>(2 * r) =
            device_current.segment<2>(vb) - network_current.segment<2>(vb);
      }
      if (jac) {
        jac->gv.middleRows<2>(2 * r) =
            device_gv.middleRows<2>(vb) - ybus_real_.middleRows<2>(vb);
      }
    }
  }
}

Vector PowerSystemModel::differential_rhs(const Vector& y,
                                          const Vector& v) const {
  Vector f;
  evaluate_into(y, v, &f, nullptr, nullptr);
  return f;
}

Vector PowerSystemModel::algebraic_residual(const Vector& y,
                                            const Vector& v) const {
  Vector g;
  evaluate_into(y, v, nullptr, &g, nullptr);
  return g;
}

ModelJacobians PowerSystemModel::jacobians(const Vector& y,
                                           const Vector& v) const {
  ModelJacobians j;
  evaluate_into(y, v, nullptr, nullptr, &j);
  return j;
}

SwitchingMode PowerSystemModel::switching_mode(const Vector& y,
                                              const Vector& v) const {
  SwitchingMode mode;
  Vector f;
  evaluate_into(y, v, &f, nullptr, nullptr, nullptr, &mode);
  return mode;
}

PointEvaluation PowerSystemModel::evaluate(const Vector& y, const Vector& v,
                                           const SwitchingMode& mode) const {
  PointEvaluation e;
  evaluate_into(y, v, &e.rhs, &e.residual, &e.jac, &mode);
  if (!e.rhs.allFinite() || !e.residual.allFinite()) {
    throw std::domain_error("model evaluation produced non-finite values");
  }
  return e;
}

PointEvaluation PowerSystemModel::evaluate(const Vector& y,
                                           const Vector& v) const {
  PointEvaluation e;
  evaluate_into(y, v, &e.rhs, &e.residual, &e.jac);
  if (!e.rhs.allFinite() || !e.residual.allFinite()) {
    throw std::domain_error("model evaluation produced non-finite values");
  }
  return e;
}

Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>
PowerSystemModel::augmented_e4_pattern() const {
  const NetworkModel& net = network();
  const int nb = net.bus_count();
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> pat =
      Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
          2 * nb, 2 * nb, false);
  const ComplexMatrix y = net.admittance_dense();
  const auto adj = net.adjacency();
  std::vector<bool> has_device(nb, false);
  for (int p : device_bus_positions()) has_device[p] = true;

  for (int i = 0; i < nb; ++i) {
    if (row_of_bus_[i] < 0) continue;  // zero rows for unknown injectors
    for (int j = 0; j < nb; ++j) {
      if (i == j) {
        if (!adj[i].empty() || has_device[i] || y(i, i) != Complex(0.0, 0.0)) {
          pat.block(2 * i, 2 * i, 2, 2).setConstant(true);
        }
        continue;
      }
      if (y(i, j).real() != 0.0) {
        pat(2 * i, 2 * j) = true;
        pat(2 * i + 1, 2 * j + 1) = true;
      }
      if (y(i, j).imag() != 0.0) {
        pat(2 * i, 2 * j + 1) = true;
        pat(2 * i + 1, 2 * j) = true;
      }
    }
  }
  return pat;
}

}  // namespace dse
