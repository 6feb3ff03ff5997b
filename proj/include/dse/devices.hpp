#pragma once

// Dynamic device equations, templated on the scalar so the same code serves
// plain evaluation and forward-mode differentiation.

#include <array>
#include <cmath>
#include <complex>
#include <type_traits>

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

namespace dse {

struct MachineParams {
  double h = 0.0;     ///< inertia constant (s, system base)
  double d = 0.0;     ///< damping (pu power / pu speed)
  double ra = 0.0;
  double xd = 0.0, xq = 0.0;
  double xd1 = 0.0, xq1 = 0.0;      ///< transient reactances
  double td01 = 0.0, tq01 = 0.0;    ///< transient open-circuit time constants
  double xd2 = 0.0, xq2 = 0.0;      ///< subtransient reactances
  double td02 = 0.0, tq02 = 0.0;    ///< subtransient time constants

  void validate() const;  // transient data only
  /// Fills the subtransient data from the transient data: reactances at 90 %,
  /// time constants divided by 100.
  MachineParams with_derived_subtransient() const;
};

/// IEEE DC1A without saturation. VR is clamped to [vr_min, vr_max].
struct ExciterParams {
  double ka = 0.0, ta = 0.0, ke = 1.0, te = 0.0, kf = 0.0, tf = 1.0;
  double vr_min = -5.0, vr_max = 5.0;

  void validate() const;
};

/// TGOV1. Valve position clamped to [v_min, v_max].
struct GovernorParams {
  double r = 0.05, t1 = 0.5, t2 = 1.0, t3 = 3.0;
  double v_min = 0.0, v_max = 10.0, dt = 0.0;

  void validate() const;
};

/// Synchronous generator with its exciter and turbine-governor and their
/// (known) set points.
struct GeneratorUnit {
  int bus = 0;
  MachineParams machine;
  ExciterParams exciter;
  GovernorParams governor;
  double v_ref = 1.0;
  double p_ref = 0.0;
};

/// Two-axis state layout.
namespace two_axis {
enum : int { kDelta, kOmega, kEq1, kEd1, kEfd, kVr, kRf, kPv, kPt, kSize };
inline constexpr std::array<const char*, kSize> kNames = {
    "delta", "omega", "eq1", "ed1", "efd", "vr", "rf", "pv", "pt"};
}  // namespace two_axis

/// Subtransient (sixth-order machine) state layout.
namespace subtransient {
enum : int {
  kDelta, kOmega, kEq1, kEd1, kEq2, kEd2, kEfd, kVr, kRf, kPv, kPt, kSize
};
}  // namespace subtransient

/// Load seen by the ground truth: constant-impedance part plus a negative
/// constant-power injection that degrades to an impedance below
/// `v_threshold`.
struct TruthLoad {
  int bus = 0;
  std::complex<double> admittance{0.0, 0.0};  ///< consumed: I = Y V
  std::complex<double> power{0.0, 0.0};       ///< consumed: S = P + jQ
  double v_threshold = 0.7;
};

/// Load with a known model in the estimator: constant impedance plus
/// constant current (magnitude fixed, phase locked to the bus voltage).
struct KnownLoad {
  int bus = 0;
  std::complex<double> admittance{0.0, 0.0};  ///< consumed: I = Y V
  std::complex<double> current{0.0, 0.0};     ///< consumed: I = c V / |V|
};

namespace detail {

template <typename T>
double value_of(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return x;
  } else {
    return x.value();
  }
}

/// Anti-windup limit: the rate is zeroed when it pushes a state further past
/// a bound. A non-null `hold` fixes the mode instead (nonzero: held at a
/// bound); otherwise the mode found is stored in `observed` if given.
template <typename T>
T limited_rate(const T& state, const T& rate, double lo, double hi,
               const signed char* hold = nullptr,
               signed char* observed = nullptr) {
  if (hold) return *hold ? T(0.0) : rate;
  const double s = value_of(state);
  const double r = value_of(rate);
  const signed char mode = (s >= hi && r > 0.0) ? 1 : (s <= lo && r < 0.0) ? -1 : 0;
  if (observed) *observed = mode;
  return mode ? T(0.0) : rate;
}

template <typename T>
struct StatorSolution {
  T id, iq;   ///< machine-frame currents
  T ir, ii;   ///< network-frame injection
  T pe;       ///< air-gap power
};

/// Solves  ed - vd - ra id + xq iq = 0,  eq - vq - ra iq - xd id = 0.
template <typename T>
StatorSolution<T> solve_stator(const T& delta, const T& ed, const T& eq,
                               double ra, double xd, double xq, const T& vre,
                               const T& vim) {
  using std::cos;
  using std::sin;
  const T s = sin(delta);
  const T c = cos(delta);
  const T vd = vre * s - vim * c;
  const T vq = vre * c + vim * s;
  const double det = ra * ra + xd * xq;
  StatorSolution<T> out;
  out.id = (ra * (ed - vd) + xq * (eq - vq)) / det;
  out.iq = (-xd * (ed - vd) + ra * (eq - vq)) / det;
  out.ir = out.id * s + out.iq * c;
  out.ii = -out.id * c + out.iq * s;
  out.pe = vd * out.id + vq * out.iq + ra * (out.id * out.id + out.iq * out.iq);
  return out;
}

template <typename T>
void exciter_rhs(const ExciterParams& p, double v_ref, const T& efd,
                 const T& vr, const T& rf, const T& vt, T& d_efd, T& d_vr,
                 T& d_rf, const signed char* hold = nullptr,
                 signed char* observed = nullptr) {
  d_efd = (vr - p.ke * efd) / p.te;
  const T drive =
      (-vr + p.ka * rf - (p.ka * p.kf / p.tf) * efd + p.ka * (v_ref - vt)) /
      p.ta;
  d_vr = limited_rate(vr, drive, p.vr_min, p.vr_max, hold, observed);
  d_rf = (-rf + (p.kf / p.tf) * efd) / p.tf;
}

/// Returns the mechanical power.
template <typename T>
T governor_rhs(const GovernorParams& p, double p_ref, const T& omega,
               const T& pv, const T& pt, T& d_pv, T& d_pt,
               const signed char* hold = nullptr,
               signed char* observed = nullptr) {
  const T drive = (p_ref - (omega - 1.0) / p.r - pv) / p.t1;
  d_pv = limited_rate(pv, drive, p.v_min, p.v_max, hold, observed);
  d_pt = (pv - pt) / p.t3;
  return pt + (p.t2 / p.t3) * (pv - pt) - p.dt * (omega - 1.0);
}

}  // namespace detail

/// Limiter modes of one unit, exciter first: see limited_rate.
inline constexpr int kUnitLimiters = 2;

/// Two-axis machine + DC1A + TGOV1. x has two_axis::kSize entries; writes
/// the state derivatives and the current injected into the network.
/// `hold` / `observed` point to kUnitLimiters limiter modes.
template <typename T>
void two_axis_unit(const GeneratorUnit& u, double omega_s, const T* x,
                   const T& vre, const T& vim, T* dx, T& ir, T& ii,
                   const signed char* hold = nullptr,
                   signed char* observed = nullptr) {
  using namespace two_axis;
  using std::sqrt;
  const MachineParams& m = u.machine;
  const auto st = detail::solve_stator(x[kDelta], x[kEd1], x[kEq1], m.ra,
                                       m.xd1, m.xq1, vre, vim);
  const T vt = sqrt(vre * vre + vim * vim);
  T pm = detail::governor_rhs(u.governor, u.p_ref, x[kOmega], x[kPv], x[kPt],
                              dx[kPv], dx[kPt], hold ? hold + 1 : nullptr,
                              observed ? observed + 1 : nullptr);
  dx[kDelta] = omega_s * (x[kOmega] - 1.0);
  dx[kOmega] = (pm - st.pe - m.d * (x[kOmega] - 1.0)) / (2.0 * m.h);
  dx[kEq1] = (-x[kEq1] - (m.xd - m.xd1) * st.id + x[kEfd]) / m.td01;
  dx[kEd1] = (-x[kEd1] + (m.xq - m.xq1) * st.iq) / m.tq01;
  detail::exciter_rhs(u.exciter, u.v_ref, x[kEfd], x[kVr], x[kRf], vt,
                      dx[kEfd], dx[kVr], dx[kRf], hold,
                      observed);
  ir = st.ir;
  ii = st.ii;
}

/// Sixth-order machine + DC1A + TGOV1 used for the ground truth.
template <typename T>
void subtransient_unit(const GeneratorUnit& u, double omega_s, const T* x,
                       const T& vre, const T& vim, T* dx, T& ir, T& ii) {
  using namespace subtransient;
  using std::sqrt;
  const MachineParams& m = u.machine;
  const auto st = detail::solve_stator(x[kDelta], x[kEd2], x[kEq2], m.ra,
                                       m.xd2, m.xq2, vre, vim);
  const T vt = sqrt(vre * vre + vim * vim);
  T pm = detail::governor_rhs(u.governor, u.p_ref, x[kOmega], x[kPv], x[kPt],
                              dx[kPv], dx[kPt]);
  dx[kDelta] = omega_s * (x[kOmega] - 1.0);
  dx[kOmega] = (pm - st.pe - m.d * (x[kOmega] - 1.0)) / (2.0 * m.h);
  dx[kEq1] = (-x[kEq1] - (m.xd - m.xd1) * st.id + x[kEfd]) / m.td01;
  dx[kEd1] = (-x[kEd1] + (m.xq - m.xq1) * st.iq) / m.tq01;
  dx[kEq2] = (x[kEq1] - x[kEq2] - (m.xd1 - m.xd2) * st.id) / m.td02;
  dx[kEd2] = (x[kEd1] - x[kEd2] + (m.xq1 - m.xq2) * st.iq) / m.tq02;
  detail::exciter_rhs(u.exciter, u.v_ref, x[kEfd], x[kVr], x[kRf], vt,
                      dx[kEfd], dx[kVr], dx[kRf]);
  ir = st.ir;
  ii = st.ii;
}

/// Current injected into the network by a ground-truth load.
template <typename T>
void truth_load_injection(const TruthLoad& load, const T& vre, const T& vim,
                          T& ir, T& ii) {
  const double g = load.admittance.real();
  const double b = load.admittance.imag();
  const double p = load.power.real();
  const double q = load.power.imag();
  const T mag2 = vre * vre + vim * vim;
  const double floor2 = load.v_threshold * load.v_threshold;
  // conj(S / V) = (P - jQ) V / |V|^2, frozen to an impedance at low voltage.
  const T denom = detail::value_of(mag2) >= floor2 ? mag2 : T(floor2);
  ir = -(g * vre - b * vim) - (p * vre + q * vim) / denom;
  ii = -(b * vre + g * vim) - (p * vim - q * vre) / denom;
}

/// Current injected into the network by a known estimator load.
template <typename T>
void known_load_injection(const KnownLoad& load, const T& vre, const T& vim,
                          T& ir, T& ii) {
  using std::sqrt;
  const double g = load.admittance.real();
  const double b = load.admittance.imag();
  const double cr = load.current.real();
  const double ci = load.current.imag();
  const T mag = sqrt(vre * vre + vim * vim);
  ir = -(g * vre - b * vim) - (cr * vre - ci * vim) / mag;
  ii = -(b * vre + g * vim) - (cr * vim + ci * vre) / mag;
}

/// Values and Jacobian of a small vector function with N inputs and M
/// outputs via forward-mode automatic differentiation.
template <int N, int M, typename F>
void local_jacobian(const Eigen::Matrix<double, N, 1>& in, F&& fn,
                    Eigen::Matrix<double, M, 1>& out,
                    Eigen::Matrix<double, M, N>& jac) {
  using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, N, 1>>;
  std::array<Ad, N> args;
  for (int i = 0; i < N; ++i) args[i] = Ad(in[i], N, i);
  std::array<Ad, M> res;
  fn(args.data(), res.data());
  for (int k = 0; k < M; ++k) {
    out[k] = res[k].value();
    jac.row(k) = res[k].derivatives().transpose();
  }
}

}  // namespace dse
