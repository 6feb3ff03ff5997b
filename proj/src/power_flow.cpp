#include "dse/power_flow.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/LU>

namespace dse {

PowerFlowResult solve_power_flow(const NetworkModel& network,
                                 const PowerFlowSpec& spec, double tolerance,
                                 int max_iterations) {
  const int n = network.bus_count();
  if (static_cast<int>(spec.type.size()) != n || spec.p_injection.size() != n ||
      spec.q_injection.size() != n || spec.v_set.size() != n) {
    throw std::invalid_argument("power flow spec size does not match network");
  }
  std::vector<int> pvpq, pq;
  int slack_count = 0;
  for (int i = 0; i < n; ++i) {
    switch (spec.type[i]) {
      case BusType::kSlack: ++slack_count; break;
      case BusType::kPV: pvpq.push_back(i); break;
      case BusType::kPQ: pvpq.push_back(i); pq.push_back(i); break;
    }
  }
  if (slack_count != 1) {
    throw std::invalid_argument("power flow needs exactly one slack bus");
  }

  const ComplexMatrix y = network.admittance_dense();
  Vector vm = Vector::Ones(n);
  Vector va = Vector::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (spec.type[i] != BusType::kPQ) vm[i] = spec.v_set[i];
  }
  const int npv = static_cast<int>(pvpq.size());
  const int npq = static_cast<int>(pq.size());

  PowerFlowResult res;
  ComplexVector v(n);
  auto rebuild = [&] {
    for (int i = 0; i < n; ++i) v[i] = std::polar(vm[i], va[i]);
  };
  rebuild();

  for (int it = 0;; ++it) {
    const ComplexVector ibus = y * v;
    ComplexVector s(n);
    for (int i = 0; i < n; ++i) s[i] = v[i] * std::conj(ibus[i]);
    Vector mis(npv + npq);
    for (int k = 0; k < npv; ++k) mis[k] = s[pvpq[k]].real() - spec.p_injection[pvpq[k]];
    for (int k = 0; k < npq; ++k) mis[npv + k] = s[pq[k]].imag() - spec.q_injection[pq[k]];
    res.mismatch = mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
    res.iterations = it;
    if (res.mismatch < tolerance) {
      res.converged = true;
      break;
    }
    if (it >= max_iterations || !std::isfinite(res.mismatch)) break;

    // dS/dVa = j diag(V) conj(diag(I) - Y diag(V))
    // dS/dVm = diag(V) conj(Y diag(V/|V|)) + conj(diag(I)) diag(V/|V|)
    ComplexMatrix ds_dva(n, n), ds_dvm(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const Complex yv = y(i, j) * v[j];
        const Complex unit = v[j] / std::abs(v[j]);
        Complex a = -yv;
        Complex m = v[i] * std::conj(y(i, j) * unit);
        if (i == j) {
          a += ibus[i];
          m += std::conj(ibus[i]) * unit;
        }
        ds_dva(i, j) = Complex(0.0, 1.0) * v[i] * std::conj(a);
        ds_dvm(i, j) = m;
      }
    }
    Matrix jac(npv + npq, npv + npq);
    for (int r = 0; r < npv; ++r) {
      for (int c = 0; c < npv; ++c) jac(r, c) = ds_dva(pvpq[r], pvpq[c]).real();
      for (int c = 0; c < npq; ++c) jac(r, npv + c) = ds_dvm(pvpq[r], pq[c]).real();
    }
    for (int r = 0; r < npq; ++r) {
      for (int c = 0; c < npv; ++c) jac(npv + r, c) = ds_dva(pq[r], pvpq[c]).imag();
      for (int c = 0; c < npq; ++c) jac(npv + r, npv + c) = ds_dvm(pq[r], pq[c]).imag();
    }
    const Vector dx = jac.partialPivLu().solve(-mis);
    for (int k = 0; k < npv; ++k) va[pvpq[k]] += dx[k];
    for (int k = 0; k < npq; ++k) vm[pq[k]] += dx[npv + k];
    rebuild();
  }

  res.voltage = v;
  const ComplexVector ibus = y * v;
  res.injection.resize(n);
  for (int i = 0; i < n; ++i) res.injection[i] = v[i] * std::conj(ibus[i]);
  return res;
}

}  // namespace dse
