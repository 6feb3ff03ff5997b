#include "dse/discretize.hpp"

#include <stdexcept>

namespace dse {

double DiscretizationScheme::previous_weight() const {
  switch (kind) {
    case SchemeKind::kForwardEuler: return 1.0;
    case SchemeKind::kBackwardEuler: return 0.0;
    case SchemeKind::kTrapezoidal: return 0.5;
  }
  return 0.0;
}

double DiscretizationScheme::current_weight() const {
  return 1.0 - previous_weight();
}

void DiscretizationScheme::validate() const {
  if (!(h > 0.0)) throw std::invalid_argument("step size h must be positive");
}

SchemeKind parse_scheme_kind(std::string_view name) {
  if (name == "forward" || name == "forward-euler") return SchemeKind::kForwardEuler;
  if (name == "backward" || name == "backward-euler") return SchemeKind::kBackwardEuler;
  if (name == "trapezoidal") return SchemeKind::kTrapezoidal;
  throw std::invalid_argument("unknown discretization scheme '" +
                              std::string(name) + "'");
}

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::kForwardEuler: return "forward";
    case SchemeKind::kBackwardEuler: return "backward";
    case SchemeKind::kTrapezoidal: return "trapezoidal";
  }
  return "?";
}

Vector step_residual(const DiscretizationScheme& scheme,
                     const DescriptorModel& model, const Vector& y_prev,
                     const Vector& v_prev, const Vector& y_cur,
                     const Vector& v_cur) {
  scheme.validate();
  const double wp = scheme.previous_weight();
  const double wc = scheme.current_weight();
  Vector f = Vector::Zero(model.differential_size());
  if (wp != 0.0) f += wp * model.differential_rhs(y_prev, v_prev);
  if (wc != 0.0) f += wc * model.differential_rhs(y_cur, v_cur);
  return f;
}

StepJacobians step_jacobians(const DiscretizationScheme& scheme,
                             const DescriptorModel& model, const Vector& y_prev,
                             const Vector& v_prev, const Vector& y_cur,
                             const Vector& v_cur) {
  scheme.validate();
  const int nd = model.differential_size();
  const int na = model.algebraic_size();
  const double wp = scheme.previous_weight();
  const double wc = scheme.current_weight();
  StepJacobians out{Matrix::Zero(nd, nd), Matrix::Zero(nd, na),
                    Matrix::Zero(nd, nd), Matrix::Zero(nd, na)};
  if (wp != 0.0) {
    const ModelJacobians j = model.jacobians(y_prev, v_prev);
    out.A1 = wp * j.fy;
    out.A2 = wp * j.fv;
  }
  if (wc != 0.0) {
    const ModelJacobians j = model.jacobians(y_cur, v_cur);
    out.E1 = wc * j.fy;
    out.E2 = wc * j.fv;
  }
  return out;
}

}  // namespace dse
