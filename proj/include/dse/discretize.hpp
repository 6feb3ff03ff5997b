#pragma once

#include <string>
#include <string_view>

#include "dse/descriptor_model.hpp"

namespace dse {

enum class SchemeKind { kForwardEuler, kBackwardEuler, kTrapezoidal };

/// One-step scheme  y_k = y_{k-1} + h * f(y_{k-1}, v_{k-1}, y_k, v_k).
struct DiscretizationScheme {
  SchemeKind kind = SchemeKind::kTrapezoidal;
  double h = 0.02;

  /// Weight of f~ evaluated at the previous point.
  double previous_weight() const;
  /// Weight of f~ evaluated at the current point.
  double current_weight() const;

  void validate() const;
};

SchemeKind parse_scheme_kind(std::string_view name);
std::string to_string(SchemeKind kind);

/// Discrete map f of the scheme (not yet multiplied by h).
Vector step_residual(const DiscretizationScheme& scheme,
                     const DescriptorModel& model, const Vector& y_prev,
                     const Vector& v_prev, const Vector& y_cur,
                     const Vector& v_cur);

struct StepJacobians {
  Matrix A1;  ///< d f / d y_{k-1}
  Matrix A2;  ///< d f / d v_{k-1}
  Matrix E1;  ///< d f / d y_k
  Matrix E2;  ///< d f / d v_k
};

StepJacobians step_jacobians(const DiscretizationScheme& scheme,
                             const DescriptorModel& model, const Vector& y_prev,
                             const Vector& v_prev, const Vector& y_cur,
                             const Vector& v_cur);

}  // namespace dse
