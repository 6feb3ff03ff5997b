#pragma once

#include <vector>

#include "dse/types.hpp"

namespace dse {

/// Jacobians of the continuous-time residuals at one point (y, v).
struct ModelJacobians {
  Matrix fy;  ///< d f~/d y   (n_d x n_d)
  Matrix fv;  ///< d f~/d v   (n_d x n_a)
  Matrix gy;  ///< d g/d y    (n_g x n_d)
  Matrix gv;  ///< d g/d v    (n_g x n_a)
};

/// Everything the filter needs from a model at one point.
struct PointEvaluation {
  Vector rhs;       ///< f~(y, v)
  Vector residual;  ///< g(y, v)
  ModelJacobians jac;
};

/// Discrete mode of the switching elements of a model (windup limiters):
/// one entry per element, 0 free, +1 / -1 held at the upper / lower bound.
using SwitchingMode = std::vector<signed char>;

/// Semi-explicit DAE  dy/dt = f~(y, v),  0 = g(y, v)  with the linear
/// measurement z = C2 v.  The number of algebraic equations n_g may be
/// smaller than the number of algebraic states n_a.
class DescriptorModel {
 public:
  virtual ~DescriptorModel() = default;

  virtual int differential_size() const = 0;
  virtual int algebraic_size() const = 0;
  virtual int equation_size() const = 0;
  int state_size() const { return differential_size() + algebraic_size(); }
  int measurement_size() const {
    return static_cast<int>(measurement_matrix().rows());
  }

  virtual Vector differential_rhs(const Vector& y, const Vector& v) const = 0;
  virtual Vector algebraic_residual(const Vector& y, const Vector& v) const = 0;
  virtual ModelJacobians jacobians(const Vector& y, const Vector& v) const = 0;

  /// Residuals and Jacobians together. Models that compute them in one pass
  /// should override this.
  virtual PointEvaluation evaluate(const Vector& y, const Vector& v) const {
    return {differential_rhs(y, v), algebraic_residual(y, v), jacobians(y, v)};
  }

  /// Mode active at (y, v). Models without switching return an empty mode.
  virtual SwitchingMode switching_mode(const Vector& /*y*/,
                                       const Vector& /*v*/) const {
    return {};
  }

  /// Evaluation with the switching mode held fixed, so that the residuals
  /// are smooth in (y, v).
  virtual PointEvaluation evaluate(const Vector& y, const Vector& v,
                                   const SwitchingMode& /*mode*/) const {
    return evaluate(y, v);
  }

  virtual const Matrix& measurement_matrix() const = 0;   ///< C2 (n_m x n_a)
  virtual const Matrix& differential_noise() const = 0;   ///< Q_d
  virtual const Matrix& algebraic_noise() const = 0;      ///< Q_a
  virtual const Matrix& measurement_noise() const = 0;    ///< R
};

}  // namespace dse
