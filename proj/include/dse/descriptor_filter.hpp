#pragma once

#include <stdexcept>
#include <string>

#include "dse/descriptor_model.hpp"
#include "dse/discretize.hpp"

namespace dse {

/// Raised when a covariance or information matrix cannot be factorized,
/// which is how a rank-deficient [E; C] (non-estimable setup) shows up.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// E x_k = A x_{k-1} + delta + xi,   z_k = C x_k + nu.
/// E and A may be rectangular; only [E; C] needs full column rank.
struct LinearDescriptorSystem {
  Matrix E;
  Matrix A;
  Matrix C;
  Matrix Q;
  Matrix R;

  /// Checks shapes, positive definiteness of Q and R, and the column rank of
  /// [E; C]. Throws std::invalid_argument on violation.
  void validate() const;
};

struct EstimatorState {
  Vector x;
  Matrix P;
  long k = 0;
};

struct FilterConfig {
  double epsilon = 1e-4;
  int max_iterations = 10;
  double regularization = 1e-10;

  void validate() const;
};

/// One recursion of the descriptor filter:
///   P_k^-1 = E' (Q + A P A')^-1 E + C' R^-1 C
///   x_k    = P_k E' (Q + A P A')^-1 (A x_{k-1} + delta) + P_k C' R^-1 z
/// evaluated as a whitened least-squares problem by Householder QR, so the
/// information matrix is never formed. Pass a zero delta for a purely
/// linear system. Dimensions are checked but the rank of [E; C] is not; a
/// deficient system surfaces as a FactorizationError. `regularization`
/// is the jitter used when Q + A P A' or R fail to factor.
EstimatorState linear_step(const LinearDescriptorSystem& sys,
                           const EstimatorState& prev, const Vector& z,
                           const Vector& delta, double regularization = 1e-10);

struct BatchSolution {
  Vector x_k;                ///< filtered estimate of x_k
  Vector x_km1_smoothed;     ///< one-lag smoothed estimate of x_{k-1}
  Matrix P_k;                ///< covariance of x_k (top-left block)
  Matrix P_cross;            ///< cross covariance of (x_k, x_{k-1})
};

/// Solves the stacked weighted regression over (x_k, x_{k-1}) through its
/// normal equations. Kept as an independent reference for linear_step.
BatchSolution batch_solve(const LinearDescriptorSystem& sys,
                          const EstimatorState& prev, const Vector& z,
                          const Vector& delta);

/// Linearized descriptor blocks for one iterate.
struct LinearizationWorkspace {
  Matrix E1, E2, E3, E4;
  Matrix A1, A2;
  Matrix E_k;      ///< [h E1 - I, h E2; E3, E4]
  Matrix A_km1;    ///< [-h A1 - I, -h A2; 0, 0]
  Vector Delta_k;  ///< linearization offset
};

/// Linearizes the discretized DAE around (x_prev, x_iter).
LinearizationWorkspace assemble_linearization(const DescriptorModel& model,
                                              const DiscretizationScheme& scheme,
                                              const Vector& x_prev,
                                              const Vector& x_iter);

/// Same, reusing evaluations already computed at the two points.
LinearizationWorkspace assemble_linearization(const DiscretizationScheme& scheme,
                                              const PointEvaluation& prev,
                                              const PointEvaluation& iter,
                                              const Vector& x_prev,
                                              const Vector& x_iter, int n_d);

struct IekfResult {
  EstimatorState state;
  int iterations = 0;
  bool converged = false;
  double final_delta = 0.0;  ///< infinity norm of the last iterate change
};

/// Iterated filter step for an under-determined DAE. The previous-step block
/// A_{k-1} and the model's switching mode are evaluated once at the previous
/// estimate; E_k and Delta_k are refreshed at every iterate
/// until the infinity-norm change drops to cfg.epsilon. Hitting
/// cfg.max_iterations returns the last iterate with converged = false.
IekfResult iekf_step(const DescriptorModel& model,
                     const DiscretizationScheme& scheme,
                     const EstimatorState& prev, const Vector& z,
                     const FilterConfig& cfg);

/// Static update of the initial estimate with the first scan: Gauss-Newton
/// on the prior, the algebraic equations and z, without a time step.
/// Makes a flat-start voltage guess consistent with the prior differential
/// states before the first prediction uses it.
IekfResult initial_update(const DescriptorModel& model, const EstimatorState& prior,
                          const Vector& z, const FilterConfig& cfg);

}  // namespace dse
