#include "dse/descriptor_filter.hpp"

#include <algorithm>
#include <cmath>

namespace dse {
namespace {

// Cholesky with a single retry after diagonal jitter. Very small pivots are
// treated as failure so that a rank-deficient information matrix is reported
// instead of producing a garbage covariance.
Eigen::LLT<Matrix> factor_spd(const Matrix& m, double regularization,
                              const char* what) {
  auto acceptable = [](const Eigen::LLT<Matrix>& llt) {
    if (llt.info() != Eigen::Success) return false;
    const Vector d = llt.matrixLLT().diagonal();
    const double lo = d.minCoeff();
    const double hi = d.maxCoeff();
    return lo > 0.0 && std::isfinite(hi) && (lo * lo) > 1e-15 * (hi * hi);
  };
  Eigen::LLT<Matrix> llt(m);
  if (acceptable(llt)) return llt;
  const double scale = std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
  llt.compute(m + regularization * scale *
                      Matrix::Identity(m.rows(), m.cols()));
  if (!acceptable(llt)) {
    throw FactorizationError(std::string(what) +
                             " is not positive definite (rank deficiency?)");
  }
  return llt;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void check_dimensions(const LinearDescriptorSystem& sys,
                      const EstimatorState& prev, const Vector& z,
                      const Vector& delta) {
  const auto n = sys.E.cols();
  require(sys.A.rows() == sys.E.rows() && sys.A.cols() == n,
          "E and A must have identical shape");
  require(sys.C.cols() == n, "C must have as many columns as E");
  require(sys.Q.rows() == sys.E.rows() && sys.Q.cols() == sys.E.rows(),
          "Q must be square with the row count of E");
  require(sys.R.rows() == sys.C.rows() && sys.R.cols() == sys.C.rows(),
          "R must be square with the row count of C");
  require(prev.x.size() == n, "state dimension mismatch");
  require(prev.P.rows() == n && prev.P.cols() == n,
          "covariance dimension mismatch");
  require(z.size() == sys.C.rows(), "measurement dimension mismatch");
  require(delta.size() == sys.E.rows(), "offset dimension mismatch");
}

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

void LinearDescriptorSystem::validate() const {
  require(E.rows() == A.rows() && E.cols() == A.cols(),
          "E and A must have identical shape");
  require(C.cols() == E.cols(), "C must have as many columns as E");
  require(Q.rows() == E.rows() && Q.cols() == E.rows(), "Q shape mismatch");
  require(R.rows() == C.rows() && R.cols() == C.rows(), "R shape mismatch");
  require(Q.isApprox(Q.transpose()) && Q.llt().info() == Eigen::Success,
          "Q must be symmetric positive definite");
  require(R.isApprox(R.transpose()) && R.llt().info() == Eigen::Success,
          "R must be symmetric positive definite");
  Matrix stacked(E.rows() + C.rows(), E.cols());
  stacked << E, C;
  Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
  require(qr.rank() == E.cols(), "[E; C] must have full column rank");
}

void FilterConfig::validate() const {
  require(epsilon > 0.0, "epsilon must be positive");
  require(max_iterations >= 1, "max_iterations must be at least 1");
  require(regularization >= 0.0, "regularization must be non-negative");
}

EstimatorState linear_step(const LinearDescriptorSystem& sys,
                           const EstimatorState& prev, const Vector& z,
                           const Vector& delta, double regularization) {
  check_dimensions(sys, prev, z, delta);
  const auto n = sys.E.cols();

  const Matrix S = symmetrized(sys.Q + sys.A * prev.P * sys.A.transpose());
  const auto s_llt = factor_spd(S, regularization, "Q + A P A'");
  const auto r_llt = factor_spd(sys.R, regularization, "R");

  // Whitened least squares  min |L_S^-1 (E x - A x_prev - delta)|^2 +
  // |L_R^-1 (C x - z)|^2  solved by QR: the triangular factor T satisfies
  // T'T = E' S^-1 E + C' R^-1 C, so P = T^-1 T^-T without squaring the
  // condition number.
  const auto nr = sys.E.rows();
  const auto nm = sys.C.rows();
  Matrix w(nr + nm, n);
  w.topRows(nr) = s_llt.matrixL().solve(sys.E);
  w.bottomRows(nm) = r_llt.matrixL().solve(sys.C);
  Vector b(nr + nm);
  b.head(nr) = s_llt.matrixL().solve(sys.A * prev.x + delta);
  b.tail(nm) = r_llt.matrixL().solve(z);

  const Eigen::HouseholderQR<Matrix> qr(w);
  const Matrix t = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  const Vector d = t.diagonal().cwiseAbs();
  if (!(d.minCoeff() > 1e-12 * d.maxCoeff()) || !d.allFinite()) {
    throw FactorizationError(
        "information matrix is not positive definite (rank deficiency?)");
  }
  const auto upper = t.triangularView<Eigen::Upper>();
  const Vector qtb = (qr.householderQ().transpose() * b).head(n);
  const Matrix t_inv = upper.solve(Matrix::Identity(n, n));

  EstimatorState next;
  next.x = upper.solve(qtb);
  next.P = symmetrized(t_inv * t_inv.transpose());
  next.k = prev.k + 1;
  return next;
}

BatchSolution batch_solve(const LinearDescriptorSystem& sys,
                          const EstimatorState& prev, const Vector& z,
                          const Vector& delta) {
  check_dimensions(sys, prev, z, delta);
  const auto n = sys.E.cols();
  const auto nr = sys.E.rows();
  const auto nm = sys.C.rows();

  // Regression over X = [x_k; -x_{k-1}].
  Matrix big_a = Matrix::Zero(nr + nm + n, 2 * n);
  big_a.block(0, 0, nr, n) = sys.E;
  big_a.block(0, n, nr, n) = sys.A;
  big_a.block(nr, 0, nm, n) = sys.C;
  big_a.block(nr + nm, n, n, n) = Matrix::Identity(n, n);

  Vector big_b(nr + nm + n);
  big_b << delta, z, -prev.x;

  Matrix weight = Matrix::Zero(nr + nm + n, nr + nm + n);
  weight.block(0, 0, nr, nr) = sys.Q.inverse();
  weight.block(nr, nr, nm, nm) = sys.R.inverse();
  weight.block(nr + nm, nr + nm, n, n) = prev.P.inverse();

  const Matrix normal = big_a.transpose() * weight * big_a;
  Eigen::FullPivLU<Matrix> lu(normal);
  if (lu.rank() < normal.rows()) {
    throw FactorizationError("batch normal matrix is singular");
  }
  const Vector sol = lu.solve(big_a.transpose() * weight * big_b);
  const Matrix cov = lu.inverse();

  BatchSolution out;
  out.x_k = sol.head(n);
  out.x_km1_smoothed = -sol.tail(n);
  out.P_k = cov.topLeftCorner(n, n);
  // The regression variable is -x_{k-1}, so flip the sign of the cross block.
  out.P_cross = -cov.topRightCorner(n, n);
  return out;
}

LinearizationWorkspace assemble_linearization(const DiscretizationScheme& scheme,
                                              const PointEvaluation& prev,
                                              const PointEvaluation& iter,
                                              const Vector& x_prev,
                                              const Vector& x_iter, int n_d) {
  const double h = scheme.h;
  const double wp = scheme.previous_weight();
  const double wc = scheme.current_weight();
  const int n_a = static_cast<int>(x_iter.size()) - n_d;
  const int n_g = static_cast<int>(iter.residual.size());

  LinearizationWorkspace ws;
  ws.A1 = wp * prev.jac.fy;
  ws.A2 = wp * prev.jac.fv;
  ws.E1 = wc * iter.jac.fy;
  ws.E2 = wc * iter.jac.fv;
  ws.E3 = iter.jac.gy;
  ws.E4 = iter.jac.gv;

  const int rows = n_d + n_g;
  const int cols = n_d + n_a;
  const Matrix eye = Matrix::Identity(n_d, n_d);

  ws.E_k.resize(rows, cols);
  ws.E_k << h * ws.E1 - eye, h * ws.E2, ws.E3, ws.E4;

  ws.A_km1 = Matrix::Zero(rows, cols);
  ws.A_km1.topLeftCorner(n_d, n_d) = -h * ws.A1 - eye;
  ws.A_km1.topRightCorner(n_d, n_a) = -h * ws.A2;

  const auto y_prev = x_prev.head(n_d);
  const auto v_prev = x_prev.tail(n_a);
  const auto y_iter = x_iter.head(n_d);
  const auto v_iter = x_iter.tail(n_a);
  const Vector f = wp * prev.rhs + wc * iter.rhs;

  ws.Delta_k.resize(rows);
  ws.Delta_k.head(n_d) = h * (ws.E1 * y_iter + ws.E2 * v_iter +
                              ws.A1 * y_prev + ws.A2 * v_prev - f);
  ws.Delta_k.tail(n_g) = ws.E3 * y_iter + ws.E4 * v_iter - iter.residual;

  if (!ws.E_k.allFinite() || !ws.Delta_k.allFinite() ||
      !ws.A_km1.allFinite()) {
    throw std::domain_error("non-finite Jacobian or residual");
  }
  return ws;
}

LinearizationWorkspace assemble_linearization(const DescriptorModel& model,
                                              const DiscretizationScheme& scheme,
                                              const Vector& x_prev,
                                              const Vector& x_iter) {
  scheme.validate();
  const int n_d = model.differential_size();
  const int n_a = model.algebraic_size();
  require(x_prev.size() == n_d + n_a && x_iter.size() == n_d + n_a,
          "state dimension mismatch");
  const SwitchingMode mode =
      model.switching_mode(x_prev.head(n_d), x_prev.tail(n_a));
  const PointEvaluation prev =
      model.evaluate(x_prev.head(n_d), x_prev.tail(n_a), mode);
  const PointEvaluation iter =
      model.evaluate(x_iter.head(n_d), x_iter.tail(n_a), mode);
  return assemble_linearization(scheme, prev, iter, x_prev, x_iter, n_d);
}

IekfResult iekf_step(const DescriptorModel& model,
                     const DiscretizationScheme& scheme,
                     const EstimatorState& prev, const Vector& z,
                     const FilterConfig& cfg) {
  cfg.validate();
  scheme.validate();
  const int n_d = model.differential_size();
  const int n_a = model.algebraic_size();
  const int n_g = model.equation_size();
  require(prev.x.size() == n_d + n_a, "state dimension mismatch");

  LinearDescriptorSystem sys;
  sys.Q = Matrix::Zero(n_d + n_g, n_d + n_g);
  sys.Q.topLeftCorner(n_d, n_d) = model.differential_noise();
  sys.Q.bottomRightCorner(n_g, n_g) = model.algebraic_noise();
  sys.R = model.measurement_noise();
  const Matrix& c2 = model.measurement_matrix();
  sys.C = Matrix::Zero(c2.rows(), n_d + n_a);
  sys.C.rightCols(n_a) = c2;

  // Limiter modes are latched at the previous estimate for the whole scan;
  // re-deciding them per iterate can cycle without converging.
  const SwitchingMode mode =
      model.switching_mode(prev.x.head(n_d), prev.x.tail(n_a));
  const PointEvaluation at_prev =
      model.evaluate(prev.x.head(n_d), prev.x.tail(n_a), mode);

  IekfResult result;
  result.state = prev;
  Vector iterate = prev.x;
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    const PointEvaluation at_iter =
        model.evaluate(iterate.head(n_d), iterate.tail(n_a), mode);
    LinearizationWorkspace ws = assemble_linearization(
        scheme, at_prev, at_iter, prev.x, iterate, n_d);
    // A_{k-1} only depends on the previous estimate; identical every pass.
    sys.E = std::move(ws.E_k);
    sys.A = std::move(ws.A_km1);

    EstimatorState next = linear_step(sys, prev, z, ws.Delta_k,
                                      cfg.regularization);
    const double change = (next.x - iterate).lpNorm<Eigen::Infinity>();
    iterate = next.x;
    result.state = std::move(next);
    result.iterations = i;
    result.final_delta = change;
    if (change <= cfg.epsilon) {
      result.converged = true;
      break;
    }
  }
  return result;
}

IekfResult initial_update(const DescriptorModel& model, const EstimatorState& prior,
                          const Vector& z, const FilterConfig& cfg) {
  cfg.validate();
  const int n_d = model.differential_size();
  const int n_a = model.algebraic_size();
  const int n_g = model.equation_size();
  const int n = n_d + n_a;
  require(prior.x.size() == n, "state dimension mismatch");
  require(prior.P.rows() == n && prior.P.cols() == n, "covariance dimension mismatch");

  // Prior rows x = x0 + xi (covariance P0 through A), algebraic rows
  // g(x) = 0 + xi_a, measurement rows z = C x + nu.
  LinearDescriptorSystem sys;
  sys.A = Matrix::Zero(n + n_g, n);
  sys.A.topRows(n).setIdentity();
  sys.Q = Matrix::Zero(n + n_g, n + n_g);
  sys.Q.bottomRightCorner(n_g, n_g) = model.algebraic_noise();
  sys.R = model.measurement_noise();
  sys.C = Matrix::Zero(model.measurement_matrix().rows(), n);
  sys.C.rightCols(n_a) = model.measurement_matrix();
  sys.E = Matrix::Zero(n + n_g, n);
  sys.E.topRows(n).setIdentity();

  const SwitchingMode mode = model.switching_mode(prior.x.head(n_d), prior.x.tail(n_a));
  IekfResult result;
  result.state = prior;
  Vector iterate = prior.x;
  Vector delta = Vector::Zero(n + n_g);
  for (int i = 1; i <= cfg.max_iterations; ++i) {
    const PointEvaluation at =
        model.evaluate(iterate.head(n_d), iterate.tail(n_a), mode);
    // g(x) ~ g(x_i) + J (x - x_i) = 0  =>  J x = J x_i - g(x_i).
    sys.E.block(n, 0, n_g, n_d) = at.jac.gy;
    sys.E.block(n, n_d, n_g, n_a) = at.jac.gv;
    delta.tail(n_g) = sys.E.bottomRows(n_g) * iterate - at.residual;

    EstimatorState next = linear_step(sys, prior, z, delta, cfg.regularization);
    next.k = prior.k;
    const double change = (next.x - iterate).lpNorm<Eigen::Infinity>();
    iterate = next.x;
    result.state = std::move(next);
    result.iterations = i;
    result.final_delta = change;
    if (change <= cfg.epsilon) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace dse
