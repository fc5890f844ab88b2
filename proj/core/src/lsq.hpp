#pragma once

// Thin adapter over Eigen's Levenberg-Marquardt solver that also returns
// the linearized covariance s^2 (J^T J)^{-1}.

#include <cmath>
#include <functional>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>

namespace rydcpw::detail {

/// Fills residuals r (size m) and, when jacobian != nullptr, the m x n
/// Jacobian dr/dp.
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jacobian)>;

struct LsqResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;
  double rms = 0.0;
  int iterations = 0;
  bool converged = false;
};

namespace lsq_impl {

struct Functor : Eigen::DenseFunctor<double> {
  Functor(int inputs, int values, const ResidualFn& fn) : DenseFunctor<double>(inputs, values), fn(fn) {}
  int operator()(const InputType& x, ValueType& fvec) const {
    Eigen::VectorXd r(values());
    fn(x, r, nullptr);
    fvec = r;
    return 0;
  }
  int df(const InputType& x, JacobianType& fjac) const {
    Eigen::VectorXd r(values());
    Eigen::MatrixXd j(values(), inputs());
    fn(x, r, &j);
    fjac = j;
    return 0;
  }
  const ResidualFn& fn;
};

}  // namespace lsq_impl

inline LsqResult least_squares(Eigen::VectorXd start, int residual_count, const ResidualFn& fn,
                               int max_iterations) {
  const int n = static_cast<int>(start.size());
  lsq_impl::Functor functor(n, residual_count, fn);
  Eigen::LevenbergMarquardt<lsq_impl::Functor> lm(functor);
  lm.setMaxfev(max_iterations * (n + 1));
  lm.setXtol(1e-14);
  lm.setFtol(1e-14);
  const auto status = lm.minimize(start);

  LsqResult out;
  out.params = start;
  out.iterations = static_cast<int>(lm.iterations());
  out.converged = status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation &&
                  status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                  start.allFinite();

  Eigen::VectorXd r(residual_count);
  Eigen::MatrixXd j(residual_count, n);
  fn(start, r, &j);
  const double dof = std::max(1, residual_count - n);
  const double s2 = r.squaredNorm() / dof;
  out.rms = std::sqrt(r.squaredNorm() / residual_count);
  const Eigen::MatrixXd jtj = j.transpose() * j;
  out.covariance = s2 * jtj.completeOrthogonalDecomposition().pseudoInverse();
  return out;
}

}  // namespace rydcpw::detail
