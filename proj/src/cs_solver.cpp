#include "dsse/cs_solver.hpp"

#include <cmath>

#include "dsse/errors.hpp"

namespace dsse {

namespace {

Eigen::VectorXd soft_threshold(const Eigen::VectorXd& x, double tau) {
  return x.unaryExpr([tau](double v) {
    if (v > tau) return v - tau;
    if (v < -tau) return v + tau;
    return 0.0;
  });
}

double optimality_residual(const Eigen::VectorXd& a, const Eigen::VectorXd& grad, double lambda) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double r = a(i) != 0.0 ? std::abs(grad(i) + lambda * (a(i) > 0 ? 1.0 : -1.0))
                                 : std::max(0.0, std::abs(grad(i)) - lambda);
    worst = std::max(worst, r);
  }
  return worst;
}

}  // namespace

CsResult solve_l1(const CsProblem& problem) {
  const auto m = problem.phi.rows();
  const auto n = problem.phi.cols();
  if (problem.h.size() != m) throw DimensionError("solve_l1: measurement length does not match phi");
  if (problem.basis.rows() != n || problem.basis.cols() != n)
    throw DimensionError("solve_l1: basis must be N x N with N = phi.cols()");

  // Stack the smooth terms into one least-squares residual ||q - Q a||^2.
  Eigen::MatrixXd Q = problem.phi * problem.basis;
  Eigen::VectorXd q = problem.h;
  if (problem.mode == CsMode::spatial) {
    if (!problem.spatial) throw DimensionError("solve_l1: spatial mode needs a power-flow constraint");
    const auto& pf = *problem.spatial;
    const auto half = pf.B.rows();
    if (pf.B.cols() != half || 2 * half != n || pf.offset.size() != half)
      throw DimensionError("solve_l1: spatial constraint does not match the state layout [p; v]");
    if (pf.weight < 0.0) throw ConfigError("solve_l1: power-flow weight must be nonnegative");
    Eigen::MatrixXd E(half, n);
    E << -pf.B, Eigen::MatrixXd::Identity(half, half);
    const double root = std::sqrt(pf.weight);
    Eigen::MatrixXd stacked(m + half, n);
    stacked << Q, root * (E * problem.basis);
    Eigen::VectorXd rhs(m + half);
    rhs << q, root * pf.offset;
    Q = std::move(stacked);
    q = std::move(rhs);
  }
  if (Q.isZero(0.0)) throw DimensionError("solve_l1: sensing operator is zero");

  const auto& opt = problem.options;
  CsResult res;
  const Eigen::VectorXd grad0 = -2.0 * Q.transpose() * q;
  const double scale = grad0.cwiseAbs().maxCoeff();
  res.coefficients = Eigen::VectorXd::Zero(n);
  if (scale == 0.0) {
    res.signal = Eigen::VectorXd::Zero(n);
    res.objective = q.squaredNorm();
    return res;
  }

  const double lambda = opt.lambda ? *opt.lambda : opt.lambda_ratio * scale;
  if (lambda < 0.0) throw ConfigError("solve_l1: lambda must be nonnegative");
  res.lambda = lambda;

  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(Q).singularValues()(0);
  const double lip = 2.0 * sigma * sigma;
  const double tau = lambda / lip;

  const auto gradient = [&](const Eigen::VectorXd& a) -> Eigen::VectorXd {
    return 2.0 * Q.transpose() * (Q * a - q);
  };
  const auto objective = [&](const Eigen::VectorXd& a) {
    return lambda * a.lpNorm<1>() + (q - Q * a).squaredNorm();
  };

  Eigen::VectorXd x = res.coefficients;
  Eigen::VectorXd y = x;
  double fx = objective(x);
  double t = 1.0;
  if (opt.keep_trace) res.objective_trace.push_back(fx);

  res.status = SolveStatus::budget_exhausted;
  int it = 0;
  while (it < opt.max_iterations) {
    ++it;
    const Eigen::VectorXd z = soft_threshold(y - gradient(y) / lip, tau);
    const double fz = objective(z);
    if (fz <= fx) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = z + ((t - 1.0) / t_next) * (z - x);
      t = t_next;
      x = z;
      fx = fz;
    } else {
      // function-value restart keeps the accepted iterate monotone
      y = x;
      t = 1.0;
    }
    if (opt.keep_trace) res.objective_trace.push_back(fx);
    res.optimality_residual = optimality_residual(x, gradient(x), lambda);
    if (res.optimality_residual <= opt.optimality_tolerance * scale) {
      res.status = SolveStatus::converged;
      break;
    }
  }

  res.iterations = it;
  res.coefficients = x;
  res.signal = problem.basis * x;
  res.objective = fx;
  const double hn = problem.h.norm();
  res.measurement_residual = hn > 0 ? (problem.h - problem.phi * res.signal).norm() / hn : 0.0;
  return res;
}

CsResult temporal_cs_recover(const Eigen::VectorXd& compressed, const Eigen::MatrixXd& phi,
                             const DctBasis& basis, const CsOptions& options) {
  if (phi.cols() != basis.length())
    throw DimensionError("temporal_cs_recover: projection width does not match series length");
  if (compressed.size() != phi.rows())
    throw DimensionError("temporal_cs_recover: measurement length does not match projection");

  if (phi.rows() == phi.cols()) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
    if (qr.isInvertible()) {
      CsResult res;
      res.signal = qr.solve(compressed);
      res.coefficients = basis.D * res.signal;
      return res;
    }
  }
  CsProblem problem;
  problem.h = compressed;
  problem.phi = phi;
  problem.basis = basis.D.transpose();
  problem.mode = CsMode::temporal;
  problem.options = options;
  if (!options.normalize_columns) return solve_l1(problem);

  Eigen::VectorXd scale = (phi * problem.basis).colwise().norm().transpose();
  for (auto& c : scale)
    if (!(c > 1e-12)) c = 1.0;
  problem.basis = problem.basis * scale.cwiseInverse().asDiagonal();
  CsResult res = solve_l1(problem);
  res.coefficients = res.coefficients.cwiseQuotient(scale);
  return res;
}

}  // namespace dsse
