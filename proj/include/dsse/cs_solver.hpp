#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dsse/transforms.hpp"

namespace dsse {

enum class CsMode { temporal, spatial };

/// Power-flow coupling for spatial recovery. The recovered state is laid out as
/// z = [p; v] with p = [Re s; Im s] (2|P|) and v = [Re v; Im v] (2|P|); the
/// penalty is weight * ||v - (B p + offset)||^2.
struct SpatialConstraint {
  Eigen::MatrixXd B;
  Eigen::VectorXd offset;
  double weight = 10.0;
};

struct CsOptions {
  /// Explicit l1 weight; when unset, lambda = lambda_ratio * ||grad f(0)||_inf.
  std::optional<double> lambda;
  double lambda_ratio = 1e-4;
  int max_iterations = 5000;
  /// Stop once the subgradient optimality residual falls below
  /// optimality_tolerance * ||grad f(0)||_inf.
  double optimality_tolerance = 1e-7;
  bool keep_trace = false;
  /// temporal_cs_recover only: solve over unit-norm columns of phi * basis
  /// (an l1 weighted by column norms). Short columns otherwise lose to spread
  /// solutions at small M.
  bool normalize_columns = true;
};

struct CsProblem {
  Eigen::VectorXd h;        // measurements, length M
  Eigen::MatrixXd phi;      // M x N
  Eigen::MatrixXd basis;    // N x N synthesis basis, z = basis * a
  CsMode mode = CsMode::temporal;
  std::optional<SpatialConstraint> spatial;
  CsOptions options;
};

enum class SolveStatus { converged, budget_exhausted };

struct CsResult {
  Eigen::VectorXd coefficients;  // a_hat
  Eigen::VectorXd signal;        // z_hat = basis * a_hat
  SolveStatus status = SolveStatus::converged;
  int iterations = 0;
  double lambda = 0.0;
  double objective = 0.0;
  double optimality_residual = 0.0;
  /// Relative residual ||h - phi z_hat|| / ||h|| (0 when h = 0).
  double measurement_residual = 0.0;
  std::vector<double> objective_trace;
};

/**
 * Minimizes lambda ||a||_1 + ||h - phi basis a||^2 (+ the spatial power-flow
 * penalty) with monotone FISTA and function-value restarts.
 *
 * Running out of iterations is not an error; the result carries
 * SolveStatus::budget_exhausted and the best iterate.
 */
CsResult solve_l1(const CsProblem& problem);

/// Per-sensor temporal recovery against the DCT synthesis basis (D transposed).
/// A square projection is inverted directly.
CsResult temporal_cs_recover(const Eigen::VectorXd& compressed, const Eigen::MatrixXd& phi,
                             const DctBasis& basis, const CsOptions& options = {});

}  // namespace dsse
