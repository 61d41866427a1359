#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "dsse/cs_solver.hpp"
#include "dsse/grid_model.hpp"
#include "dsse/kernels.hpp"
#include "dsse/measurements.hpp"
#include "dsse/transforms.hpp"

namespace dsse {

struct SolverConfig {
  double lambda1 = 100.0;  // data fit
  double nu = 10.0;        // linearized power flow
  double lambda2 = 1.0;    // temporal sparsity
  int rank = 5;
  int outer_iterations = 50;
  double outer_tolerance = 1e-6;
  int inner_iterations = 50;
  double inner_tolerance = 1e-8;
  /// eps_s in sqrt(||f3||^2 + eps_s^2)
  double smoothing = 1e-8;
  kernels::Execution execution = kernels::Execution::parallel;

  void validate(Eigen::Index rows, Eigen::Index cols) const;
};

struct FactorPair {
  Eigen::MatrixXd U;  // 5T x r
  Eigen::MatrixXd V;  // r x |P|

  Eigen::MatrixXd product() const { return U * V; }
};

struct ObjectiveTerms {
  double regularizer = 0.0;  // ||U||_F^2 + ||V||_F^2
  double data = 0.0;         // lambda1 ||P_Omega(UV - M)||_F^2
  double power_flow = 0.0;   // nu ||f1 - (A f2 + b)||^2
  double sparsity = 0.0;     // lambda2 sqrt(||f3||^2 + eps^2)
  double total() const { return regularizer + data + power_flow + sparsity; }
};

struct EstimateReport {
  BlockMatrix estimate;
  FactorPair factors;
  /// Objective at the initial factors, then after every outer iteration.
  std::vector<double> objective_trace;
  ObjectiveTerms terms;
  int iterations = 0;
  bool converged = false;
};

/// SVD start: zero-filled observations scaled by 1/fad, split as U Sigma^1/2, Sigma^1/2 V^T.
FactorPair init_factors(const MaskedMatrix& observed, int rank);

/**
 * The factorized objective
 *   ||U||^2 + ||V||^2 + lambda1 ||P_Omega(UV - M)||^2
 *     + nu ||f1(UV) - (A f2(UV) + b)||^2 + lambda2 sqrt(||f3(UV)||^2 + eps^2)
 * with every term expressed as sparse rows over vec(X).
 *
 * The power-flow term is present when a stacked model is given and nu > 0; the
 * temporal term when a basis is given and lambda2 > 0.
 */
class FactorizedObjective {
 public:
  FactorizedObjective(const MaskedMatrix& observed, const LinearPFModel* stacked_pf,
                      const DctBasis* basis, const SolverConfig& config);

  ObjectiveTerms evaluate(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const;

  /// Minimizes over U with V fixed, starting from U; never increases the objective.
  Eigen::MatrixXd update_left(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const;
  /// Minimizes over V with U fixed, starting from V; never increases the objective.
  Eigen::MatrixXd update_right(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const;

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

 private:
  struct Term {
    kernels::SparseRows rows;
    Eigen::VectorXd target;
    bool active() const { return rows.rows() > 0; }
  };

  template <class Lift>
  Eigen::VectorXd minimize(const Eigen::VectorXd& start, Lift lift) const;

  Eigen::Index rows_;
  Eigen::Index cols_;
  SolverConfig config_;
  Term data_;
  Term power_flow_;
  Term sparsity_;
};

/// Generic factorized completion; classic_mc and joint_mc_cs are thin wrappers.
EstimateReport factorized_completion(const MaskedMatrix& observed, const LinearPFModel* stacked_pf,
                                     const DctBasis* basis, const SolverConfig& config);

/// Single-step (5 x |P|) completion with the linearized power-flow penalty; no temporal term.
EstimateReport classic_mc(const MaskedMatrix& step, const LinearPFModel& pf, const SolverConfig& config);

struct StepwiseReport {
  BlockMatrix estimate;
  std::vector<EstimateReport> steps;
  std::vector<CsResult> recoveries;  // filled by cs_mc_pipeline only
};

/// classic_mc applied to each time block independently.
StepwiseReport classic_mc_stepwise(const MaskedMatrix& block, const LinearPFModel& pf,
                                   const SolverConfig& config);

/// Joint spatial completion and temporal compressive sensing over the block matrix.
EstimateReport joint_mc_cs(const MaskedMatrix& block, const LinearPFModel& stacked_pf,
                           const DctBasis& basis, const SolverConfig& config);

/// One compressed sensor stream: h = phi x for the series (kind, col) over T steps.
struct SensorStream {
  int col = 0;
  RowKind kind = RowKind::re_v;
  Eigen::VectorXd compressed;
  Eigen::MatrixXd phi;
};

/// Two-stage estimator: temporal CS per stream, then classic_mc per time step on
/// the recovered values.
StepwiseReport cs_mc_pipeline(std::span<const SensorStream> streams, int cols, const DctBasis& basis,
                              const LinearPFModel& pf, const SolverConfig& config,
                              const CsOptions& cs_options = {});

}  // namespace dsse
