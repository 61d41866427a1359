#include "dsse/mc_solver.hpp"

#include <cmath>
#include <sstream>

#include "dsse/errors.hpp"

namespace dsse {

using kernels::SparseRows;

void SolverConfig::validate(Eigen::Index rows, Eigen::Index cols) const {
  if (!(lambda1 >= 0.0 && nu >= 0.0 && lambda2 >= 0.0))
    throw ConfigError("solver weights lambda1, nu, lambda2 must be nonnegative");
  if (rank < 1 || rank > std::min(rows, cols))
    throw ConfigError("rank " + std::to_string(rank) + " outside [1, " +
                      std::to_string(std::min(rows, cols)) + "]");
  if (outer_iterations < 1 || inner_iterations < 1) throw ConfigError("iteration budgets must be positive");
  if (!(smoothing > 0.0)) throw ConfigError("smoothing must be positive");
  if (!(outer_tolerance >= 0.0 && inner_tolerance >= 0.0)) throw ConfigError("tolerances must be nonnegative");
}

FactorPair init_factors(const MaskedMatrix& observed, int rank) {
  if (observed.mask.empty()) throw EmptyMaskError("init_factors: empty mask");
  const auto m = observed.rows();
  const auto n = observed.cols();
  if (rank < 1 || rank > std::min(m, n))
    throw DimensionError("init_factors: rank " + std::to_string(rank) + " exceeds min dimension");

  const Eigen::MatrixXd filled = observed.values / observed.mask.fad();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(filled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd root = svd.singularValues().head(rank).cwiseSqrt();
  FactorPair f;
  f.U = svd.matrixU().leftCols(rank) * root.asDiagonal();
  f.V = root.asDiagonal() * svd.matrixV().leftCols(rank).transpose();
  return f;
}

namespace {

using Triplet = Eigen::Triplet<double>;

SparseRows from_triplets(Eigen::Index rows, Eigen::Index cols, const std::vector<Triplet>& entries) {
  SparseRows L(rows, cols);
  L.setFromTriplets(entries.begin(), entries.end());
  return L;
}

Eigen::VectorXd vec(const Eigen::MatrixXd& x) { return Eigen::Map<const Eigen::VectorXd>(x.data(), x.size()); }

}  // namespace

FactorizedObjective::FactorizedObjective(const MaskedMatrix& observed, const LinearPFModel* stacked_pf,
                                         const DctBasis* basis, const SolverConfig& config)
    : rows_(observed.rows()), cols_(observed.cols()), config_(config) {
  if (observed.mask.empty()) throw EmptyMaskError("empty mask: nothing observed");
  if (observed.mask.rows() != rows_ || observed.mask.cols() != cols_)
    throw DimensionError("mask shape does not match observations");
  if (rows_ % kRowsPerStep != 0) throw DimensionError("observation rows must be a multiple of 5");
  config.validate(rows_, cols_);
  const int steps = static_cast<int>(rows_ / kRowsPerStep);
  const auto m = rows_;
  const auto width = rows_ * cols_;

  {
    std::vector<Triplet> entries;
    const auto& cells = observed.mask.cells();
    data_.target.resize(static_cast<Eigen::Index>(cells.size()));
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& c = cells[k];
      entries.emplace_back(static_cast<Eigen::Index>(k), c.row + m * c.col, 1.0);
      data_.target(static_cast<Eigen::Index>(k)) = observed.values(c.row, c.col);
    }
    data_.rows = from_triplets(static_cast<Eigen::Index>(cells.size()), width, entries);
  }

  if (stacked_pf && config.nu > 0.0) {
    const auto& pf = *stacked_pf;
    if (pf.steps != steps || pf.node_count() != cols_)
      throw DimensionError("power-flow model is stacked for " + std::to_string(pf.steps) + " steps and " +
                           std::to_string(pf.node_count()) + " nodes, observations have " +
                           std::to_string(steps) + " and " + std::to_string(cols_));
    const auto ys = y_cells(steps, static_cast<int>(cols_));
    const auto ps = p_cells(steps, static_cast<int>(cols_));
    std::vector<Triplet> entries;
    for (Eigen::Index r = 0; r < pf.A.rows(); ++r) {
      const auto& y = ys[static_cast<std::size_t>(r)];
      entries.emplace_back(r, y.row + m * y.col, 1.0);
      for (Eigen::Index c = 0; c < pf.A.cols(); ++c) {
        const double a = pf.A(r, c);
        if (a == 0.0) continue;
        const auto& p = ps[static_cast<std::size_t>(c)];
        entries.emplace_back(r, p.row + m * p.col, -a);
      }
    }
    power_flow_.rows = from_triplets(pf.A.rows(), width, entries);
    power_flow_.target = pf.b;
  }

  if (basis && config.lambda2 > 0.0) {
    if (basis->length() != steps) throw DimensionError("DCT basis length does not match the number of time steps");
    const Eigen::MatrixXd d2 = basis->d2();
    std::vector<Triplet> entries;
    Eigen::Index r = 0;
    for (Eigen::Index j = 0; j < cols_; ++j)
      for (RowKind kind : kSparsitySeries)
        for (Eigen::Index d = 0; d < d2.rows(); ++d, ++r)
          for (int t = 0; t < steps; ++t)
            entries.emplace_back(r, (kRowsPerStep * t + static_cast<int>(kind)) + m * j, d2(d, t));
    sparsity_.rows = from_triplets(r, width, entries);
    sparsity_.target = Eigen::VectorXd::Zero(r);
  }
}

ObjectiveTerms FactorizedObjective::evaluate(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const {
  const Eigen::VectorXd x = vec(U * V);
  const auto exec = config_.execution;
  ObjectiveTerms terms;
  terms.regularizer = U.squaredNorm() + V.squaredNorm();
  terms.data = config_.lambda1 * kernels::residual(data_.rows, x, data_.target, exec).squaredNorm();
  if (power_flow_.active())
    terms.power_flow = config_.nu * kernels::residual(power_flow_.rows, x, power_flow_.target, exec).squaredNorm();
  if (sparsity_.active()) {
    const double q = kernels::residual(sparsity_.rows, x, sparsity_.target, exec).squaredNorm();
    terms.sparsity = config_.lambda2 * std::sqrt(q + config_.smoothing * config_.smoothing);
  }
  return terms;
}

template <class Lift>
Eigen::VectorXd FactorizedObjective::minimize(const Eigen::VectorXd& start, Lift lift) const {
  const auto exec = config_.execution;
  const auto d = start.size();

  const Eigen::MatrixXd g1 = lift(data_.rows);
  Eigen::MatrixXd H = 2.0 * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  kernels::accumulate_normal_equations(g1, data_.target, 2.0 * config_.lambda1, H, rhs, exec);

  Eigen::MatrixXd g2;
  if (power_flow_.active()) {
    g2 = lift(power_flow_.rows);
    kernels::accumulate_normal_equations(g2, power_flow_.target, 2.0 * config_.nu, H, rhs, exec);
  }

  const double eps2 = config_.smoothing * config_.smoothing;
  const auto objective = [&](const Eigen::VectorXd& z) {
    double f = z.squaredNorm() + config_.lambda1 * (g1 * z - data_.target).squaredNorm();
    if (power_flow_.active()) f += config_.nu * (g2 * z - power_flow_.target).squaredNorm();
    return f;
  };

  if (!sparsity_.active()) {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) throw SolverError("factor update: normal equations not positive definite", {});
    Eigen::VectorXd z = llt.solve(rhs);
    // exact minimizer; only rounding can make it look worse than the start
    return objective(z) <= objective(start) ? z : start;
  }

  const Eigen::MatrixXd g3 = lift(sparsity_.rows);
  Eigen::MatrixXd H3 = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd unused = Eigen::VectorXd::Zero(d);
  kernels::accumulate_normal_equations(g3, sparsity_.target, 1.0, H3, unused, exec);

  const auto full = [&](const Eigen::VectorXd& z, double& q) {
    q = (g3 * z).squaredNorm();
    return objective(z) + config_.lambda2 * std::sqrt(q + eps2);
  };

  // Majorize-minimize: sqrt(q + eps^2) is bounded above by its tangent in q, so
  // each reweighted quadratic solve cannot increase the smoothed objective.
  Eigen::VectorXd z = start;
  double q = 0.0;
  double f = full(z, q);
  for (int it = 0; it < config_.inner_iterations; ++it) {
    const double weight = config_.lambda2 / std::sqrt(q + eps2);
    Eigen::LLT<Eigen::MatrixXd> llt(H + weight * H3);
    if (llt.info() != Eigen::Success) throw SolverError("factor update: reweighted system not positive definite", {});
    const Eigen::VectorXd next = llt.solve(rhs);
    double q_next = 0.0;
    const double f_next = full(next, q_next);
    if (!std::isfinite(f_next)) throw SolverError("factor update produced a non-finite objective", {});
    if (f_next > f) break;
    const double drop = f - f_next;
    z = next;
    q = q_next;
    f = f_next;
    if (drop <= config_.inner_tolerance * std::max(1.0, std::abs(f))) break;
  }
  return z;
}

Eigen::MatrixXd FactorizedObjective::update_left(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const {
  const auto exec = config_.execution;
  const auto m = rows_;
  const Eigen::VectorXd z = minimize(vec(U), [&](const SparseRows& L) {
    return kernels::lift_left_factor(L, V, m, exec);
  });
  return Eigen::Map<const Eigen::MatrixXd>(z.data(), U.rows(), U.cols());
}

Eigen::MatrixXd FactorizedObjective::update_right(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V) const {
  const auto exec = config_.execution;
  const Eigen::VectorXd z = minimize(vec(V), [&](const SparseRows& L) {
    return kernels::lift_right_factor(L, U, exec);
  });
  return Eigen::Map<const Eigen::MatrixXd>(z.data(), V.rows(), V.cols());
}

EstimateReport factorized_completion(const MaskedMatrix& observed, const LinearPFModel* stacked_pf,
                                     const DctBasis* basis, const SolverConfig& config) {
  const FactorizedObjective problem(observed, stacked_pf, basis, config);
  FactorPair f = init_factors(observed, config.rank);

  EstimateReport report;
  auto terms = problem.evaluate(f.U, f.V);
  double current = terms.total();
  report.objective_trace.push_back(current);
  if (!std::isfinite(current)) throw SolverError("non-finite objective at initialization", report.objective_trace);

  for (int k = 1; k <= config.outer_iterations; ++k) {
    try {
      f.U = problem.update_left(f.U, f.V);
      f.V = problem.update_right(f.U, f.V);
    } catch (const SolverError& e) {
      std::ostringstream msg;
      msg << e.what() << " (outer iteration " << k << ")";
      throw SolverError(msg.str(), report.objective_trace);
    }
    terms = problem.evaluate(f.U, f.V);
    const double next = terms.total();
    report.objective_trace.push_back(next);
    report.iterations = k;
    if (!std::isfinite(next)) throw SolverError("non-finite objective", report.objective_trace);
    const double change = std::abs(current - next);
    current = next;
    if (change <= config.outer_tolerance * std::max(1.0, std::abs(next))) {
      report.converged = true;
      break;
    }
  }

  report.terms = terms;
  report.estimate = BlockMatrix{f.product(), static_cast<int>(observed.rows() / kRowsPerStep)};
  report.factors = std::move(f);
  return report;
}

EstimateReport classic_mc(const MaskedMatrix& step, const LinearPFModel& pf, const SolverConfig& config) {
  if (step.rows() != kRowsPerStep) throw DimensionError("classic_mc expects a single 5 x |P| time step");
  SolverConfig cfg = config;
  cfg.lambda2 = 0.0;
  const LinearPFModel stacked = pf.steps == 1 ? pf : build_stacked_model(pf, 1);
  return factorized_completion(step, &stacked, nullptr, cfg);
}

StepwiseReport classic_mc_stepwise(const MaskedMatrix& block, const LinearPFModel& pf,
                                   const SolverConfig& config) {
  const int steps = static_cast<int>(block.rows() / kRowsPerStep);
  const LinearPFModel single = build_stacked_model(pf, 1);
  StepwiseReport out;
  out.estimate.steps = steps;
  out.estimate.data.resize(block.rows(), block.cols());
  for (int t = 0; t < steps; ++t) {
    const MaskedMatrix step = block.slice(t);
    if (step.mask.empty()) throw EmptyMaskError("empty mask at time step " + std::to_string(t));
    out.steps.push_back(classic_mc(step, single, config));
    out.estimate.data.middleRows(kRowsPerStep * t, kRowsPerStep) = out.steps.back().estimate.data;
  }
  return out;
}

EstimateReport joint_mc_cs(const MaskedMatrix& block, const LinearPFModel& stacked_pf, const DctBasis& basis,
                           const SolverConfig& config) {
  if (block.rows() < 2 * kRowsPerStep) throw DimensionError("joint_mc_cs needs at least two time steps");
  return factorized_completion(block, &stacked_pf, &basis, config);
}

StepwiseReport cs_mc_pipeline(std::span<const SensorStream> streams, int cols, const DctBasis& basis,
                              const LinearPFModel& pf, const SolverConfig& config,
                              const CsOptions& cs_options) {
  if (streams.empty()) throw EmptyMaskError("cs_mc_pipeline: no sensor streams");
  const int steps = basis.length();
  const int rows = kRowsPerStep * steps;

  MaskedMatrix recovered;
  recovered.values = Eigen::MatrixXd::Zero(rows, cols);
  recovered.steps = steps;
  std::vector<Cell> cells;
  std::vector<CsResult> recoveries;
  recoveries.reserve(streams.size());
  for (const auto& s : streams) {
    if (s.col < 0 || s.col >= cols) throw DimensionError("sensor stream column out of range");
    try {
      recoveries.push_back(temporal_cs_recover(s.compressed, s.phi, basis, cs_options));
    } catch (const Error& e) {
      throw Error(std::string("stage 1 (sensor ") + std::to_string(s.col) + "/" + row_kind_name(s.kind) +
                  "): " + e.what());
    }
    const auto& z = recoveries.back().signal;
    for (int t = 0; t < steps; ++t) {
      const int r = kRowsPerStep * t + static_cast<int>(s.kind);
      recovered.values(r, s.col) = z(t);
      cells.push_back({r, s.col});
    }
  }
  recovered.mask = ObservationMask(rows, cols, std::move(cells));

  StepwiseReport out;
  try {
    out = classic_mc_stepwise(recovered, pf, config);
  } catch (const Error& e) {
    throw Error(std::string("stage 2: ") + e.what());
  }
  out.recoveries = std::move(recoveries);
  return out;
}

}  // namespace dsse
