#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "dsse/cs_solver.hpp"
#include "dsse/errors.hpp"
#include "dsse/grid_model.hpp"
#include "fixtures.hpp"

using namespace dsse;

namespace {

double rel_error(const Eigen::VectorXd& est, const Eigen::VectorXd& truth) {
  return (est - truth).norm() / truth.norm();
}

CsProblem temporal_problem(const Eigen::VectorXd& z, const Eigen::MatrixXd& phi, const DctBasis& b) {
  CsProblem p;
  p.phi = phi;
  p.h = phi * z;
  p.basis = b.D.transpose();
  return p;
}

}  // namespace

TEST_CASE("1-sparse DCT signal from 6 of 8 gaussian measurements") {
  const auto b = dct_basis(8, 2);
  int solved = 0;
  for (int k = 0; k < 8; ++k) {
    const Eigen::VectorXd z = 2.5 * b.D.row(k).transpose();
    const auto phi = projection_matrix(6, 8, ProjectionKind::gaussian, 100 + static_cast<std::uint64_t>(k)).phi;
    const auto r = solve_l1(temporal_problem(z, phi, b));
    CHECK(r.status == SolveStatus::converged);
    if (rel_error(r.signal, z) <= 1e-3) ++solved;
  }
  CHECK(solved == 8);
}

TEST_CASE("zero measurements give zero coefficients") {
  const auto b = dct_basis(8, 2);
  CsProblem p;
  p.phi = projection_matrix(4, 8, ProjectionKind::gaussian, 1).phi;
  p.h = Eigen::VectorXd::Zero(4);
  p.basis = b.D.transpose();
  const auto r = solve_l1(p);
  CHECK(r.coefficients.isZero(0.0));
  CHECK(r.signal.isZero(0.0));
}

TEST_CASE("identity sensing with vanishing lambda reproduces h") {
  const auto b = dct_basis(8, 2);
  const Eigen::VectorXd h = fixtures::random_matrix(8, 1, 7);
  CsProblem p;
  p.phi = Eigen::MatrixXd::Identity(8, 8);
  p.h = h;
  p.basis = b.D.transpose();
  p.options.lambda = 1e-12;
  CHECK((solve_l1(p).signal - h).cwiseAbs().maxCoeff() <= 1e-6);

  const auto direct = temporal_cs_recover(h, Eigen::MatrixXd::Identity(8, 8), b);
  CHECK((direct.signal - h).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("objective trace is nonincreasing") {
  const auto b = dct_basis(16, 2);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::VectorXd z = fixtures::random_matrix(16, 1, seed);
    auto p = temporal_problem(z, projection_matrix(7, 16, ProjectionKind::gaussian, seed).phi, b);
    p.options.keep_trace = true;
    p.options.lambda_ratio = 0.05;
    const auto r = solve_l1(p);
    REQUIRE(r.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
  }
}

TEST_CASE("scaling equivariance") {
  const auto b = dct_basis(12, 2);
  Eigen::VectorXd a = Eigen::VectorXd::Zero(12);
  a(1) = 1.5;
  a(7) = -0.4;
  const Eigen::VectorXd z = b.D.transpose() * a;
  auto p = temporal_problem(z, projection_matrix(8, 12, ProjectionKind::gaussian, 3).phi, b);
  p.options.lambda = 0.02;
  p.options.optimality_tolerance = 1e-12;
  p.options.max_iterations = 100000;
  const auto base = solve_l1(p);
  for (double beta : {0.1, 3.0, 250.0}) {
    auto q = p;
    q.h *= beta;
    q.options.lambda = 0.02 * beta;
    const auto scaled = solve_l1(q);
    CHECK((scaled.coefficients - beta * base.coefficients).norm() <= 1e-8 * beta * base.coefficients.norm());
  }
}

TEST_CASE("K-sparse recovery above the sampling bound") {
  const int n = 64;
  const int k = 2;
  const int m = static_cast<int>(std::ceil(4.0 * k * std::log(static_cast<double>(n) / k)));
  int ok = 0;
  const int trials = 20;
  for (int seed = 0; seed < trials; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::normal_distribution<double> g;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < k; ++i) a(idx[static_cast<std::size_t>(i)]) = g(rng);
    CsProblem p;
    p.phi = projection_matrix(m, n, ProjectionKind::gaussian, 1000 + static_cast<std::uint64_t>(seed)).phi;
    p.basis = Eigen::MatrixXd::Identity(n, n);
    p.h = p.phi * a;
    if (rel_error(solve_l1(p).coefficients, a) <= 1e-3) ++ok;
  }
  CHECK(ok >= 18);
}

TEST_CASE("temporal recovery of a slow profile at CMR 0.8") {
  const auto b = dct_basis(8, 2);
  Eigen::VectorXd z(8);
  for (int t = 0; t < 8; ++t) z(t) = -0.02 * (1.0 + 0.15 * std::cos(M_PI * (2.0 * t + 1.0) / 16.0));
  int good = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto phi = projection_matrix(6, 8, ProjectionKind::gaussian, seed).phi;
    const auto r = temporal_cs_recover(phi * z, phi, b);
    CHECK(r.status == SolveStatus::converged);
    if (rel_error(r.signal, z) <= 1e-2) ++good;
  }
  CHECK(good >= 18);

  const auto phi = projection_matrix(6, 8, ProjectionKind::gaussian, 11).phi;
  CHECK(rel_error(temporal_cs_recover(phi * z, phi, b).signal, z) <= 1e-2);
}

TEST_CASE("incompressible noise at CMR 0.4 is reported, not fatal") {
  const auto b = dct_basis(8, 2);
  const Eigen::VectorXd z = fixtures::random_matrix(8, 1, 77);
  const auto phi = projection_matrix(3, 8, ProjectionKind::gaussian, 5).phi;
  CsResult r;
  CHECK_NOTHROW(r = temporal_cs_recover(phi * z, phi, b));
  CHECK(std::isfinite(r.objective));
  CHECK(r.signal.allFinite());
  CHECK(rel_error(r.signal, z) > 0.1);
}

TEST_CASE("column weighting is only used for temporal recovery") {
  const auto b = dct_basis(8, 2);
  const Eigen::VectorXd z = 2.8 * b.D.row(0).transpose();
  const auto phi = projection_matrix(3, 8, ProjectionKind::gaussian, 3).phi;
  CsOptions plain;
  plain.normalize_columns = false;
  const auto a = temporal_cs_recover(phi * z, phi, b, plain);
  const auto p = solve_l1(temporal_problem(z, phi, b));
  CHECK((a.coefficients - p.coefficients).norm() <= 1e-12);
  // weighted result is still a solution of the same measurements
  const auto w = temporal_cs_recover(phi * z, phi, b);
  CHECK(w.measurement_residual <= 1e-3);
}

TEST_CASE("budget exhaustion is a status, not an error") {
  const auto b = dct_basis(16, 2);
  auto p = temporal_problem(fixtures::random_matrix(16, 1, 4), projection_matrix(6, 16, ProjectionKind::gaussian, 4).phi, b);
  p.options.max_iterations = 2;
  p.options.optimality_tolerance = 0.0;
  const auto r = solve_l1(p);
  CHECK(r.status == SolveStatus::budget_exhausted);
  CHECK(r.iterations == 2);
}

TEST_CASE("spatial mode keeps v on the power-flow map") {
  const auto lin = build_linear_model(fixtures::three_phase_chain({0.02, 0.04}, {0.005, 0.01}));
  const auto n = lin.node_count();
  Eigen::VectorXd p = Eigen::VectorXd::Zero(2 * n);
  p(1) = -0.03;
  p(n + 1) = -0.01;
  p(4) = -0.02;
  Eigen::VectorXd offset(2 * n);
  offset << lin.w.real(), lin.w.imag();

  CsProblem prob;
  prob.mode = CsMode::spatial;
  prob.spatial = SpatialConstraint{lin.B, offset, 10.0};
  prob.basis = Eigen::MatrixXd::Identity(4 * n, 4 * n);
  // only injections are sensed
  prob.phi = Eigen::MatrixXd::Zero(2 * n, 4 * n);
  prob.phi.leftCols(2 * n).setIdentity();
  prob.h = p;
  prob.options.lambda = 1e-9;
  prob.options.optimality_tolerance = 1e-11;
  prob.options.max_iterations = 200000;
  const auto r = solve_l1(prob);
  const Eigen::VectorXd p_hat = r.signal.head(2 * n);
  const Eigen::VectorXd v_hat = r.signal.tail(2 * n);
  CHECK((p_hat - p).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((v_hat - (lin.B * p + offset)).cwiseAbs().maxCoeff() <= 1e-6);

  prob.spatial.reset();
  CHECK_THROWS_AS(solve_l1(prob), DimensionError);
}

TEST_CASE("dimension errors") {
  const auto b = dct_basis(8, 2);
  CsProblem p;
  p.phi = Eigen::MatrixXd::Identity(4, 8);
  p.h = Eigen::VectorXd::Ones(3);
  p.basis = b.D.transpose();
  CHECK_THROWS_AS(solve_l1(p), DimensionError);
  CHECK_THROWS_AS(temporal_cs_recover(Eigen::VectorXd::Ones(4), Eigen::MatrixXd::Identity(4, 6), b), DimensionError);
  CHECK_THROWS_AS(temporal_cs_recover(Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Identity(4, 8), b), DimensionError);
}
