#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

namespace dsse::kernels {

enum class Execution { serial, parallel };

/// Sparse linear functionals over vec(X), X stored column-major (index i + rows * j).
using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/*
 * Design lifting for the factorized model X = U V (U is m x r, V is r x n).
 *
 * lift_left_factor returns G with L vec(U V) = G vec(U) for fixed V;
 * lift_right_factor returns G with L vec(U V) = G vec(V) for fixed U.
 *
 * The serial path forms the Kronecker operators (V^T (x) I_m), (I_n (x) U)
 * explicitly and multiplies; the parallel path expands each row of L directly.
 * Both are bitwise deterministic for a given thread count and agree to rounding.
 */
Eigen::MatrixXd lift_left_factor(const SparseRows& L, const Eigen::MatrixXd& V, Eigen::Index m,
                                 Execution exec = Execution::parallel);
Eigen::MatrixXd lift_right_factor(const SparseRows& L, const Eigen::MatrixXd& U,
                                  Execution exec = Execution::parallel);

/// H += weight * G^T G and rhs += weight * G^T g.
/// Serial: row-by-row rank-1 accumulation. Parallel: one 32-column panel of H per task.
void accumulate_normal_equations(const Eigen::MatrixXd& G, const Eigen::VectorXd& g, double weight,
                                 Eigen::MatrixXd& H, Eigen::VectorXd& rhs,
                                 Execution exec = Execution::parallel);

/// L x - target.
Eigen::VectorXd residual(const SparseRows& L, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                         Execution exec = Execution::parallel);

/// Thread count the parallel paths will use in the current context.
int available_threads();

}  // namespace dsse::kernels
