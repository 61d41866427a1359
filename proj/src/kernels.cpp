#include "dsse/kernels.hpp"

#include <algorithm>
#include <vector>

#include <omp.h>

#include "dsse/errors.hpp"

namespace dsse::kernels {

namespace {

using Triplet = Eigen::Triplet<double>;

SparseRows left_kron(const Eigen::MatrixXd& V, Eigen::Index m) {
  // (V^T (x) I_m): row i + m j, column i + m k, value V(k, j)
  const auto r = V.rows();
  const auto n = V.cols();
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(m * n * r));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index k = 0; k < r; ++k) entries.emplace_back(i + m * j, i + m * k, V(k, j));
  SparseRows K(m * n, m * r);
  K.setFromTriplets(entries.begin(), entries.end());
  return K;
}

SparseRows right_kron(const Eigen::MatrixXd& U, Eigen::Index n) {
  // (I_n (x) U): row i + m j, column k + r j, value U(i, k)
  const auto m = U.rows();
  const auto r = U.cols();
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(m * n * r));
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index k = 0; k < r; ++k) entries.emplace_back(i + m * j, k + r * j, U(i, k));
  SparseRows K(m * n, r * n);
  K.setFromTriplets(entries.begin(), entries.end());
  return K;
}

}  // namespace

int available_threads() { return omp_in_parallel() ? 1 : omp_get_max_threads(); }

Eigen::MatrixXd lift_left_factor(const SparseRows& L, const Eigen::MatrixXd& V, Eigen::Index m,
                                 Execution exec) {
  const auto r = V.rows();
  const auto n = V.cols();
  if (L.cols() != m * n) throw DimensionError("lift_left_factor: operator width does not match m x n");

  if (exec == Execution::serial) return Eigen::MatrixXd(L * left_kron(V, m));

  const auto rows = L.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, m * r);
#pragma omp parallel for schedule(static)
  for (Eigen::Index row = 0; row < rows; ++row) {
    for (SparseRows::InnerIterator it(L, row); it; ++it) {
      const Eigen::Index i = it.col() % m;
      const Eigen::Index j = it.col() / m;
      for (Eigen::Index k = 0; k < r; ++k) G(row, i + m * k) += it.value() * V(k, j);
    }
  }
  return G;
}

Eigen::MatrixXd lift_right_factor(const SparseRows& L, const Eigen::MatrixXd& U, Execution exec) {
  const auto m = U.rows();
  const auto r = U.cols();
  if (m == 0 || L.cols() % m != 0) throw DimensionError("lift_right_factor: operator width is not a multiple of m");
  const auto n = L.cols() / m;

  if (exec == Execution::serial) return Eigen::MatrixXd(L * right_kron(U, n));

  const auto rows = L.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(rows, r * n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index row = 0; row < rows; ++row) {
    for (SparseRows::InnerIterator it(L, row); it; ++it) {
      const Eigen::Index i = it.col() % m;
      const Eigen::Index j = it.col() / m;
      for (Eigen::Index k = 0; k < r; ++k) G(row, k + r * j) += it.value() * U(i, k);
    }
  }
  return G;
}

void accumulate_normal_equations(const Eigen::MatrixXd& G, const Eigen::VectorXd& g, double weight,
                                 Eigen::MatrixXd& H, Eigen::VectorXd& rhs, Execution exec) {
  const auto d = G.cols();
  if (g.size() != G.rows() || H.rows() != d || H.cols() != d || rhs.size() != d)
    throw DimensionError("accumulate_normal_equations: shape mismatch");
  if (weight == 0.0 || G.rows() == 0) return;

  if (exec == Execution::serial) {
    for (Eigen::Index row = 0; row < G.rows(); ++row) {
      for (Eigen::Index a = 0; a < d; ++a) {
        const double ga = weight * G(row, a);
        if (ga == 0.0) continue;
        rhs(a) += ga * g(row);
        for (Eigen::Index b = 0; b < d; ++b) H(a, b) += ga * G(row, b);
      }
    }
    return;
  }

  // column panels of H, each a small GEMM
  constexpr Eigen::Index panel = 32;
  const Eigen::Index panels = (d + panel - 1) / panel;
#pragma omp parallel for schedule(dynamic, 1)
  for (Eigen::Index p = 0; p < panels; ++p) {
    const Eigen::Index c0 = p * panel;
    const Eigen::Index w = std::min(panel, d - c0);
    H.middleCols(c0, w).noalias() += weight * (G.transpose() * G.middleCols(c0, w));
    rhs.segment(c0, w).noalias() += weight * (G.middleCols(c0, w).transpose() * g);
  }
}

Eigen::VectorXd residual(const SparseRows& L, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                         Execution exec) {
  if (x.size() != L.cols() || target.size() != L.rows()) throw DimensionError("residual: shape mismatch");
  if (exec == Execution::serial) return L * x - target;

  Eigen::VectorXd out(L.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index row = 0; row < L.rows(); ++row) {
    double acc = 0.0;
    for (SparseRows::InnerIterator it(L, row); it; ++it) acc += it.value() * x(it.col());
    out(row) = acc - target(row);
  }
  return out;
}

}  // namespace dsse::kernels
