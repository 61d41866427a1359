#include "dsse/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dsse/errors.hpp"

namespace dsse {

DctBasis dct_basis(int length, int split) {
  if (length < 1) throw DimensionError("dct_basis: length must be >= 1");
  if (split < 0 || split > length) throw DimensionError("dct_basis: split must lie in [0, T]");
  DctBasis basis;
  basis.split = split;
  basis.D.resize(length, length);
  const double t = length;
  for (int k = 0; k < length; ++k) {
    const double alpha = k == 0 ? std::sqrt(1.0 / t) : std::sqrt(2.0 / t);
    for (int n = 0; n < length; ++n) basis.D(k, n) = alpha * std::cos(M_PI * (2.0 * n + 1.0) * k / (2.0 * t));
  }
  return basis;
}

std::pair<double, double> compactness_ratios(const Eigen::VectorXd& x, const DctBasis& basis) {
  if (x.size() != basis.length()) throw DimensionError("compactness_ratios: length mismatch");
  const double norm = x.norm();
  if (norm == 0.0) throw DimensionError("compactness_ratios: zero vector");
  return {(basis.d1() * x).norm() / norm, (basis.d2() * x).norm() / norm};
}

const char* projection_kind_name(ProjectionKind k) {
  return k == ProjectionKind::gaussian ? "gaussian" : "bernoulli";
}

ProjectionKind parse_projection_kind(const std::string& name) {
  if (name == "gaussian") return ProjectionKind::gaussian;
  if (name == "bernoulli") return ProjectionKind::bernoulli;
  throw ConfigError("unknown projection kind '" + name + "'");
}

ProjectionMatrix projection_matrix(int m, int n, ProjectionKind kind, std::uint64_t seed) {
  if (m < 1 || m > n) throw DimensionError("projection_matrix: need 1 <= M <= N");
  ProjectionMatrix out;
  out.kind = kind;
  out.seed = seed;
  out.phi.resize(m, n);
  std::mt19937_64 rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  if (kind == ProjectionKind::gaussian) {
    std::normal_distribution<double> g(0.0, scale);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.phi(i, j) = g(rng);
  } else {
    std::bernoulli_distribution coin(0.5);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.phi(i, j) = coin(rng) ? scale : -scale;
  }
  return out;
}

double singular_energy(const Eigen::MatrixXd& m, int k) {
  if (k < 0) throw DimensionError("singular_energy: k must be nonnegative");
  const Eigen::VectorXd sv = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  const double total = sv.squaredNorm();
  if (total == 0.0) throw DimensionError("singular_energy: zero matrix");
  const auto top = std::min<Eigen::Index>(k, sv.size());
  return std::min(1.0, sv.head(top).squaredNorm() / total);
}

}  // namespace dsse
