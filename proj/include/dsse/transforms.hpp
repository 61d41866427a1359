#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace dsse {

/// Orthonormal DCT-II of length T split after row j: D1 keeps the j lowest
/// frequencies, D2 the remaining T - j.
struct DctBasis {
  Eigen::MatrixXd D;
  int split = 0;

  int length() const { return static_cast<int>(D.rows()); }
  auto d1() const { return D.topRows(split); }
  auto d2() const { return D.bottomRows(D.rows() - split); }
};

DctBasis dct_basis(int length, int split);

/// (||D1 x|| / ||x||, ||D2 x|| / ||x||)
std::pair<double, double> compactness_ratios(const Eigen::VectorXd& x, const DctBasis& basis);

enum class ProjectionKind { gaussian, bernoulli };

const char* projection_kind_name(ProjectionKind k);
ProjectionKind parse_projection_kind(const std::string& name);

struct ProjectionMatrix {
  Eigen::MatrixXd phi;  // M x N
  ProjectionKind kind = ProjectionKind::gaussian;
  std::uint64_t seed = 0;

  double cmr() const { return static_cast<double>(phi.rows()) / static_cast<double>(phi.cols()); }
};

/// Gaussian entries are N(0, 1/M); Bernoulli entries are +-1/sqrt(M).
ProjectionMatrix projection_matrix(int m, int n, ProjectionKind kind, std::uint64_t seed);

/// Fraction of squared singular-value energy held by the k largest singular values.
double singular_energy(const Eigen::MatrixXd& m, int k);

}  // namespace dsse
