#pragma once

#include <complex>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dsse {

using cplx = std::complex<double>;

enum class Phase : int { a = 0, b = 1, c = 2 };

char phase_label(Phase p);
Phase parse_phase(char label);

struct PhaseNode {
  std::string bus;
  Phase phase;
  /// Nominal consumption at this phase-node in per-unit (positive = load).
  cplx nominal_load{0.0, 0.0};
};

/// Series branch between two buses. `impedance` is k x k (per-unit) over `phases`,
/// off-diagonals carry mutual coupling.
struct Line {
  std::string from_bus;
  std::string to_bus;
  std::vector<Phase> phases;
  Eigen::MatrixXcd impedance;
};

/**
 * Three-phase radial feeder.
 *
 * `nodes` holds every phase-node including the slack bus phases. The non-slack
 * phase-nodes, in file order, define the columns of every measurement matrix.
 */
struct FeederModel {
  std::string name;
  std::string slack_bus;
  std::vector<PhaseNode> nodes;
  std::vector<Line> lines;
  /// Slack voltage for phases a, b, c.
  Eigen::Vector3cd slack_voltage;
  double base_power = 1.0e6;

  /// Non-slack phase-nodes (the set P), in column order.
  std::vector<PhaseNode> load_nodes() const;
  int load_node_count() const;
  /// Nominal consumption of the non-slack nodes, in column order.
  Eigen::VectorXcd nominal_loads() const;

  /// Checks radiality, connectivity and impedance sanity. Throws TopologyError
  /// or ConfigError.
  void validate() const;
};

FeederModel load_feeder(const std::filesystem::path& path);
FeederModel parse_feeder_json(const std::string& text);

/// Balanced 1.0 pu slack voltage with the standard -120/+120 degree rotation.
Eigen::Vector3cd balanced_slack_voltage(double magnitude = 1.0);

/// Y-bus partitions around the slack bus.
struct NetworkMatrices {
  Eigen::MatrixXcd y_ll;     // non-slack x non-slack
  Eigen::MatrixXcd y_l0;     // non-slack x slack phases
  Eigen::VectorXcd v_slack;  // slack phases present in y_l0 columns
  Eigen::MatrixXcd z_ll;     // inverse of y_ll
  Eigen::VectorXcd w;        // no-load voltage
};

NetworkMatrices build_network_matrices(const FeederModel& feeder);

/**
 * Affine power-flow surrogate
 *   [Re v; Im v] = B [Re s; Im s] + [Re w; Im w]
 *   |v|          = C [Re s; Im s] + |w|
 * and, after build_stacked_model, its block-diagonal T-step form y = A p + b.
 */
struct LinearPFModel {
  Eigen::MatrixXd B;   // 2n x 2n
  Eigen::MatrixXd C;   // n x 2n
  Eigen::VectorXcd w;  // n
  int steps = 0;       // 0 until stacked
  Eigen::MatrixXd A;   // 3nT x 2nT
  Eigen::VectorXd b;   // 3nT

  int node_count() const { return static_cast<int>(w.size()); }
  /// The per-step block [B1 B2; B3 B4; C1 C2].
  Eigen::MatrixXd step_block() const;
  /// The per-step offset [Re w; Im w; |w|].
  Eigen::VectorXd step_offset() const;

  Eigen::VectorXcd predict_voltage(const Eigen::VectorXcd& injections) const;
  Eigen::VectorXd predict_magnitude(const Eigen::VectorXcd& injections) const;
};

LinearPFModel build_linear_model(const FeederModel& feeder);
LinearPFModel build_linear_model(const NetworkMatrices& net);
LinearPFModel build_stacked_model(const LinearPFModel& model, int steps);

struct StateSnapshot {
  Eigen::VectorXcd v;
  Eigen::VectorXcd s;
  int t = 0;
  int iterations = 0;
  double residual = 0.0;
};

struct PowerFlowOptions {
  int max_iterations = 100;
  double tolerance = 1e-12;
  double residual_tolerance = 1e-10;
};

/// ||diag(conj(v)) (Y_LL v + Y_L0 v_slack) - conj(s)||_inf
double power_balance_residual(const NetworkMatrices& net, const Eigen::VectorXcd& v,
                              const Eigen::VectorXcd& s);

/// Z-bus fixed-point iteration v <- w + Z diag(conj(v))^-1 conj(s).
/// `injections` are net injections (generation positive).
StateSnapshot solve_powerflow(const NetworkMatrices& net, const Eigen::VectorXcd& injections,
                              const PowerFlowOptions& options = {});
StateSnapshot solve_powerflow(const FeederModel& feeder, const Eigen::VectorXcd& injections,
                              const PowerFlowOptions& options = {});

}  // namespace dsse
