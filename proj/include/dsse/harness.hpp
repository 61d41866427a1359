#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dsse/cs_solver.hpp"
#include "dsse/grid_model.hpp"
#include "dsse/mc_solver.hpp"
#include "dsse/measurements.hpp"
#include "dsse/transforms.hpp"

namespace dsse {

/// Load-profile generator. Each node's consumption series is
///   base * (1 + amplitude_k * cos(pi (2t + 1) / 2T)) + N(0, noise_sigma^2)
/// separately for its real and reactive part, where base is the nominal load
/// scaled by load_scale and a per-node factor in [1 - spread, 1 + spread], and
/// amplitude_k is drawn from [amplitude / 2, amplitude] with a random sign.
struct ProfileParams {
  double load_scale = 1.0;
  double amplitude = 0.2;
  double spread = 0.2;
  double noise_sigma = 0.0;  // absolute, per-unit
};

/// Net injections (generation positive), |P| x T.
Eigen::MatrixXcd generate_load_profiles(const FeederModel& feeder, int steps, const ProfileParams& params,
                                        std::uint64_t seed);

/// Percent error over entries with |truth| > floor.
double mape(std::span<const double> estimate, std::span<const double> truth, double floor = 1e-6);
/// Mean absolute wrapped angle difference, radians.
double miae(std::span<const double> estimate, std::span<const double> truth);

enum class Method { classic_mc, joint_mc_cs, cs_mc };

const char* method_name(Method m);
/// Accepts the canonical names and the short forms classic, joint, csmc.
Method parse_method(const std::string& name);

struct Scenario {
  std::filesystem::path feeder_path;
  int steps = 8;
  int dct_split = 2;
  ProfileParams profile;
  std::vector<Method> methods{Method::classic_mc, Method::joint_mc_cs, Method::cs_mc};
  std::vector<double> fads{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> cmrs{0.4, 0.8};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  double measurement_noise = 0.0;
  ProjectionKind projection = ProjectionKind::gaussian;
  SolverConfig solver;
  CsOptions cs;

  void validate() const;
};

/// Parses a scenario document. Relative feeder paths resolve against `base_dir`.
Scenario parse_scenario_json(const std::string& text, const std::filesystem::path& base_dir = {});
Scenario load_scenario(const std::filesystem::path& path);

/// Model data shared read-only by every sweep point.
struct Experiment {
  FeederModel feeder;
  NetworkMatrices network;
  LinearPFModel linear;   // single step
  LinearPFModel stacked;  // scenario.steps
  DctBasis basis;
  Scenario scenario;

  explicit Experiment(Scenario s);
  Experiment(FeederModel f, Scenario s);
};

struct GroundTruth {
  std::vector<StateSnapshot> snapshots;
  BlockMatrix block;
};

/// Nonlinear power-flow ground truth for one seed.
GroundTruth simulate(const Experiment& ex, std::uint64_t seed);

struct MetricsRow {
  Method method = Method::classic_mc;
  double fad = 0.0;
  double cmr = 1.0;
  std::uint64_t seed = 0;
  double mape_power = 0.0;
  double mape_vmag = 0.0;
  double miae_vang = 0.0;
  std::string status = "ok";
  double runtime_s = 0.0;
  /// Outer objective traces (one per solve); not serialized to results.csv.
  std::vector<std::vector<double>> traces;
};

struct Errors {
  double mape_power;
  double mape_vmag;
  double miae_vang;
};

Errors estimate_errors(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

struct PointResult {
  MetricsRow row;
  std::optional<BlockMatrix> estimate;
  std::optional<ObservationMask> mask;
};

/// Runs one (method, fad, cmr, seed) instance. Solver failures are captured in
/// the row status, never thrown.
PointResult run_point(const Experiment& ex, const GroundTruth& truth, Method method, double fad, double cmr,
                      std::uint64_t seed);
PointResult run_point(const Experiment& ex, Method method, double fad, double cmr, std::uint64_t seed);

/// Every (method, fad, cmr, seed) point, sorted by key. Methods without a
/// compression stage are run once per (fad, seed) and reported with cmr = 1.
std::vector<MetricsRow> run_sweep(const Experiment& ex, int workers = 1);

inline constexpr const char* kResultsHeader =
    "method,fad,cmr,seed,mape_power,mape_vmag,miae_vang,status,runtime_s";

void write_results_csv(std::ostream& out, std::span<const MetricsRow> rows);
std::vector<MetricsRow> read_results_csv(std::istream& in);
void write_trace_csv(std::ostream& out, const MetricsRow& row);

/// Mean metric per FAD (rows) and series (columns): one table per quantity.
struct AggregateTable {
  std::string metric;
  std::vector<std::string> series;
  std::vector<double> fads;
  Eigen::MatrixXd mean;  // fads x series, NaN when no successful run
};

std::vector<AggregateTable> aggregate_by_fad(std::span<const MetricsRow> rows);
void write_table_csv(std::ostream& out, const AggregateTable& table);

std::string format_number(double v);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, double salt = 0.0);

}  // namespace dsse
