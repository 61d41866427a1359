#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "dsse/grid_model.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return DSSE_DATA_DIR; }
inline std::filesystem::path bundled_feeder() { return data_dir() / "feeder13.json"; }

// slack "0" (phase a) -> bus "1" (phase a)
inline dsse::FeederModel two_node_feeder(dsse::cplx z, dsse::cplx load = {0.0, 0.0}) {
  using namespace dsse;
  FeederModel f;
  f.name = "two-node";
  f.slack_bus = "0";
  f.slack_voltage = balanced_slack_voltage();
  f.nodes = {{"0", Phase::a, {}}, {"1", Phase::a, load}};
  Line l;
  l.from_bus = "0";
  l.to_bus = "1";
  l.phases = {Phase::a};
  l.impedance = Eigen::MatrixXcd::Constant(1, 1, z);
  f.lines = {l};
  return f;
}

// slack "s" -> "1" -> "2", all three phases, symmetric coupling
inline dsse::FeederModel three_phase_chain(dsse::cplx self, dsse::cplx mutual) {
  using namespace dsse;
  FeederModel f;
  f.name = "chain";
  f.slack_bus = "s";
  f.slack_voltage = balanced_slack_voltage();
  for (const char* bus : {"s", "1", "2"})
    for (Phase p : {Phase::a, Phase::b, Phase::c}) f.nodes.push_back({bus, p, {0.01, 0.004}});
  Eigen::MatrixXcd z = Eigen::MatrixXcd::Constant(3, 3, mutual);
  z.diagonal().setConstant(self);
  f.lines.push_back({"s", "1", {Phase::a, Phase::b, Phase::c}, z});
  f.lines.push_back({"1", "2", {Phase::a, Phase::b, Phase::c}, z});
  return f;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(rows, cols);
  for (auto& x : m.reshaped()) x = g(rng);
  return m;
}

}  // namespace fixtures
