#include <cmath>
#include <complex>
#include <random>

#include "doctest.h"
#include "dsse/errors.hpp"
#include "dsse/grid_model.hpp"
#include "fixtures.hpp"

using namespace dsse;

namespace {

// |V|^4 + (2(RP + XQ) - |V0|^2)|V|^2 + |z|^2 |S|^2 = 0, larger root
double two_node_magnitude(cplx z, cplx load, double v0) {
  const double a = v0 * v0 - 2.0 * (z.real() * load.real() + z.imag() * load.imag());
  const double disc = a * a - 4.0 * std::norm(z) * std::norm(load);
  return std::sqrt((a + std::sqrt(disc)) / 2.0);
}

}  // namespace

TEST_CASE("two-node feeder: zero injection predicts the slack voltage") {
  const auto f = fixtures::two_node_feeder({0.01, 0.01});
  const auto lin = build_linear_model(f);
  REQUIRE(lin.node_count() == 1);
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(1);
  CHECK(std::abs(lin.predict_voltage(zero)(0) - f.slack_voltage(0)) < 1e-12);
  CHECK(std::abs(lin.w(0) - f.slack_voltage(0)) < 1e-12);
}

TEST_CASE("two-node feeder: 0.1 pu load") {
  const cplx z{0.01, 0.01};
  const auto f = fixtures::two_node_feeder(z, {0.1, 0.0});
  const auto net = build_network_matrices(f);
  const auto lin = build_linear_model(net);
  const Eigen::VectorXcd s = -f.nominal_loads();

  const auto snap = solve_powerflow(net, s);
  const double oracle = two_node_magnitude(z, {0.1, 0.0}, 1.0);
  CHECK(std::abs(std::abs(snap.v(0)) - oracle) < 1e-10);
  CHECK(snap.residual <= 1e-10);
  CHECK(std::abs(snap.v(0)) < std::abs(net.w(0)));

  CHECK(std::abs(lin.predict_magnitude(s)(0) - std::abs(snap.v(0))) < 1e-3);

  const auto gen = solve_powerflow(net, -s);
  CHECK(std::abs(gen.v(0)) > std::abs(net.w(0)));
}

TEST_CASE("no-load voltage follows the slack phase rotation") {
  const auto f = load_feeder(fixtures::bundled_feeder());
  const auto lin = build_linear_model(f);
  const auto nodes = f.load_nodes();
  const double deg = M_PI / 180.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double angle = nodes[k].phase == Phase::a ? 0.0 : nodes[k].phase == Phase::b ? -120.0 * deg : 120.0 * deg;
    CHECK(std::abs(lin.w(static_cast<Eigen::Index>(k)) - std::polar(1.0, angle)) < 1e-9);
  }

  const auto chain = fixtures::three_phase_chain({0.02, 0.04}, {0.005, 0.01});
  const auto w = build_linear_model(chain).w;
  for (Eigen::Index k = 0; k < w.size(); ++k) CHECK(std::abs(w(k) - chain.slack_voltage(k % 3)) < 1e-9);
}

TEST_CASE("zero injections are exact for both v and |v|") {
  const auto lin = build_linear_model(load_feeder(fixtures::bundled_feeder()));
  const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(lin.node_count());
  CHECK(lin.predict_voltage(zero) == lin.w);
  CHECK(lin.predict_magnitude(zero) == lin.w.cwiseAbs());
}

TEST_CASE("power flow with zero injections returns the no-load voltage") {
  const auto f = load_feeder(fixtures::bundled_feeder());
  const auto net = build_network_matrices(f);
  const auto snap = solve_powerflow(net, Eigen::VectorXcd::Zero(net.w.size()));
  CHECK((snap.v - net.w).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("nominal load on the bundled feeder drops every voltage") {
  const auto f = load_feeder(fixtures::bundled_feeder());
  REQUIRE(f.load_node_count() == 33);
  const auto net = build_network_matrices(f);
  const auto snap = solve_powerflow(net, -f.nominal_loads());
  CHECK(snap.residual <= 1e-10);
  CHECK(power_balance_residual(net, snap.v, snap.s) <= 1e-10);
  for (Eigen::Index k = 0; k < snap.v.size(); ++k) CHECK(std::abs(snap.v(k)) < std::abs(net.w(k)));
}

TEST_CASE("linearization stays within 5e-3 pu over 100 light-load draws") {
  const auto f = load_feeder(fixtures::bundled_feeder());
  const auto net = build_network_matrices(f);
  const auto lin = build_linear_model(net);
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  double worst = 0.0;
  for (int draw = 0; draw < 100; ++draw) {
    Eigen::VectorXcd s(lin.node_count());
    for (auto& x : s) x = {u(rng), u(rng)};
    const auto snap = solve_powerflow(net, s);
    worst = std::max(worst, (lin.predict_voltage(s) - snap.v).cwiseAbs().maxCoeff());
  }
  CHECK(worst <= 5e-3);
}

TEST_CASE("stacked model") {
  const auto lin = build_linear_model(fixtures::three_phase_chain({0.02, 0.04}, {0.005, 0.01}));
  const auto n = lin.node_count();

  SUBCASE("T = 1 is the single block") {
    const auto one = build_stacked_model(lin, 1);
    CHECK(one.A == lin.step_block());
    CHECK(one.b == lin.step_offset());
  }
  SUBCASE("shapes for T = 3, |P| = 2") {
    FeederModel f = fixtures::two_node_feeder({0.01, 0.02});
    f.nodes.push_back({"2", Phase::a, {}});
    f.lines.push_back({"1", "2", {Phase::a}, Eigen::MatrixXcd::Constant(1, 1, cplx{0.01, 0.02})});
    const auto m = build_stacked_model(build_linear_model(f), 3);
    CHECK(m.A.rows() == 18);
    CHECK(m.A.cols() == 12);
    CHECK(m.b.size() == 18);
  }
  SUBCASE("zero injections predict the no-load states") {
    const auto m = build_stacked_model(lin, 4);
    const Eigen::VectorXd y0 = m.A * Eigen::VectorXd::Zero(m.A.cols()) + m.b;
    for (int t = 0; t < 4; ++t) CHECK(y0.segment(3 * lin.node_count() * t, 3 * lin.node_count()) == lin.step_offset());
  }
  SUBCASE("every time block reproduces the single-step model") {
    const int steps = 5;
    const auto m = build_stacked_model(lin, steps);
    const auto one = build_stacked_model(lin, 1);
    for (int t = 0; t < steps; ++t) {
      CHECK(m.A.block(3 * n * t, 2 * n * t, 3 * n, 2 * n) == one.A);
      CHECK(m.b.segment(3 * n * t, 3 * n) == one.b);
      // off-diagonal blocks are empty
      CHECK(m.A.middleRows(3 * n * t, 3 * n).cwiseAbs().sum() == doctest::Approx(one.A.cwiseAbs().sum()));
    }
  }
  SUBCASE("T < 1") { CHECK_THROWS_AS(build_stacked_model(lin, 0), DimensionError); }
}

TEST_CASE("topology and impedance errors") {
  SUBCASE("disconnected bus") {
    auto f = fixtures::two_node_feeder({0.01, 0.01});
    f.nodes.push_back({"9", Phase::a, {}});
    CHECK_THROWS_AS(f.validate(), TopologyError);
  }
  SUBCASE("meshed") {
    auto f = fixtures::three_phase_chain({0.02, 0.04}, {0.0, 0.0});
    f.lines.push_back({"s", "2", {Phase::a, Phase::b, Phase::c}, f.lines[0].impedance});
    CHECK_THROWS_AS(f.validate(), TopologyError);
  }
  SUBCASE("phase not fed from the slack") {
    auto f = fixtures::three_phase_chain({0.02, 0.04}, {0.0, 0.0});
    f.lines[0].phases = {Phase::a, Phase::b};
    f.lines[0].impedance = f.lines[0].impedance.topLeftCorner(2, 2).eval();
    f.lines[1].phases = {Phase::a, Phase::b, Phase::c};
    CHECK_THROWS_AS(f.validate(), TopologyError);
  }
  SUBCASE("negative resistance") {
    auto f = fixtures::two_node_feeder({-0.01, 0.01});
    CHECK_THROWS_AS(f.validate(), ConfigError);
  }
  SUBCASE("zero impedance is degenerate") {
    const auto f = fixtures::two_node_feeder({0.0, 0.0});
    CHECK_THROWS_AS(build_network_matrices(f), DegenerateNetworkError);
  }
}

TEST_CASE("power flow divergence carries the last residual") {
  const auto f = fixtures::two_node_feeder({0.1, 0.1});
  const Eigen::VectorXcd heavy = Eigen::VectorXcd::Constant(1, cplx{-20.0, -10.0});
  try {
    solve_powerflow(f, heavy);
    FAIL("expected divergence");
  } catch (const PowerFlowDiverged& e) {
    CHECK(e.last_residual > 1e-10);
  }
  CHECK_THROWS_AS(solve_powerflow(f, Eigen::VectorXcd::Zero(2)), DimensionError);
}

TEST_CASE("feeder JSON loader") {
  const std::string good = R"({
    "name": "t", "base_power": 1e6, "slack_bus": "0",
    "slack_voltage": [[1, 0], [-0.5, -0.8660254037844386], [-0.5, 0.8660254037844386]],
    "nodes": [{"bus": "0", "phase": "a"}, {"bus": "1", "phase": "a", "load": [0.1, 0.02]}],
    "lines": [{"from": "0", "to": "1", "phases": "a", "impedance": [[[0.01, 0.02]]]}]
  })";
  const auto f = parse_feeder_json(good);
  CHECK(f.load_node_count() == 1);
  CHECK(f.nominal_loads()(0) == cplx{0.1, 0.02});
  CHECK(f.lines[0].impedance(0, 0) == cplx{0.01, 0.02});

  std::string typo = good;
  typo.replace(typo.find("\"lines\""), 7, "\"line\"");
  CHECK_THROWS_AS(parse_feeder_json(typo), ConfigError);
  CHECK_THROWS_AS(parse_feeder_json("{not json"), ConfigError);
  std::string bad_phase = good;
  bad_phase.replace(bad_phase.find("\"phase\": \"a\""), 12, "\"phase\": \"d\"");
  CHECK_THROWS_AS(parse_feeder_json(bad_phase), ConfigError);
  CHECK_THROWS_AS(load_feeder(fixtures::data_dir() / "missing.json"), ConfigError);
}
