#include "dsse/grid_model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include "dsse/errors.hpp"
#include "json.hpp"

namespace dsse {

using json = nlohmann::json;

char phase_label(Phase p) { return "abc"[static_cast<int>(p)]; }

Phase parse_phase(char label) {
  switch (label) {
    case 'a': case 'A': return Phase::a;
    case 'b': case 'B': return Phase::b;
    case 'c': case 'C': return Phase::c;
    default: break;
  }
  throw ConfigError(std::string("unknown phase label '") + label + "'");
}

Eigen::Vector3cd balanced_slack_voltage(double magnitude) {
  const double deg = M_PI / 180.0;
  Eigen::Vector3cd v;
  v << std::polar(magnitude, 0.0), std::polar(magnitude, -120.0 * deg),
      std::polar(magnitude, 120.0 * deg);
  return v;
}

std::vector<PhaseNode> FeederModel::load_nodes() const {
  std::vector<PhaseNode> out;
  for (const auto& n : nodes)
    if (n.bus != slack_bus) out.push_back(n);
  return out;
}

int FeederModel::load_node_count() const {
  int count = 0;
  for (const auto& n : nodes)
    if (n.bus != slack_bus) ++count;
  return count;
}

Eigen::VectorXcd FeederModel::nominal_loads() const {
  const auto loads = load_nodes();
  Eigen::VectorXcd out(static_cast<Eigen::Index>(loads.size()));
  for (std::size_t i = 0; i < loads.size(); ++i) out(static_cast<Eigen::Index>(i)) = loads[i].nominal_load;
  return out;
}

namespace {

using NodeKey = std::pair<std::string, Phase>;

std::map<NodeKey, int> index_nodes(const FeederModel& f) {
  // slack phases first, then non-slack in file order
  std::map<NodeKey, int> idx;
  int next = 0;
  for (const auto& n : f.nodes)
    if (n.bus == f.slack_bus) idx[{n.bus, n.phase}] = next++;
  for (const auto& n : f.nodes)
    if (n.bus != f.slack_bus) idx[{n.bus, n.phase}] = next++;
  return idx;
}

}  // namespace

void FeederModel::validate() const {
  if (nodes.empty()) throw ConfigError("feeder has no nodes");
  if (!(base_power > 0.0)) throw ConfigError("base_power must be positive");

  std::set<NodeKey> seen;
  std::set<std::string> buses;
  int slack_phases = 0;
  for (const auto& n : nodes) {
    if (!seen.insert({n.bus, n.phase}).second)
      throw ConfigError("duplicate node " + n.bus + "." + phase_label(n.phase));
    buses.insert(n.bus);
    if (n.bus == slack_bus) ++slack_phases;
  }
  if (slack_phases == 0) throw TopologyError("slack bus '" + slack_bus + "' has no phase nodes");
  if (load_node_count() == 0) throw TopologyError("feeder has no non-slack nodes");

  std::size_t conductors = 0;
  for (const auto& l : lines) {
    const auto k = static_cast<Eigen::Index>(l.phases.size());
    if (k == 0) throw ConfigError("line " + l.from_bus + "-" + l.to_bus + " has no phases");
    if (l.impedance.rows() != k || l.impedance.cols() != k)
      throw ConfigError("line " + l.from_bus + "-" + l.to_bus + " impedance is not " +
                        std::to_string(k) + "x" + std::to_string(k));
    for (Eigen::Index i = 0; i < k; ++i)
      if (l.impedance(i, i).real() < 0.0)
        throw ConfigError("line " + l.from_bus + "-" + l.to_bus + " has negative resistance");
    for (Phase p : l.phases) {
      if (!seen.count({l.from_bus, p}) || !seen.count({l.to_bus, p}))
        throw TopologyError("line " + l.from_bus + "-" + l.to_bus + " phase " + phase_label(p) +
                            " ends at a missing node");
    }
    conductors += l.phases.size();
  }
  if (lines.size() + 1 != buses.size())
    throw TopologyError("feeder is not radial: " + std::to_string(lines.size()) + " lines for " +
                        std::to_string(buses.size()) + " buses");
  if (conductors != nodes.size() - static_cast<std::size_t>(slack_phases))
    throw TopologyError("feeder is not radial: conductor count does not match phase-node count");

  // Reachability per phase-node from the slack bus.
  std::multimap<std::string, const Line*> adjacency;
  for (const auto& l : lines) {
    adjacency.emplace(l.from_bus, &l);
    adjacency.emplace(l.to_bus, &l);
  }
  std::set<NodeKey> reached;
  for (const auto& n : nodes)
    if (n.bus == slack_bus) reached.insert({n.bus, n.phase});
  std::queue<std::string> frontier;
  std::set<std::string> visited{slack_bus};
  frontier.push(slack_bus);
  while (!frontier.empty()) {
    const auto bus = frontier.front();
    frontier.pop();
    auto [lo, hi] = adjacency.equal_range(bus);
    for (auto it = lo; it != hi; ++it) {
      const Line& l = *it->second;
      const auto& other = l.from_bus == bus ? l.to_bus : l.from_bus;
      if (visited.count(other)) continue;
      visited.insert(other);
      for (Phase p : l.phases)
        if (reached.count({bus, p})) reached.insert({other, p});
      frontier.push(other);
    }
  }
  for (const auto& n : nodes)
    if (!reached.count({n.bus, n.phase}))
      throw TopologyError("node " + n.bus + "." + phase_label(n.phase) +
                          " is not reachable from the slack bus");
}

namespace {

cplx parse_complex(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(where + ": expected [re, im] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return obj.at(key);
}

}  // namespace

FeederModel parse_feeder_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("feeder file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("feeder file: top level must be an object");
  reject_unknown(doc, {"name", "base_power", "slack_bus", "slack_voltage", "nodes", "lines"},
                 "feeder");

  FeederModel f;
  try {
    f.name = doc.value("name", std::string("feeder"));
    f.base_power = require(doc, "base_power", "feeder").get<double>();
    f.slack_bus = require(doc, "slack_bus", "feeder").get<std::string>();

    const auto& sv = require(doc, "slack_voltage", "feeder");
    if (!sv.is_array() || sv.size() != 3)
      throw ConfigError("feeder: slack_voltage must list phases a, b, c");
    for (int p = 0; p < 3; ++p) f.slack_voltage(p) = parse_complex(sv[p], "slack_voltage");

    for (const auto& n : require(doc, "nodes", "feeder")) {
      reject_unknown(n, {"bus", "phase", "load"}, "node");
      PhaseNode node;
      node.bus = require(n, "bus", "node").get<std::string>();
      const auto ph = require(n, "phase", "node").get<std::string>();
      if (ph.size() != 1) throw ConfigError("node " + node.bus + ": phase must be one of a, b, c");
      node.phase = parse_phase(ph[0]);
      if (n.contains("load")) node.nominal_load = parse_complex(n.at("load"), "node " + node.bus);
      f.nodes.push_back(node);
    }

    for (const auto& l : require(doc, "lines", "feeder")) {
      reject_unknown(l, {"from", "to", "phases", "impedance"}, "line");
      Line line;
      line.from_bus = require(l, "from", "line").get<std::string>();
      line.to_bus = require(l, "to", "line").get<std::string>();
      for (char c : require(l, "phases", "line").get<std::string>()) line.phases.push_back(parse_phase(c));
      const auto k = static_cast<Eigen::Index>(line.phases.size());
      const auto& z = require(l, "impedance", "line");
      const std::string where = "line " + line.from_bus + "-" + line.to_bus;
      if (!z.is_array() || static_cast<Eigen::Index>(z.size()) != k)
        throw ConfigError(where + ": impedance must have one row per phase");
      line.impedance.resize(k, k);
      for (Eigen::Index r = 0; r < k; ++r) {
        if (!z[r].is_array() || static_cast<Eigen::Index>(z[r].size()) != k)
          throw ConfigError(where + ": impedance must be square");
        for (Eigen::Index c = 0; c < k; ++c) line.impedance(r, c) = parse_complex(z[r][c], where);
      }
      f.lines.push_back(std::move(line));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("feeder file: ") + e.what());
  }
  f.validate();
  return f;
}

FeederModel load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open feeder file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_feeder_json(buf.str());
}

NetworkMatrices build_network_matrices(const FeederModel& feeder) {
  feeder.validate();
  const auto idx = index_nodes(feeder);
  const int total = static_cast<int>(feeder.nodes.size());
  const int n = feeder.load_node_count();
  const int slack = total - n;

  Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(total, total);
  for (const auto& l : feeder.lines) {
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(l.impedance);
    if (!lu.isInvertible())
      throw DegenerateNetworkError("degenerate network: singular impedance on line " + l.from_bus +
                                   "-" + l.to_bus);
    const Eigen::MatrixXcd yl = lu.inverse();
    const auto k = static_cast<int>(l.phases.size());
    for (int i = 0; i < k; ++i) {
      const int fi = idx.at({l.from_bus, l.phases[i]});
      const int ti = idx.at({l.to_bus, l.phases[i]});
      for (int j = 0; j < k; ++j) {
        const int fj = idx.at({l.from_bus, l.phases[j]});
        const int tj = idx.at({l.to_bus, l.phases[j]});
        y(fi, fj) += yl(i, j);
        y(ti, tj) += yl(i, j);
        y(fi, tj) -= yl(i, j);
        y(ti, fj) -= yl(i, j);
      }
    }
  }

  NetworkMatrices net;
  net.y_ll = y.bottomRightCorner(n, n);
  net.y_l0 = y.bottomLeftCorner(n, slack);
  net.v_slack.resize(slack);
  for (const auto& node : feeder.nodes)
    if (node.bus == feeder.slack_bus)
      net.v_slack(idx.at({node.bus, node.phase})) = feeder.slack_voltage(static_cast<int>(node.phase));

  Eigen::FullPivLU<Eigen::MatrixXcd> lu(net.y_ll);
  if (!lu.isInvertible()) throw DegenerateNetworkError("degenerate network: singular Y_LL");
  net.z_ll = lu.inverse();
  net.w = -net.z_ll * (net.y_l0 * net.v_slack);
  return net;
}

Eigen::MatrixXd LinearPFModel::step_block() const {
  const auto n = node_count();
  Eigen::MatrixXd blk(3 * n, 2 * n);
  blk << B, C;
  return blk;
}

Eigen::VectorXd LinearPFModel::step_offset() const {
  const auto n = node_count();
  Eigen::VectorXd off(3 * n);
  off << w.real(), w.imag(), w.cwiseAbs();
  return off;
}

Eigen::VectorXcd LinearPFModel::predict_voltage(const Eigen::VectorXcd& injections) const {
  const auto n = node_count();
  Eigen::VectorXd p(2 * n);
  p << injections.real(), injections.imag();
  const Eigen::VectorXd re_im = B * p;
  Eigen::VectorXcd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = w(k) + cplx(re_im(k), re_im(n + k));
  return v;
}

Eigen::VectorXd LinearPFModel::predict_magnitude(const Eigen::VectorXcd& injections) const {
  const auto n = node_count();
  Eigen::VectorXd p(2 * n);
  p << injections.real(), injections.imag();
  return C * p + w.cwiseAbs();
}

LinearPFModel build_linear_model(const NetworkMatrices& net) {
  const auto n = net.w.size();
  for (Eigen::Index k = 0; k < n; ++k)
    if (std::abs(net.w(k)) == 0.0) throw DegenerateNetworkError("degenerate network: zero no-load voltage");

  // v - w ~= Z diag(1/conj(w)) conj(s) = G (Re s - j Im s)
  Eigen::MatrixXcd g = net.z_ll;
  for (Eigen::Index k = 0; k < n; ++k) g.col(k) /= std::conj(net.w(k));
  const Eigen::MatrixXd gr = g.real();
  const Eigen::MatrixXd gi = g.imag();

  LinearPFModel m;
  m.w = net.w;
  m.B.resize(2 * n, 2 * n);
  m.B << gr, gi, gi, -gr;

  // |v| ~= |w| + Re(conj(w)/|w| (v - w))
  const Eigen::VectorXd mag = net.w.cwiseAbs();
  const Eigen::VectorXd cr = net.w.real().cwiseQuotient(mag);
  const Eigen::VectorXd ci = net.w.imag().cwiseQuotient(mag);
  m.C = cr.asDiagonal() * m.B.topRows(n) + ci.asDiagonal() * m.B.bottomRows(n);
  return m;
}

LinearPFModel build_linear_model(const FeederModel& feeder) {
  return build_linear_model(build_network_matrices(feeder));
}

LinearPFModel build_stacked_model(const LinearPFModel& model, int steps) {
  if (steps < 1) throw DimensionError("build_stacked_model: steps must be >= 1");
  const auto n = model.node_count();
  LinearPFModel out = model;
  out.steps = steps;
  const Eigen::MatrixXd blk = model.step_block();
  const Eigen::VectorXd off = model.step_offset();
  out.A = Eigen::MatrixXd::Zero(3 * n * steps, 2 * n * steps);
  out.b.resize(3 * n * steps);
  for (int t = 0; t < steps; ++t) {
    out.A.block(3 * n * t, 2 * n * t, 3 * n, 2 * n) = blk;
    out.b.segment(3 * n * t, 3 * n) = off;
  }
  return out;
}

double power_balance_residual(const NetworkMatrices& net, const Eigen::VectorXcd& v,
                              const Eigen::VectorXcd& s) {
  const Eigen::VectorXcd current = net.y_ll * v + net.y_l0 * net.v_slack;
  return (v.conjugate().cwiseProduct(current) - s.conjugate()).cwiseAbs().maxCoeff();
}

StateSnapshot solve_powerflow(const NetworkMatrices& net, const Eigen::VectorXcd& injections,
                              const PowerFlowOptions& options) {
  const auto n = net.w.size();
  if (injections.size() != n)
    throw DimensionError("solve_powerflow: expected " + std::to_string(n) + " injections, got " +
                         std::to_string(injections.size()));

  StateSnapshot snap;
  snap.s = injections;
  Eigen::VectorXcd v = net.w;
  const Eigen::VectorXcd s_conj = injections.conjugate();
  double residual = power_balance_residual(net, v, injections);
  int it = 0;
  while (it < options.max_iterations) {
    const Eigen::VectorXcd next = net.w + net.z_ll * s_conj.cwiseQuotient(v.conjugate());
    const double step = (next - v).cwiseAbs().maxCoeff();
    v = next;
    ++it;
    residual = power_balance_residual(net, v, injections);
    if (!std::isfinite(step) || !std::isfinite(residual)) break;
    if (step <= options.tolerance && residual <= options.residual_tolerance) break;
  }
  if (!std::isfinite(residual) || residual > options.residual_tolerance) {
    std::ostringstream msg;
    msg << "power flow diverged after " << it << " iterations (residual " << residual << ")";
    throw PowerFlowDiverged(msg.str(), residual);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mag = std::abs(v(k));
    if (!(mag > 0.0 && mag < 2.0)) {
      std::ostringstream msg;
      msg << "power flow produced an implausible voltage magnitude " << mag << " pu";
      throw PowerFlowDiverged(msg.str(), residual);
    }
  }
  snap.v = v;
  snap.iterations = it;
  snap.residual = residual;
  return snap;
}

StateSnapshot solve_powerflow(const FeederModel& feeder, const Eigen::VectorXcd& injections,
                              const PowerFlowOptions& options) {
  return solve_powerflow(build_network_matrices(feeder), injections, options);
}

}  // namespace dsse
