#include "dsse/harness.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "dsse/errors.hpp"
#include "json.hpp"

namespace dsse {

using json = nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, double salt) {
  // splitmix64 over (seed, stream, salt bits)
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ std::bit_cast<std::uint64_t>(salt));
}

namespace {

// stream tags for derive_seed
constexpr std::uint64_t kLoadStream = 0x6c6f6164;
constexpr std::uint64_t kMaskStream = 0x6d61736b;
constexpr std::uint64_t kNoiseStream = 0x6e6f6973;
constexpr std::uint64_t kSensorStream = 0x73656e73;
constexpr std::uint64_t kProjectionStream = 0x70726f6a;

}  // namespace

Eigen::MatrixXcd generate_load_profiles(const FeederModel& feeder, int steps, const ProfileParams& params,
                                        std::uint64_t seed) {
  if (steps < 1) throw ConfigError("profile length must be >= 1");
  if (params.noise_sigma < 0.0 || params.spread < 0.0 || params.spread >= 1.0)
    throw ConfigError("profile: noise_sigma must be >= 0 and spread in [0, 1)");

  const Eigen::VectorXcd nominal = feeder.nominal_loads();
  const auto n = nominal.size();
  std::mt19937_64 rng(derive_seed(seed, kLoadStream));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 1.0);

  Eigen::MatrixXcd out(n, steps);
  for (Eigen::Index k = 0; k < n; ++k) {
    const cplx base = nominal(k) * params.load_scale * (1.0 + params.spread * unit(rng));
    const auto draw_amplitude = [&] {
      const double u = unit(rng);
      return (u < 0 ? -1.0 : 1.0) * params.amplitude * (0.5 + 0.5 * std::abs(u));
    };
    const double amp_re = draw_amplitude();
    const double amp_im = draw_amplitude();
    for (int t = 0; t < steps; ++t) {
      const double wave = std::cos(M_PI * (2.0 * t + 1.0) / (2.0 * steps));
      double re = base.real() * (1.0 + amp_re * wave);
      double im = base.imag() * (1.0 + amp_im * wave);
      if (params.noise_sigma > 0.0) {
        re += params.noise_sigma * jitter(rng);
        im += params.noise_sigma * jitter(rng);
      }
      out(k, t) = -cplx(re, im);
    }
  }
  return out;
}

double mape(std::span<const double> estimate, std::span<const double> truth, double floor) {
  if (estimate.size() != truth.size()) throw DimensionError("mape: length mismatch");
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (std::abs(truth[i]) <= floor) continue;
    sum += std::abs(estimate[i] - truth[i]) / std::abs(truth[i]);
    ++counted;
  }
  if (counted == 0) throw DimensionError("degenerate truth: every entry is below the MAPE floor");
  return 100.0 * sum / static_cast<double>(counted);
}

double miae(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw DimensionError("miae: length mismatch");
  if (truth.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    // wrap into (-pi, pi]
    double d = std::remainder(estimate[i] - truth[i], 2.0 * M_PI);
    if (d <= -M_PI) d += 2.0 * M_PI;
    sum += std::abs(d);
  }
  return sum / static_cast<double>(truth.size());
}

const char* method_name(Method m) {
  switch (m) {
    case Method::classic_mc: return "classic_mc";
    case Method::joint_mc_cs: return "joint_mc_cs";
    case Method::cs_mc: return "cs_mc";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "classic_mc" || name == "classic") return Method::classic_mc;
  if (name == "joint_mc_cs" || name == "joint") return Method::joint_mc_cs;
  if (name == "cs_mc" || name == "csmc") return Method::cs_mc;
  throw ConfigError("unknown method '" + name + "' (expected classic_mc, joint_mc_cs or cs_mc)");
}

void Scenario::validate() const {
  if (steps < 1) throw ConfigError("scenario: steps must be >= 1");
  if (dct_split < 0 || dct_split > steps) throw ConfigError("scenario: dct_split must lie in [0, steps]");
  if (methods.empty()) throw ConfigError("scenario: no methods");
  if (fads.empty() || cmrs.empty()) throw ConfigError("scenario: fad and cmr grids must be nonempty");
  for (double f : fads)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("scenario: fad values must lie in (0, 1]");
  for (double c : cmrs)
    if (!(c > 0.0 && c <= 1.0)) throw ConfigError("scenario: cmr values must lie in (0, 1]");
  if (seeds.empty()) throw ConfigError("scenario: seed list is empty");
  if (measurement_noise < 0.0) throw ConfigError("scenario: measurement_noise must be >= 0");
  for (Method m : methods)
    if (m == Method::joint_mc_cs && steps < 2) throw ConfigError("scenario: joint_mc_cs needs steps >= 2");
}

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read_if(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

}  // namespace

Scenario parse_scenario_json(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  reject_unknown(doc,
                 {"feeder", "steps", "dct_split", "profile", "methods", "fad", "cmr", "seeds",
                  "measurement_noise", "projection", "solver", "cs"},
                 "scenario");
  Scenario s;
  try {
    if (!doc.contains("feeder")) throw ConfigError("scenario: missing key 'feeder'");
    std::filesystem::path feeder = doc.at("feeder").get<std::string>();
    s.feeder_path = feeder.is_relative() && !base_dir.empty() ? base_dir / feeder : feeder;
    read_if(doc, "steps", s.steps);
    read_if(doc, "dct_split", s.dct_split);
    read_if(doc, "measurement_noise", s.measurement_noise);
    if (doc.contains("projection")) s.projection = parse_projection_kind(doc.at("projection").get<std::string>());
    if (doc.contains("methods")) {
      s.methods.clear();
      for (const auto& m : doc.at("methods")) s.methods.push_back(parse_method(m.get<std::string>()));
    }
    read_if(doc, "fad", s.fads);
    read_if(doc, "cmr", s.cmrs);
    read_if(doc, "seeds", s.seeds);
    if (doc.contains("profile")) {
      const auto& p = doc.at("profile");
      reject_unknown(p, {"load_scale", "amplitude", "spread", "noise_sigma"}, "scenario.profile");
      read_if(p, "load_scale", s.profile.load_scale);
      read_if(p, "amplitude", s.profile.amplitude);
      read_if(p, "spread", s.profile.spread);
      read_if(p, "noise_sigma", s.profile.noise_sigma);
    }
    if (doc.contains("solver")) {
      const auto& c = doc.at("solver");
      reject_unknown(c,
                     {"lambda1", "nu", "lambda2", "rank", "outer_iterations", "outer_tolerance",
                      "inner_iterations", "inner_tolerance", "smoothing"},
                     "scenario.solver");
      read_if(c, "lambda1", s.solver.lambda1);
      read_if(c, "nu", s.solver.nu);
      read_if(c, "lambda2", s.solver.lambda2);
      read_if(c, "rank", s.solver.rank);
      read_if(c, "outer_iterations", s.solver.outer_iterations);
      read_if(c, "outer_tolerance", s.solver.outer_tolerance);
      read_if(c, "inner_iterations", s.solver.inner_iterations);
      read_if(c, "inner_tolerance", s.solver.inner_tolerance);
      read_if(c, "smoothing", s.solver.smoothing);
    }
    if (doc.contains("cs")) {
      const auto& c = doc.at("cs");
      reject_unknown(c, {"lambda_ratio", "max_iterations", "optimality_tolerance"}, "scenario.cs");
      read_if(c, "lambda_ratio", s.cs.lambda_ratio);
      read_if(c, "max_iterations", s.cs.max_iterations);
      read_if(c, "optimality_tolerance", s.cs.optimality_tolerance);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario file: ") + e.what());
  }
  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario_json(buf.str(), path.parent_path());
}

Experiment::Experiment(Scenario s) : Experiment(load_feeder(s.feeder_path), s) {}

Experiment::Experiment(FeederModel f, Scenario s)
    : feeder(std::move(f)),
      network(build_network_matrices(feeder)),
      linear(build_linear_model(network)),
      stacked(build_stacked_model(linear, s.steps)),
      basis(dct_basis(s.steps, s.dct_split)),
      scenario(std::move(s)) {
  scenario.validate();
}

GroundTruth simulate(const Experiment& ex, std::uint64_t seed) {
  const int steps = ex.scenario.steps;
  const Eigen::MatrixXcd injections = generate_load_profiles(ex.feeder, steps, ex.scenario.profile, seed);
  GroundTruth gt;
  std::vector<MeasurementMatrix> per_step;
  for (int t = 0; t < steps; ++t) {
    StateSnapshot snap = solve_powerflow(ex.network, injections.col(t));
    snap.t = t;
    per_step.push_back(build_measurement_matrix(snap));
    gt.snapshots.push_back(std::move(snap));
  }
  gt.block = build_block_matrix(per_step);
  return gt;
}

Errors estimate_errors(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols() || truth.rows() % kRowsPerStep != 0)
    throw DimensionError("estimate_errors: shape mismatch");
  const auto steps = truth.rows() / kRowsPerStep;
  std::vector<double> pe, pt, me, mt, ae, at;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const auto r = kRowsPerStep * t;
    for (Eigen::Index j = 0; j < truth.cols(); ++j) {
      for (int k : {3, 4}) {
        pe.push_back(estimate(r + k, j));
        pt.push_back(truth(r + k, j));
      }
      me.push_back(estimate(r + 2, j));
      mt.push_back(truth(r + 2, j));
      ae.push_back(std::atan2(estimate(r + 1, j), estimate(r, j)));
      at.push_back(std::atan2(truth(r + 1, j), truth(r, j)));
    }
  }
  return {mape(pe, pt), mape(me, mt), miae(ae, at)};
}

namespace {

std::vector<SensorStream> sense_streams(const Experiment& ex, const BlockMatrix& truth, double fad, double cmr,
                                        std::uint64_t seed, ObservationMask& sensed) {
  const int steps = ex.scenario.steps;
  const int cols = static_cast<int>(truth.cols());
  const auto series = sample_mask(kRowsPerStep, cols, fad, derive_seed(seed, kSensorStream, fad));
  const int m = cmr >= 1.0 ? steps : std::max(1, static_cast<int>(std::lround(cmr * steps)));

  std::mt19937_64 noise_rng(derive_seed(seed, kNoiseStream, fad));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<SensorStream> streams;
  std::vector<Cell> cells;
  for (const auto& c : series.cells()) {
    SensorStream s;
    s.col = c.col;
    s.kind = static_cast<RowKind>(c.row);
    const std::uint64_t id = static_cast<std::uint64_t>(c.col) * kRowsPerStep + static_cast<std::uint64_t>(c.row);
    s.phi = cmr >= 1.0 ? Eigen::MatrixXd::Identity(steps, steps)
                       : projection_matrix(m, steps, ex.scenario.projection,
                                           derive_seed(seed, kProjectionStream + id)).phi;
    // the sensor itself reads the true series; the estimator only sees s.compressed
    Eigen::VectorXd x = extract_temporal_series(truth.data, c.col, s.kind);
    s.compressed = s.phi * x;
    if (ex.scenario.measurement_noise > 0.0)
      for (Eigen::Index i = 0; i < s.compressed.size(); ++i)
        s.compressed(i) += ex.scenario.measurement_noise * noise(noise_rng);
    streams.push_back(std::move(s));
    for (int t = 0; t < steps; ++t) cells.push_back({kRowsPerStep * t + c.row, c.col});
  }
  sensed = ObservationMask(kRowsPerStep * steps, cols, std::move(cells));
  return streams;
}

}  // namespace

PointResult run_point(const Experiment& ex, const GroundTruth& truth, Method method, double fad, double cmr,
                      std::uint64_t seed) {
  PointResult out;
  auto& row = out.row;
  row.method = method;
  row.fad = fad;
  row.cmr = method == Method::cs_mc ? cmr : 1.0;
  row.seed = seed;

  const auto start = std::chrono::steady_clock::now();
  try {
    const auto& block = truth.block;
    const int rows = static_cast<int>(block.rows());
    const int cols = static_cast<int>(block.cols());
    BlockMatrix estimate;
    if (method == Method::cs_mc) {
      ObservationMask sensed;
      const auto streams = sense_streams(ex, block, fad, row.cmr, seed, sensed);
      auto rep = cs_mc_pipeline(streams, cols, ex.basis, ex.linear, ex.scenario.solver, ex.scenario.cs);
      for (const auto& s : rep.steps) row.traces.push_back(s.objective_trace);
      estimate = std::move(rep.estimate);
      out.mask = std::move(sensed);
    } else {
      const auto mask = sample_mask(rows, cols, fad, derive_seed(seed, kMaskStream, fad));
      MaskedMatrix observed = apply_mask(block, mask);
      add_measurement_noise(observed, ex.scenario.measurement_noise, derive_seed(seed, kNoiseStream, fad));
      if (method == Method::classic_mc) {
        auto rep = classic_mc_stepwise(observed, ex.linear, ex.scenario.solver);
        for (const auto& s : rep.steps) row.traces.push_back(s.objective_trace);
        estimate = std::move(rep.estimate);
      } else {
        auto rep = joint_mc_cs(observed, ex.stacked, ex.basis, ex.scenario.solver);
        row.traces.push_back(rep.objective_trace);
        estimate = std::move(rep.estimate);
      }
      out.mask = mask;
    }
    const auto err = estimate_errors(estimate.data, block.data);
    row.mape_power = err.mape_power;
    row.mape_vmag = err.mape_vmag;
    row.miae_vang = err.miae_vang;
    out.estimate = std::move(estimate);
  } catch (const std::exception& e) {
    row.status = std::string("error: ") + e.what();
    std::replace(row.status.begin(), row.status.end(), ',', ';');
    std::replace(row.status.begin(), row.status.end(), '\n', ' ');
    row.mape_power = row.mape_vmag = row.miae_vang = std::numeric_limits<double>::quiet_NaN();
  }
  row.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

PointResult run_point(const Experiment& ex, Method method, double fad, double cmr, std::uint64_t seed) {
  return run_point(ex, simulate(ex, seed), method, fad, cmr, seed);
}

std::vector<MetricsRow> run_sweep(const Experiment& ex, int workers) {
  struct Point {
    Method method;
    double fad;
    double cmr;
    std::uint64_t seed;
    auto key() const { return std::make_tuple(static_cast<int>(method), fad, cmr, seed); }
  };
  const auto& sc = ex.scenario;
  std::vector<Point> points;
  for (Method m : sc.methods)
    for (double fad : sc.fads)
      for (std::uint64_t seed : sc.seeds) {
        if (m == Method::cs_mc) {
          for (double cmr : sc.cmrs) points.push_back({m, fad, cmr, seed});
        } else {
          points.push_back({m, fad, 1.0, seed});
        }
      }
  std::sort(points.begin(), points.end(), [](const Point& a, const Point& b) { return a.key() < b.key(); });
  points.erase(std::unique(points.begin(), points.end(),
                           [](const Point& a, const Point& b) { return a.key() == b.key(); }),
               points.end());

  // ground truth once per seed
  std::vector<std::uint64_t> seeds(sc.seeds.begin(), sc.seeds.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());
  std::vector<GroundTruth> truths(seeds.size());
  std::vector<std::string> failures(seeds.size());
  const int threads = std::max(1, workers);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    try {
      truths[i] = simulate(ex, seeds[i]);
    } catch (const std::exception& e) {
      failures[i] = e.what();
    }
  }

  std::vector<MetricsRow> rows(points.size());
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const auto s = static_cast<std::size_t>(std::lower_bound(seeds.begin(), seeds.end(), p.seed) - seeds.begin());
    if (!failures[s].empty()) {
      MetricsRow r;
      r.method = p.method;
      r.fad = p.fad;
      r.cmr = p.cmr;
      r.seed = p.seed;
      r.status = "error: ground truth: " + failures[s];
      std::replace(r.status.begin(), r.status.end(), ',', ';');
      r.mape_power = r.mape_vmag = r.miae_vang = std::numeric_limits<double>::quiet_NaN();
      rows[i] = std::move(r);
      continue;
    }
    rows[i] = run_point(ex, truths[s], p.method, p.fad, p.cmr, p.seed).row;
  }
  return rows;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void write_results_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << kResultsHeader << '\n';
  for (const auto& r : rows) {
    out << method_name(r.method) << ',' << format_number(r.fad) << ',' << format_number(r.cmr) << ',' << r.seed
        << ',' << format_number(r.mape_power) << ',' << format_number(r.mape_vmag) << ','
        << format_number(r.miae_vang) << ',' << r.status << ',' << format_number(r.runtime_s) << '\n';
  }
}

std::vector<MetricsRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("results file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kResultsHeader) throw ConfigError("results file: unexpected header '" + line + "'");
  std::vector<MetricsRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    const std::string where = "results file line " + std::to_string(lineno);
    if (f.size() != 9) throw ConfigError(where + ": expected 9 fields");
    MetricsRow r;
    try {
      r.method = parse_method(f[0]);
      r.fad = std::stod(f[1]);
      r.cmr = std::stod(f[2]);
      r.seed = std::stoull(f[3]);
      r.mape_power = std::stod(f[4]);
      r.mape_vmag = std::stod(f[5]);
      r.miae_vang = std::stod(f[6]);
      r.status = f[7];
      r.runtime_s = std::stod(f[8]);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(where + ": malformed number");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_trace_csv(std::ostream& out, const MetricsRow& row) {
  out << "solve,iteration,objective\n";
  for (std::size_t s = 0; s < row.traces.size(); ++s)
    for (std::size_t k = 0; k < row.traces[s].size(); ++k)
      out << s << ',' << k << ',' << format_number(row.traces[s][k]) << '\n';
}

std::vector<AggregateTable> aggregate_by_fad(std::span<const MetricsRow> rows) {
  std::set<std::string> series_set;
  std::set<double> fad_set;
  std::vector<std::string> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    labels[i] = method_name(r.method);
    if (r.method == Method::cs_mc) labels[i] += "@cmr=" + format_number(r.cmr);
    series_set.insert(labels[i]);
    fad_set.insert(r.fad);
  }
  const std::vector<std::string> series(series_set.begin(), series_set.end());
  const std::vector<double> fads(fad_set.begin(), fad_set.end());

  std::vector<AggregateTable> tables;
  for (const char* metric : {"mape_power", "mape_vmag", "miae_vang"}) {
    AggregateTable t;
    t.metric = metric;
    t.series = series;
    t.fads = fads;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fads.size()), static_cast<Eigen::Index>(series.size()));
    Eigen::MatrixXd count = sum;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      if (r.status != "ok") continue;
      const double v = t.metric == "mape_power" ? r.mape_power : t.metric == "mape_vmag" ? r.mape_vmag : r.miae_vang;
      const auto fi = std::lower_bound(fads.begin(), fads.end(), r.fad) - fads.begin();
      const auto si = std::lower_bound(series.begin(), series.end(), labels[i]) - series.begin();
      sum(fi, si) += v;
      count(fi, si) += 1.0;
    }
    t.mean = sum.cwiseQuotient(count);
    for (Eigen::Index a = 0; a < count.rows(); ++a)
      for (Eigen::Index b = 0; b < count.cols(); ++b)
        if (count(a, b) == 0.0) t.mean(a, b) = std::numeric_limits<double>::quiet_NaN();
    tables.push_back(std::move(t));
  }
  return tables;
}

void write_table_csv(std::ostream& out, const AggregateTable& table) {
  out << "fad";
  for (const auto& s : table.series) out << ',' << s;
  out << '\n';
  for (std::size_t i = 0; i < table.fads.size(); ++i) {
    out << format_number(table.fads[i]);
    for (Eigen::Index j = 0; j < table.mean.cols(); ++j) out << ',' << format_number(table.mean(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

}  // namespace dsse
