#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dsse/errors.hpp"
#include "dsse/harness.hpp"

namespace fs = std::filesystem;
using namespace dsse;

namespace {

// Exit codes. CLI11 keeps its own (nonzero) codes for usage errors.
enum Exit : int { ok = 0, config_error = 2, topology_error = 3, solve_error = 4, io_error = 5 };

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::ios_base::failure("cannot create " + dir.string() + ": " + ec.message());
}

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string method = "joint_mc_cs";
  std::optional<double> fad;
  double cmr = 1.0;
  int workers = 1;
  bool dump_trace = false;
  std::string results;
};

int cmd_simulate(const Options& o) {
  const Experiment ex(load_scenario(o.config));
  const std::uint64_t seed = o.seed.value_or(ex.scenario.seeds.front());
  const auto truth = simulate(ex, seed);
  const auto nodes = ex.feeder.load_nodes();
  if (o.out.empty()) {
    write_measurements_csv(std::cout, truth.block, nodes);
  } else {
    ensure_dir(o.out);
    auto f = open_out(fs::path(o.out) / "truth.csv");
    write_measurements_csv(f, truth.block, nodes);
    std::cerr << "wrote " << (fs::path(o.out) / "truth.csv").string() << '\n';
  }
  return ok;
}

int cmd_estimate(const Options& o) {
  const Experiment ex(load_scenario(o.config));
  const std::uint64_t seed = o.seed.value_or(ex.scenario.seeds.front());
  const double fad = o.fad.value_or(ex.scenario.fads.front());
  const Method method = parse_method(o.method);
  const auto res = run_point(ex, method, fad, o.cmr, seed);

  const MetricsRow rows[] = {res.row};
  write_results_csv(std::cout, rows);
  if (!o.out.empty()) {
    const fs::path dir(o.out);
    ensure_dir(dir);
    if (res.estimate) {
      auto f = open_out(dir / "estimate.csv");
      write_measurements_csv(f, *res.estimate, ex.feeder.load_nodes());
    }
    if (res.mask) {
      auto f = open_out(dir / "mask.csv");
      write_mask_csv(f, *res.mask);
    }
    if (o.dump_trace) {
      auto f = open_out(dir / "trace.csv");
      write_trace_csv(f, res.row);
    }
  } else if (o.dump_trace) {
    write_trace_csv(std::cerr, res.row);
  }
  if (res.row.status != "ok") {
    std::cerr << "estimate failed: " << res.row.status << '\n';
    return solve_error;
  }
  return ok;
}

int cmd_sweep(const Options& o) {
  auto scenario = load_scenario(o.config);
  if (o.seed) scenario.seeds = {*o.seed};
  if (o.fad) scenario.fads = {*o.fad};
  if (o.method != "all") scenario.methods = {parse_method(o.method)};
  scenario.validate();
  const Experiment ex(scenario);
  const auto rows = run_sweep(ex, o.workers);

  const fs::path dir(o.out);
  ensure_dir(dir);
  {
    auto f = open_out(dir / "results.csv");
    write_results_csv(f, rows);
  }
  if (o.dump_trace) {
    ensure_dir(dir / "traces");
    for (const auto& r : rows) {
      const std::string name = std::string(method_name(r.method)) + "_fad" + format_number(r.fad) + "_cmr" +
                               format_number(r.cmr) + "_seed" + std::to_string(r.seed) + ".csv";
      auto f = open_out(dir / "traces" / name);
      write_trace_csv(f, r);
    }
  }
  int failed = 0;
  for (const auto& r : rows) failed += r.status != "ok";
  std::cerr << rows.size() << " rows, " << failed << " failed; wrote " << (dir / "results.csv").string() << '\n';
  return ok;
}

int cmd_report(const Options& o) {
  std::ifstream in(o.results);
  if (!in) throw std::ios_base::failure("cannot open " + o.results);
  const auto rows = read_results_csv(in);
  if (rows.empty()) throw ConfigError("results file has no data rows");
  const auto tables = aggregate_by_fad(rows);
  if (!o.out.empty()) ensure_dir(o.out);
  for (const auto& t : tables) {
    if (o.out.empty()) {
      std::cout << "# mean " << t.metric << " by fad\n";
      write_table_csv(std::cout, t);
      std::cout << '\n';
    } else {
      auto f = open_out(fs::path(o.out) / ("table_" + t.metric + ".csv"));
      write_table_csv(f, t);
    }
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distribution-system state estimation by matrix completion and compressive sensing"};
  app.require_subcommand(1);
  Options o;

  auto* sim = app.add_subcommand("simulate", "Nonlinear power-flow ground truth for one seed");
  sim->add_option("--config", o.config, "Scenario file")->required()->check(CLI::ExistingFile);
  sim->add_option("--out", o.out, "Output directory (default: stdout)");
  sim->add_option("--seed", o.seed, "Seed (default: first scenario seed)");

  auto* est = app.add_subcommand("estimate", "Run one (method, fad, cmr, seed) instance");
  est->add_option("--config", o.config, "Scenario file")->required()->check(CLI::ExistingFile);
  est->add_option("--out", o.out, "Directory for estimate.csv, mask.csv, trace.csv");
  est->add_option("--seed", o.seed, "Seed (default: first scenario seed)");
  est->add_option("--method", o.method, "classic_mc | joint_mc_cs | cs_mc")->capture_default_str();
  est->add_option("--fad", o.fad, "Fraction of available data (default: first scenario fad)");
  est->add_option("--cmr", o.cmr, "Compression ratio for cs_mc")->capture_default_str();
  est->add_flag("--dump-trace", o.dump_trace, "Write the objective trace");

  auto* sweep = app.add_subcommand("sweep", "Run the scenario grid and write results.csv");
  sweep->add_option("--config", o.config, "Scenario file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", o.out, "Output directory")->required();
  sweep->add_option("--seed", o.seed, "Restrict to one seed");
  sweep->add_option("--method", o.method, "Restrict to one method");
  sweep->add_option("--fad", o.fad, "Restrict to one fad");
  sweep->add_option("--workers", o.workers, "Concurrent sweep points")->check(CLI::PositiveNumber);
  sweep->add_flag("--dump-trace", o.dump_trace, "Write per-row objective traces");

  auto* rep = app.add_subcommand("report", "Mean error vs FAD per method from results.csv");
  rep->add_option("results", o.results, "results.csv")->required();
  rep->add_option("--out", o.out, "Directory for table_<metric>.csv (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  if (sweep->parsed() && sweep->count("--method") == 0) o.method = "all";

  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (est->parsed()) return cmd_estimate(o);
    if (sweep->parsed()) return cmd_sweep(o);
    return cmd_report(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const TopologyError& e) {
    std::cerr << "feeder error: " << e.what() << '\n';
    return topology_error;
  } catch (const DegenerateNetworkError& e) {
    std::cerr << "feeder error: " << e.what() << '\n';
    return topology_error;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return io_error;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return solve_error;
  }
}
