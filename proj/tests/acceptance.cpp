// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "dsse/harness.hpp"

using namespace dsse;

namespace {

const std::filesystem::path kFeeder = std::filesystem::path(DSSE_DATA_DIR) / "feeder13.json";

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0.0 && secs > budget_s) {
    o.pass = false;
    o.detail += " [over budget]";
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d (%s): %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt2(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Scenario base_scenario() {
  Scenario sc;
  sc.feeder_path = kFeeder;
  sc.seeds.resize(10);
  std::iota(sc.seeds.begin(), sc.seeds.end(), std::uint64_t{1});
  return sc;
}

std::string series_label(const MetricsRow& r) {
  std::string s = method_name(r.method);
  if (r.method == Method::cs_mc) s += "@cmr=" + format_number(r.cmr);
  return s;
}

bool nonincreasing(const std::vector<double>& trace, double slack) {
  for (std::size_t k = 1; k < trace.size(); ++k)
    if (trace[k] > trace[k - 1] + slack * std::abs(trace[k - 1])) return false;
  return true;
}

}  // namespace

int main() {
  std::printf("threads: %d\n", kernels::available_threads());

  report(1, "low rank", 1.0, [] {
    Scenario sc = base_scenario();
    const Experiment ex(sc);
    double worst = 1.0;
    for (std::uint64_t seed : {1, 2, 3}) worst = std::min(worst, singular_energy(simulate(ex, seed).block.data, 5));
    return Outcome{worst >= 0.99, fmt("min energy in 5 singular values %.6f", worst)};
  });

  report(2, "DCT compactness", 1.0, [] {
    const auto feeder = load_feeder(kFeeder);
    const auto basis = dct_basis(8, 2);
    double worst = 1.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      const auto s = generate_load_profiles(feeder, 8, ProfileParams{}, seed);
      for (Eigen::Index j = 0; j < s.rows(); ++j)
        for (const Eigen::VectorXd x : {Eigen::VectorXd(s.row(j).real().transpose()), Eigen::VectorXd(s.row(j).imag().transpose())})
          if (x.norm() > 0.0) worst = std::min(worst, compactness_ratios(x, basis).first);
    }
    return Outcome{worst >= 0.99, fmt("min r1 at j=2 %.6f", worst)};
  });

  report(3, "CS phase transition", 30.0, [] {
    const int n = 64;
    int ok = 0, total = 0;
    std::string detail;
    for (int k : {1, 2, 4}) {
      const int m = static_cast<int>(std::ceil(4.0 * k * std::log(static_cast<double>(n) / k)));
      int ok_k = 0;
      for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        std::mt19937_64 rng(seed * 7919 + static_cast<std::uint64_t>(k));
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        std::normal_distribution<double> g;
        Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
        for (int i = 0; i < k; ++i) a(idx[static_cast<std::size_t>(i)]) = g(rng);
        CsProblem p;
        p.phi = projection_matrix(m, n, ProjectionKind::gaussian, derive_seed(seed, 0x6373, k)).phi;
        p.basis = Eigen::MatrixXd::Identity(n, n);
        p.h = p.phi * a;
        const auto r = solve_l1(p);
        if ((r.coefficients - a).norm() <= 1e-3 * a.norm()) ++ok_k;
      }
      ok += ok_k;
      total += 50;
      detail += "K=" + std::to_string(k) + " M=" + std::to_string(m) + " " + std::to_string(ok_k) + "/50; ";
    }
    const double frac = static_cast<double>(ok) / total;
    return Outcome{frac >= 0.9, detail + fmt("overall %.3f", frac)};
  });

  report(4, "MC exact recovery", 30.0, [] {
    std::vector<double> errs, ident;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> g;
      Eigen::MatrixXd a(5, 2), b(2, 36);
      for (auto& x : a.reshaped()) x = g(rng);
      for (auto& x : b.reshaped()) x = g(rng);
      const Eigen::MatrixXd m = a * b;
      const auto mask = sample_mask(5, 36, 0.5, seed);
      SolverConfig cfg;
      cfg.nu = 0.0;
      cfg.lambda2 = 0.0;
      cfg.rank = 2;
      cfg.lambda1 = 1e4;
      cfg.outer_iterations = 500;
      const auto est = factorized_completion(apply_mask(BlockMatrix{m, 1}, mask), nullptr, nullptr, cfg).estimate.data;
      errs.push_back((est - m).norm() / m.norm());
      // columns with fewer than rank observations are not identifiable from the mask
      double num = 0.0, den = 0.0;
      for (int j = 0; j < 36; ++j) {
        int seen = 0;
        for (int i = 0; i < 5; ++i) seen += mask.contains(i, j);
        if (seen < 2) continue;
        num += (est.col(j) - m.col(j)).squaredNorm();
        den += m.col(j).squaredNorm();
      }
      ident.push_back(std::sqrt(num / den));
    }
    const auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double med = median(errs);
    return Outcome{med <= 1e-2, fmt2("median relative error %.4g (identifiable columns only: %.4g)", med, median(ident))};
  });

  // Criteria 5-9 share one paired sweep.
  Scenario sc = base_scenario();
  const Experiment ex(sc);
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = run_sweep(ex, kernels::available_threads());
  const double sweep_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("sweep: %zu rows in %.1fs\n", rows.size(), sweep_s);

  std::map<std::string, std::map<double, std::vector<const MetricsRow*>>> by_series;
  int failed_rows = 0;
  for (const auto& r : rows) {
    if (r.status != "ok") ++failed_rows;
    by_series[series_label(r)][r.fad].push_back(&r);
  }
  const auto mean_of = [&](const std::string& series, double fad, double MetricsRow::*field) {
    double s = 0.0;
    const auto& v = by_series.at(series).at(fad);
    for (const auto* r : v) s += r->*field;
    return s / static_cast<double>(v.size());
  };
  const auto runtime_of = [&](const std::function<bool(const MetricsRow&)>& pick) {
    double s = 0.0;
    for (const auto& r : rows)
      if (pick(r)) s += r.runtime_s;
    return s;
  };

  report(5, "paired superiority at FAD 0.1", 0.0, [&] {
    const double j = mean_of("joint_mc_cs", 0.1, &MetricsRow::mape_vmag);
    const double c = mean_of("classic_mc", 0.1, &MetricsRow::mape_vmag);
    const double rt = runtime_of([](const MetricsRow& r) { return r.fad == 0.1 && r.method != Method::cs_mc; });
    Outcome o{failed_rows == 0 && j <= 0.5 * c && rt < 600.0,
              fmt2("joint %.4g%% vs classic %.4g%%", j, c) + fmt(", reduction %.1f%%", 100.0 * (1.0 - j / c)) +
                  fmt(", solve time %.1fs", rt)};
    if (failed_rows) o.detail += ", " + std::to_string(failed_rows) + " failed rows";
    return o;
  });

  report(6, "FAD monotonicity", 0.0, [&] {
    bool ok = sweep_s < 1200.0;
    std::string detail;
    for (const auto& [series, per_fad] : by_series) {
      double prev_v = INFINITY, prev_a = INFINITY;
      bool mono = true;
      for (const auto& [fad, _] : per_fad) {
        const double v = mean_of(series, fad, &MetricsRow::mape_vmag);
        const double a = mean_of(series, fad, &MetricsRow::miae_vang);
        if (v > prev_v || a > prev_a) mono = false;
        prev_v = v;
        prev_a = a;
      }
      ok = ok && mono;
      detail += series + (mono ? " ok; " : " NOT monotone; ");
    }
    return Outcome{ok, detail + fmt("sweep %.1fs", sweep_s)};
  });

  report(7, "CMR ordering", 0.0, [&] {
    bool ok = true;
    std::string detail;
    for (double fad : sc.fads) {
      const double hi = mean_of("cs_mc@cmr=0.8", fad, &MetricsRow::mape_vmag);
      const double lo = mean_of("cs_mc@cmr=0.4", fad, &MetricsRow::mape_vmag);
      ok = ok && hi <= lo;
      detail += fmt("fad %.1f: ", fad) + fmt2("%.4g <= %.4g; ", hi, lo);
    }
    const double rt = runtime_of([](const MetricsRow& r) { return r.method == Method::cs_mc; });
    return Outcome{ok && rt < 600.0, detail + fmt("solve time %.1fs", rt)};
  });

  report(8, "joint beats the two-stage pipeline", 0.0, [&] {
    const double j = mean_of("joint_mc_cs", 0.3, &MetricsRow::mape_vmag);
    const double p = mean_of("cs_mc@cmr=0.8", 0.3, &MetricsRow::mape_vmag);
    return Outcome{j <= p, fmt2("joint %.4g%% vs cs_mc %.4g%% at FAD 0.3, CMR 0.8", j, p)};
  });

  report(9, "descent", 0.0, [&] {
    int runs = 0, bad = 0;
    for (const auto& r : rows) {
      if (r.method != Method::joint_mc_cs) continue;
      for (const auto& t : r.traces) {
        ++runs;
        if (!nonincreasing(t, 1e-6)) ++bad;
      }
    }
    return Outcome{runs > 0 && bad == 0, std::to_string(bad) + " of " + std::to_string(runs) + " traces increase"};
  });

  report(10, "linearization fidelity", 0.0, [] {
    const auto feeder = load_feeder(kFeeder);
    const auto net = build_network_matrices(feeder);
    const auto lin = build_linear_model(net);
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    double worst = 0.0;
    for (int draw = 0; draw < 100; ++draw) {
      Eigen::VectorXcd s(lin.node_count());
      for (auto& x : s) x = {u(rng), u(rng)};
      worst = std::max(worst, (lin.predict_voltage(s) - solve_powerflow(net, s).v).cwiseAbs().maxCoeff());
    }
    return Outcome{worst <= 5e-3, fmt("max |v_linear - v_fixedpoint| %.3g pu", worst)};
  });

  report(11, "full observability", 0.0, [&] {
    double worst = 0.0;
    for (std::uint64_t seed : sc.seeds) {
      const auto r = run_point(ex, Method::classic_mc, 1.0, 1.0, seed);
      if (r.row.status != "ok") return Outcome{false, "seed " + std::to_string(seed) + ": " + r.row.status};
      worst = std::max(worst, r.row.mape_vmag);
    }
    return Outcome{worst <= 0.5, fmt("max mape_vmag %.4g%% over 10 seeds", worst)};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
