// Serial reference vs OpenMP kernels, and a whole joint solve under each.
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include "dsse/harness.hpp"
#include "dsse/kernels.hpp"

using namespace dsse;
using kernels::Execution;

namespace {

double time_ms(int reps, const std::function<void()>& f) {
  f();  // warm-up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
}

kernels::SparseRows random_rows(Eigen::Index rows, Eigen::Index cols, int per_row, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, cols - 1);
  std::normal_distribution<double> g;
  std::vector<Eigen::Triplet<double>> e;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int k = 0; k < per_row; ++k) e.emplace_back(i, pick(rng), g(rng));
  kernels::SparseRows L(rows, cols);
  L.setFromTriplets(e.begin(), e.end());
  return L;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-28s %10.3f %10.3f %8.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  const int scale = argc > 1 ? std::atoi(argv[1]) : 1;
  const Eigen::Index m = 40 * scale, n = 33 * scale, r = 5;
  const auto L = random_rows(3 * m * n / 2, m * n, 8, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  Eigen::MatrixXd U(m, r), V(r, n);
  for (auto& x : U.reshaped()) x = g(rng);
  for (auto& x : V.reshaped()) x = g(rng);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(U * V).data(), m * n);
  const Eigen::VectorXd target = Eigen::VectorXd::Random(L.rows());

  std::printf("threads %d, X %ld x %ld, rank %ld, %ld operator rows\n", kernels::available_threads(),
              static_cast<long>(m), static_cast<long>(n), static_cast<long>(r), static_cast<long>(L.rows()));
  std::printf("%-28s %10s %10s %9s\n", "kernel (ms)", "serial", "parallel", "speedup");

  const int reps = 20;
  for (auto [name, exec_fn] : std::vector<std::pair<const char*, std::function<void(Execution)>>>{
           {"lift_left_factor", [&](Execution e) { kernels::lift_left_factor(L, V, m, e); }},
           {"lift_right_factor", [&](Execution e) { kernels::lift_right_factor(L, U, e); }},
           {"residual", [&](Execution e) { kernels::residual(L, x, target, e); }},
       }) {
    row(name, time_ms(reps, [&] { exec_fn(Execution::serial); }), time_ms(reps, [&] { exec_fn(Execution::parallel); }));
  }
  const auto G = kernels::lift_left_factor(L, V, m);
  const Eigen::MatrixXd H0 = Eigen::MatrixXd::Identity(G.cols(), G.cols());
  const Eigen::VectorXd b0 = Eigen::VectorXd::Zero(G.cols());
  const auto normal = [&](Execution e) {
    Eigen::MatrixXd H = H0;
    Eigen::VectorXd b = b0;
    kernels::accumulate_normal_equations(G, target, 2.0, H, b, e);
  };
  row("accumulate_normal_equations", time_ms(reps, [&] { normal(Execution::serial); }),
      time_ms(reps, [&] { normal(Execution::parallel); }));

  Scenario sc;
  sc.feeder_path = std::filesystem::path(DSSE_DATA_DIR) / "feeder13.json";
  const Experiment ex(sc);
  const auto truth = simulate(ex, 1);
  const auto observed = apply_mask(truth.block, sample_mask(static_cast<int>(truth.block.rows()), 33, 0.3, 1));
  const auto solve = [&](Execution e) {
    SolverConfig cfg = sc.solver;
    cfg.execution = e;
    cfg.outer_iterations = 10;
    joint_mc_cs(observed, ex.stacked, ex.basis, cfg);
  };
  row("joint_mc_cs (10 outer)", time_ms(2, [&] { solve(Execution::serial); }),
      time_ms(2, [&] { solve(Execution::parallel); }));
}
