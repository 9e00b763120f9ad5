// Serial vs OpenMP timings for the n x n kernels.
//   bench_kernels [--n 2000] [--reps 5]

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

#include <CLI11.hpp>

#include "uvdro/kernels.hpp"

using namespace uvdro;
namespace k = uvdro::kernels;

namespace {

double best_ms(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    best = std::min(best, ms);
  }
  return best;
}

void row(const char* name, double serial, double parallel) {
  std::printf("%-24s %10.2f %10.2f %8.2fx\n", name, serial, parallel, serial / parallel);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark"};
  Index n = 2000;
  int reps = 5;
  app.add_option("--n", n, "Examples")->check(CLI::Range(2, 10000));
  app.add_option("--reps", reps, "Repetitions (best is reported)")->check(CLI::Range(1, 1000));
  CLI11_PARSE(app, argc, argv);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix x(n, 64);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
  std::vector<Matrix> unit(static_cast<std::size_t>(n), Matrix(3, 16));
  for (auto& m : unit) {
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    m.rowwise().normalize();
  }
  Matrix cost(n, n), out(n, n);
  k::serial::pairwise_euclidean(x, cost);
  Matrix transport = Matrix::Zero(n, n);
  for (Index i = 0; i < transport.size(); ++i) transport.data()[i] = 0.01 * u(rng);
  transport.diagonal().setZero();
  Vector w(n), flow(n);
  for (Index i = 0; i < n; ++i) w[i] = u(rng) / static_cast<double>(n);
  k::TransportStepParams p{5.0, 1.0 / static_cast<double>(n), 1e-3, 1e-8};

  std::printf("n = %lld, threads = %d, best of %d (ms)\n", static_cast<long long>(n), k::max_threads(), reps);
  std::printf("%-24s %10s %10s %9s\n", "kernel", "serial", "parallel", "speedup");
  row("pairwise_euclidean", best_ms(reps, [&] { k::serial::pairwise_euclidean(x, out); }),
      best_ms(reps, [&] { k::parallel::pairwise_euclidean(x, out); }));
  row("mean_cosine_distance", best_ms(reps, [&] { k::serial::mean_cosine_distance(unit, out); }),
      best_ms(reps, [&] { k::parallel::mean_cosine_distance(unit, out); }));
  row("net_flow", best_ms(reps, [&] { k::serial::net_flow(transport, flow); }),
      best_ms(reps, [&] { k::parallel::net_flow(transport, flow); }));
  volatile double sink = 0.0;
  row("transport_cost", best_ms(reps, [&] { sink = k::serial::transport_cost(cost, transport); }),
      best_ms(reps, [&] { sink = k::parallel::transport_cost(cost, transport); }));
  Matrix b1 = transport, a1 = Matrix::Zero(n, n), b2 = transport, a2 = Matrix::Zero(n, n);
  row("transport_adagrad_step",
      best_ms(reps, [&] { k::serial::transport_adagrad_step(b1, a1, cost, w, p, flow); }),
      best_ms(reps, [&] { k::parallel::transport_adagrad_step(b2, a2, cost, w, p, flow); }));
  (void)sink;
  return 0;
}
