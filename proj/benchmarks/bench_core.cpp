#include <benchmark/benchmark.h>

#include "geopt/born_machine.hpp"
#include "geopt/portfolio.hpp"
#include "geopt/qp.hpp"
#include "geopt/rng.hpp"
#include "geopt/surrogate.hpp"

namespace {

geopt::BitstringDataset skewed_dataset(int n_vars, int rows) {
  geopt::Rng rng(7);
  geopt::BitstringDataset data;
  data.n_vars = n_vars;
  data.rows.reserve(static_cast<std::size_t>(rows));
  for (int k = 0; k < rows; ++k) {
    geopt::Bitstring row(static_cast<std::size_t>(n_vars));
    for (int i = 0; i < n_vars; ++i)
      row[static_cast<std::size_t>(i)] = rng.next_double() < (i % 2 ? 0.3 : 0.7);
    data.rows.push_back(std::move(row));
  }
  return data;
}

void BM_TrainSweep(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto data = skewed_dataset(n, 2000);
  geopt::TrainConfig cfg;
  cfg.n_sweeps = 1;
  cfg.max_bond_dim = 8;
  for (auto _ : state) {
    auto report = geopt::train(geopt::init_mps(n, 2, 1), data, cfg);
    benchmark::DoNotOptimize(report.model.sites.front()[0](0, 0));
  }
}
BENCHMARK(BM_TrainSweep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Sample(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto model = geopt::init_mps(n, 8, 3);
  for (auto _ : state) {
    auto draws = geopt::sample(model, 1000, 11);
    benchmark::DoNotOptimize(draws.front().front());
  }
}
BENCHMARK(BM_Sample)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_InnerQp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto instance = geopt::generate_synthetic_instance(n, n / 2, 5);
  geopt::Rng rng(13);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (auto _ : state) {
    state.PauseTiming();
    rng.shuffle(idx);
    std::vector<int> chosen(idx.begin(), idx.begin() + n / 2);
    auto sel = geopt::selection_from_indices(n, chosen);
    state.ResumeTiming();
    auto cand = geopt::solve_inner_qp(instance, sel);
    benchmark::DoNotOptimize(cand.cost);
  }
}
BENCHMARK(BM_InnerQp)->Arg(20)->Arg(50)->Unit(benchmark::kMicrosecond);

void BM_SoftmaxBuild(benchmark::State& state) {
  geopt::Rng rng(3);
  std::vector<geopt::Selection> support;
  std::vector<double> costs;
  for (int k = 0; k < 2000; ++k) {
    geopt::Bitstring bits(30);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng.next_below(2));
    support.push_back({std::move(bits)});
    costs.push_back(rng.next_uniform(0.0, 1.0));
  }
  for (auto _ : state) {
    auto s = geopt::build_softmax(support, costs, 0.05);
    benchmark::DoNotOptimize(s.probabilities.back());
  }
}
BENCHMARK(BM_SoftmaxBuild)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
