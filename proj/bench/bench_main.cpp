// Serial reference vs OpenMP kernels. Arg 0 runs the serial path, 1 the
// parallel one; thread count follows OMP_NUM_THREADS.

#include "ucsbi/config.hpp"
#include "ucsbi/diagnostics.hpp"
#include "ucsbi/flows.hpp"
#include "ucsbi/simfarm.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <filesystem>
#include <random>

using namespace ucsbi;

namespace {

FlowModel bench_model(int hidden) {
  FlowSpec s;
  s.theta_dim = 3;
  s.context_dim = 120;  // desk fleet: 4 units x 24 steps of g plus 24 of demand
  s.hidden_units = hidden;
  FlowModel m = FlowModel::create(s, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 0.05);
  for (Eigen::Index i = 0; i < m.params().size(); ++i) m.params().values()(i) = n(rng);
  m.theta_standardizer = Standardizer::identity(3);
  m.context_standardizer = Standardizer::identity(120);
  return m;
}

void BM_BatchGradient(benchmark::State& st) {
  const bool parallel = st.range(0) != 0;
  const FlowModel m = bench_model(static_cast<int>(st.range(1)));
  const Mat u = Mat::Random(256, 3), c = Mat::Random(256, 120);
  Vec g;
  for (auto _ : st) benchmark::DoNotOptimize(nll_and_grad_std(m, u, c, g, parallel));
  st.SetItemsProcessed(st.iterations() * 256);
  st.counters["threads"] = parallel ? omp_get_max_threads() : 1;
}
BENCHMARK(BM_BatchGradient)->ArgsProduct({{0, 1}, {64, 256}})->Unit(benchmark::kMillisecond);

void BM_Coverage(benchmark::State& st) {
  const bool parallel = st.range(0) != 0;
  const FlowModel m = bench_model(64);
  const FlowDensity q(m);
  const Mat th = Mat::Random(32, 3), ctx = Mat::Random(32, 120);
  for (auto _ : st) benchmark::DoNotOptimize(expected_coverage(q, th, ctx, credibility_levels(19), 256, 7, parallel));
  st.SetItemsProcessed(st.iterations() * 32);
}
BENCHMARK(BM_Coverage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Simfarm(benchmark::State& st) {
  RunConfig cfg = load_run_config(std::string(UCSBI_SOURCE_DIR) + "/config/tiny.json");
  const auto backend = make_backend(cfg.backend);
  GenerateOptions opts;
  opts.workers = st.range(0) == 0 ? 1 : 0;
  const std::string path = (std::filesystem::temp_directory_path() / "ucsbi-bench.jsonl").string();
  for (auto _ : st) benchmark::DoNotOptimize(generate_dataset(cfg, 64, 3, *backend, path, opts));
  std::filesystem::remove(path);
  std::filesystem::remove(manifest_path(path));
  st.SetItemsProcessed(st.iterations() * 64);
}
BENCHMARK(BM_Simfarm)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
