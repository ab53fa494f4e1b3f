#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "hjflow/flow.hpp"
#include "hjflow/lightcone.hpp"
#include "hjflow/planewave.hpp"
#include "hjflow/system.hpp"

using namespace hjflow;

namespace {

std::string data(const char* name) { return std::string(HJFLOW_DATA_DIR) + "/" + name; }

const char* kHamiltonian = "-((p_x1 + e*a*cos(k*xm))^2 + p_x2^2 + m^2) / (2*p_xp)";

planewave::ModelParams cosine_model() {
  planewave::ModelParams p;
  p.potential[0] = planewave::PotentialSpec::cosine(0.3, 1.0);
  return p;
}

void BM_Parse(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(parse(kHamiltonian));
}
BENCHMARK(BM_Parse);

void BM_Differentiate(benchmark::State& state) {
  const Expr h = parse(kHamiltonian);
  for (auto _ : state) benchmark::DoNotOptimize(differentiate(h, "xm"));
}
BENCHMARK(BM_Differentiate);

void BM_CompiledEvaluate(benchmark::State& state) {
  const std::vector<std::string> slots{"p_x1", "p_x2", "p_xp", "xm", "e", "a", "k", "m"};
  const CompiledExpr f(parse(kHamiltonian), slots);
  const std::vector<double> values{0.2, 0.1, -1.0, 0.5, 1.0, 0.3, 1.0, 1.0};
  for (auto _ : state) benchmark::DoNotOptimize(f(values));
}
BENCHMARK(BM_CompiledEvaluate);

void BM_IntegrabilityMatrix(benchmark::State& state) {
  const auto sys = load_system_file(data("planewave.json"));
  for (auto _ : state) benchmark::DoNotOptimize(integrability_matrix(sys));
}
BENCHMARK(BM_IntegrabilityMatrix)->Unit(benchmark::kMillisecond);

void BM_Integrate(benchmark::State& state) {
  const auto sys = load_system_file(data("planewave.json"));
  const auto init = load_initial_state(sys, read_json_file(data("initial_planewave.json"))).point;
  const auto path = make_path(sys, {{0.0, 0.0}, {0.0, 10.0}});
  const auto steps = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(integrate(sys, init, path, steps));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Integrate)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_SplitStep(benchmark::State& state) {
  const lightcone::GridSpec grid{1, static_cast<std::size_t>(state.range(0)), 40.0};
  const auto wave = lightcone::init_gaussian(grid, {{0.0}, {1.0}, {0.3}}, -1.0);
  const auto model = cosine_model();
  for (auto _ : state) benchmark::DoNotOptimize(lightcone::evolve_splitstep(wave, model, 0.0, 1.0, 100));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_SplitStep)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_SplitStep2d(benchmark::State& state) {
  const lightcone::GridSpec grid{2, 64, 40.0};
  const auto wave = lightcone::init_gaussian(grid, {{0.0, 0.0}, {3.0, 3.0}, {0.3, 0.0}}, -1.0);
  const auto model = cosine_model();
  lightcone::EvolveOptions opts;
  opts.threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lightcone::evolve_splitstep(wave, model, 0.0, 1.0, 100, opts));
}
BENCHMARK(BM_SplitStep2d)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_SlicedKernel(benchmark::State& state) {
  const lightcone::GridSpec grid{1, static_cast<std::size_t>(state.range(0)), 40.0};
  const auto model = cosine_model();
  for (auto _ : state) benchmark::DoNotOptimize(lightcone::sliced_kernel(model, 0.0, 1.0, 8, grid));
}
BENCHMARK(BM_SlicedKernel)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
