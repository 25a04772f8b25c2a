// Serial (threads = 1) against OpenMP runs of the parallel kernels.
// Thread count is the benchmark argument.

#include <benchmark/benchmark.h>

#include "gridbd/backdoor.hpp"
#include "gridbd/experiment.hpp"
#include "gridbd/fault.hpp"
#include "gridbd/parallel.hpp"

using namespace gridbd;

namespace {

const GridModel& grid() {
    static const GridModel g = load_grid(std::string(GRIDBD_DATA_DIR) + "/grid14.json");
    return g;
}

const Dataset& dataset() {
    static const Dataset ds = [] {
        GenerationConfig cfg;
        cfg.sample_count = 400;
        return generate_dataset(grid(), cfg, 3);
    }();
    return ds;
}

void thread_args(benchmark::internal::Benchmark* b) {
    b->Arg(1);
    if (available_threads() > 1) b->Arg(available_threads());
    b->Unit(benchmark::kMillisecond)->UseRealTime();
}

void BM_generate_dataset(benchmark::State& state) {
    GenerationConfig cfg;
    cfg.sample_count = 400;
    for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(grid(), cfg, 3, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_generate_dataset)->Apply(thread_args);

void BM_measurement_poisoning(benchmark::State& state) {
    MeasurementPoisonContext ctx;
    ctx.grid = &grid();
    ctx.constraints.limits = grid().limits;
    const auto plan = make_poison_plan(dataset(), 0.1, Trigger::at(dataset().feature_dim, {3}, 50.0, 0),
                                       ThreatModel::measurement_level, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(poison_dataset(dataset(), plan, &ctx, static_cast<int>(state.range(0))));
    }
}
BENCHMARK(BM_measurement_poisoning)->Apply(thread_args);

void BM_sweep(benchmark::State& state) {
    ExperimentConfig c;
    c.values = {0.0, 0.05, 0.1};
    c.models = {ModelKind::fcnn, ModelKind::msvm};
    c.trials = 4;
    c.train.epochs = 10;
    for (auto _ : state) {
        benchmark::DoNotOptimize(run_sweep(dataset(), c, &grid(), static_cast<int>(state.range(0))));
    }
}
BENCHMARK(BM_sweep)->Apply(thread_args);

}  // namespace

BENCHMARK_MAIN();
