// Controller setup and warm-started solve times over the prediction horizon.
//   ./bench_solver --benchmark_filter=Solve

#include <map>
#include <memory>
#include <vector>

#include <benchmark/benchmark.h>

#include "ddpc/loop.hpp"

using namespace ddpc;

namespace {

struct Fixture {
    TrainedModels models;
    std::vector<PastBuffer> pasts; // consecutive windows of the excitation record
};

const Fixture& fixture(Index tau_f) {
    static std::map<Index, std::unique_ptr<Fixture>> cache;
    auto& slot = cache[tau_f];
    if (!slot) {
        TrainingConfig cfg;
        cfg.tpc.tau_f = tau_f;
        cfg.deepc.tau_f = tau_f;
        ExcitationConfig ex;
        ex.noise_std = 0.01;
        slot = std::make_unique<Fixture>();
        slot->models = excite_and_fit(build_plant(benchmark_plant_spec(-0.002)), ex, cfg);

        const Trajectory& u = slot->models.data->u;
        const Trajectory& y = slot->models.data->y;
        const Index tau_p = std::max(cfg.tpc.tau_p, cfg.deepc.tau_p);
        for (Index t0 = u.length() - tau_p - 64; t0 < u.length() - tau_p; ++t0) {
            PastBuffer b(3, 3, tau_p);
            for (Index k = 0; k < tau_p; ++k) b.push(y.sample(t0 + k), u.sample(t0 + k));
            slot->pasts.push_back(std::move(b));
        }
    }
    return *slot;
}

// the buffers hold the longest past; each controller reads the most recent tau_p of it
PastBuffer trimmed(const PastBuffer& full, Index tau_p) {
    PastBuffer b(3, 3, tau_p);
    const Eigen::VectorXd z = full.z_p();
    for (Index k = full.tau_p() - tau_p; k < full.tau_p(); ++k) b.push(z.segment(6 * k, 3), z.segment(6 * k + 3, 3));
    return b;
}

void setup_bench(benchmark::State& state, ControllerKind kind) {
    const Fixture& f = fixture(state.range(0));
    const ControllerSettings settings;
    for (auto _ : state) {
        Controller c = make_controller(kind, f.models, settings);
        benchmark::DoNotOptimize(c.problem());
    }
}

void solve_bench(benchmark::State& state, ControllerKind kind) {
    const Fixture& f = fixture(state.range(0));
    Controller c = make_controller(kind, f.models, ControllerSettings{});
    std::vector<PastBuffer> pasts;
    for (const auto& b : f.pasts) pasts.push_back(trimmed(b, c.tau_p()));
    std::size_t i = 0;
    long iterations = 0;
    for (auto _ : state) {
        StepInfo info;
        benchmark::DoNotOptimize(c.plan(pasts[i++ % pasts.size()], &info));
        iterations += info.iterations;
    }
    state.counters["admm_iters"] = benchmark::Counter(static_cast<double>(iterations), benchmark::Counter::kAvgIterations);
    state.counters["n_dec"] = static_cast<double>(c.problem()->n_dec);
}

void BM_TpcSetup(benchmark::State& s) { setup_bench(s, ControllerKind::TPC); }
void BM_DeepcSetup(benchmark::State& s) { setup_bench(s, ControllerKind::DeePC); }
void BM_TpcSolve(benchmark::State& s) { solve_bench(s, ControllerKind::TPC); }
void BM_DeepcSolve(benchmark::State& s) { solve_bench(s, ControllerKind::DeePC); }

} // namespace

BENCHMARK(BM_TpcSetup)->Arg(20)->Arg(40)->Arg(60)->Arg(80)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeepcSetup)->Arg(20)->Arg(40)->Arg(60)->Arg(80)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TpcSolve)->Arg(20)->Arg(40)->Arg(60)->Arg(80)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DeepcSolve)->Arg(20)->Arg(40)->Arg(60)->Arg(80)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
