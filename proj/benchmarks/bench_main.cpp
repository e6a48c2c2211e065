#include <benchmark/benchmark.h>

#include "nvmag/chain.hpp"
#include "nvmag/sensitivity.hpp"

using namespace nvmag;

static void BM_SimulatorPeriod(benchmark::State& state) {
    const auto setup = reference_setup(static_cast<double>(state.range(0)));
    const std::size_t len = frame_length(setup.model.sim.sample_rate, setup.bias.omega_m);
    SensorStream stream(setup.model, setup.bias, FieldFn{}, nullptr);
    std::vector<cplx> out(len);
    for (auto _ : state) {
        stream.next(out);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(len));
}
BENCHMARK(BM_SimulatorPeriod)->Arg(1000000)->Arg(2000000)->Unit(benchmark::kMicrosecond);

static void BM_PipelineFrame(benchmark::State& state) {
    const auto setup = reference_setup(2e6);
    Pipeline p(pipeline_config_for(setup.model, setup.bias), 2e6);
    const double period = setup.bias.period();
    const auto tr = synthesize_reflection(setup.model, setup.bias, FieldFn{}, nullptr, 24 * period);
    auto frames = parse_frames(tr, setup.bias.omega_m);
    frames.erase(frames.begin(), frames.begin() + 8);
    p.calibrate(frames);
    std::size_t k = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(p.process(frames[k++ % frames.size()]));
    }
}
BENCHMARK(BM_PipelineFrame)->Unit(benchmark::kMicrosecond);

static void BM_ColoredNoise(benchmark::State& state) {
    const auto spec = flat_spectrum(-110.0, 0.0, 400e3, NoiseKind::amplitude);
    std::uint64_t seed = 1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(colored_noise(spec, 2e6, 0.1, seed++).samples.data());
    }
}
BENCHMARK(BM_ColoredNoise)->Unit(benchmark::kMillisecond);

static void BM_WelchAsd(benchmark::State& state) {
    std::vector<double> x(20000);
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::sin(0.37 * static_cast<double>(k)) + 1e-3 * static_cast<double>(k % 7);
    for (auto _ : state) benchmark::DoNotOptimize(estimate_asd(x, 2000.0, 1.0).asd.data());
}
BENCHMARK(BM_WelchAsd)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
