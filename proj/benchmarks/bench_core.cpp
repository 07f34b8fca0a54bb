// Latency benchmarks for the kernels behind the speculative pipeline: the
// fast DL path, the slow GLRT path, and their shared building blocks.
#include <benchmark/benchmark.h>

#include "specarray/attacks.hpp"
#include "specarray/glrt.hpp"
#include "specarray/neural.hpp"
#include "specarray/rng.hpp"
#include "specarray/signal_model.hpp"
#include "specarray/spatial_stats.hpp"

using namespace specarray;

namespace {

ReceivedArray detection_example(std::uint64_t seed) {
    Rng rng(seed);
    return synthesize_detection_example(ArrayConfig{}, SynthesisParams{}, 1, rng);
}

ReceivedArray doa_example(std::uint64_t seed) {
    SynthesisParams params;
    params.snapshots = 1500;
    params.onset_min = 1;
    params.onset_max = 1499;
    Rng rng(seed);
    return synthesize_doa_example(ArrayConfig{}, params, 12.0, rng);
}

void bm_detection_cnn_infer(benchmark::State& state) {
    Network net = build_detection_network({8, 500, 2}, 2, 7);
    const RealTensor x = to_real_tensor(detection_example(11).samples);
    for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
}
BENCHMARK(bm_detection_cnn_infer)->Unit(benchmark::kMillisecond);

void bm_detection_glrt(benchmark::State& state) {
    const ReceivedArray z = detection_example(11);
    GlrtDetectionConfig cfg;
    cfg.gamma_t = 8.5;
    for (auto _ : state) benchmark::DoNotOptimize(glrt_detect(z, cfg));
}
BENCHMARK(bm_detection_glrt)->Unit(benchmark::kMillisecond);

void bm_doa_cnn_infer(benchmark::State& state) {
    Network net = build_doa_network({8, 16, 2}, 61, 7);
    const RealTensor x = covariance_input(doa_example(13), 750, 1e-6);
    for (auto _ : state) benchmark::DoNotOptimize(net.predict(x));
}
BENCHMARK(bm_doa_cnn_infer)->Unit(benchmark::kMillisecond);

void bm_doa_glrt(benchmark::State& state) {
    const ReceivedArray z = doa_example(13);
    GlrtDoaConfig cfg;
    cfg.grid = steering_grid(ArrayConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(glrt_doa(z, cfg).class_index);
}
BENCHMARK(bm_doa_glrt)->Unit(benchmark::kMillisecond);

void bm_statistic_sequence(benchmark::State& state) {
    const ReceivedArray z = detection_example(17);
    const GlrtDetectionConfig cfg;
    for (auto _ : state) benchmark::DoNotOptimize(statistic_sequence(z, cfg));
}
BENCHMARK(bm_statistic_sequence)->Unit(benchmark::kMillisecond);

void bm_empirical_covariance(benchmark::State& state) {
    Rng rng(19);
    CMat w(8, 750);
    for (auto& v : w.data) v = rng.complex_gaussian(1.0);
    for (auto _ : state) benchmark::DoNotOptimize(empirical_covariance(w, 1e-6));
}
BENCHMARK(bm_empirical_covariance);

void bm_steering_scan(benchmark::State& state) {
    const auto grid = steering_grid(ArrayConfig{});
    Rng rng(23);
    std::vector<std::complex<double>> v(8);
    for (auto& c : v) c = rng.complex_gaussian(1.0);
    for (auto _ : state) {
        double best = -1.0;
        int arg = 0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            std::complex<double> acc(0.0, 0.0);
            for (int m = 0; m < 8; ++m)
                acc += std::conj(grid[g].values[static_cast<std::size_t>(m)]) *
                       v[static_cast<std::size_t>(m)];
            if (std::abs(acc) > best) {
                best = std::abs(acc);
                arg = static_cast<int>(g);
            }
        }
        benchmark::DoNotOptimize(arg);
    }
}
BENCHMARK(bm_steering_scan);

void bm_fgsm_detection(benchmark::State& state) {
    Network net = build_detection_network({8, 500, 2}, 2, 7);
    const RealTensor x = to_real_tensor(detection_example(29).samples);
    AttackConfig cfg;
    cfg.target_psr_db = -15.0;
    for (auto _ : state) benchmark::DoNotOptimize(fgsm(net, x, 1, cfg).l2_norm);
}
BENCHMARK(bm_fgsm_detection)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
