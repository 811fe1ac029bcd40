// Microbenchmarks for the hot paths: censored-count kernels, one EM
// sweep, full fusion, and the SSIM map.

#include <benchmark/benchmark.h>

#include <hdrfuse/fusion.hpp>
#include <hdrfuse/metrics.hpp>
#include <hdrfuse/stats.hpp>
#include <hdrfuse/synth.hpp>

using namespace hdrfuse;

namespace {

const SyntheticScene &default_scene() {
  static SyntheticScene scene = [] {
    SimulationParams params;
    params.seed = 5;
    return make_scene(spokes_target(128, 16, 0.65), params);
  }();
  return scene;
}

const ExposureStack &default_stack() {
  static ExposureStack stack = sample_stack(default_scene());
  return stack;
}

} // namespace

static void BM_truncated_mean_near_threshold(benchmark::State &state) {
  double lambda = 2000.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(truncated_poisson_mean(lambda, 2047));
}
BENCHMARK(BM_truncated_mean_near_threshold);

static void BM_truncated_mean_deep_tail(benchmark::State &state) {
  double lambda = 10.0;
  for (auto _ : state)
    benchmark::DoNotOptimize(truncated_poisson_mean(lambda, 2047));
}
BENCHMARK(BM_truncated_mean_deep_tail);

static void BM_poisson_sf_log_large(benchmark::State &state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(poisson_sf_log(1.0e7, 10000000));
}
BENCHMARK(BM_poisson_sf_log_large);

static void BM_em_step_128(benchmark::State &state) {
  const ExposureStack &stack = default_stack();
  SaturationMask mask = saturation_mask(stack);
  FusionConfig config;
  config.threads = static_cast<unsigned>(state.range(0));
  std::vector<double> flux;
  for (const auto &m : stack.measurements)
    flux.push_back(m.acquisition_time);
  Image<double> intensity(stack.height(), stack.width(), 10.0);
  for (auto _ : state) {
    EmStepResult r = em_step(stack, mask, intensity, flux, config);
    benchmark::DoNotOptimize(r.intensity.data());
  }
}
BENCHMARK(BM_em_step_128)->Arg(1)->Arg(4);

static void BM_bayesian_mef_128(benchmark::State &state) {
  const ExposureStack &stack = default_stack();
  FusionConfig config;
  config.tolerance = 0.0;
  config.max_iterations = 10;
  config.threads = static_cast<unsigned>(state.range(0));
  for (auto _ : state) {
    FusionResult r = bayesian_mef(stack, config);
    benchmark::DoNotOptimize(r.fused.data());
  }
}
BENCHMARK(BM_bayesian_mef_128)->Arg(1)->Arg(4);

static void BM_conventional_mef_128(benchmark::State &state) {
  const ExposureStack &stack = default_stack();
  std::vector<double> flux;
  for (const auto &m : stack.measurements)
    flux.push_back(m.acquisition_time);
  for (auto _ : state) {
    FusionResult r = conventional_mef(stack, flux);
    benchmark::DoNotOptimize(r.fused.data());
  }
}
BENCHMARK(BM_conventional_mef_128);

static void BM_ssim_map_128(benchmark::State &state) {
  const Image<double> &truth = default_scene().ground_truth;
  Image<double> other = truth;
  for (std::size_t q = 0; q < other.size(); ++q)
    other[q] *= 1.01;
  for (auto _ : state) {
    Image<double> map = ssim_map(truth, other);
    benchmark::DoNotOptimize(map.data());
  }
}
BENCHMARK(BM_ssim_map_128);

static void BM_sample_stack_128(benchmark::State &state) {
  const SyntheticScene &scene = default_scene();
  for (auto _ : state) {
    ExposureStack stack = sample_stack(scene);
    benchmark::DoNotOptimize(stack.measurements.data());
  }
}
BENCHMARK(BM_sample_stack_128);

BENCHMARK_MAIN();
