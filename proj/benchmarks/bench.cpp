// Micro-benchmarks for the hot paths: the angle-delay map backends, the
// greedy receiver, the assignment solvers, and one training step.

#include <benchmark/benchmark.h>

#include "isacsim/beamforming.hpp"
#include "isacsim/experiment.hpp"

using namespace isac;

namespace {

struct DeskFixture {
  OfdmConfig ofdm;
  ArrayModel truth;
  SteeringDictionary angle_dict;
  DelayDictionary delay_dict;
  CMat filtered;

  DeskFixture()
      : ofdm(make_ofdm()),
        truth(make_truth(ofdm)),
        angle_dict(steering_matrix(truth, uniform_angle_grid(180, -kPi / 2.0, kPi / 2.0))),
        delay_dict(build_delay_dictionary(ofdm, 50, 10.0, 43.75)) {
    ScenePriors prior;
    Rng rng = Rng::stream(3, 1);
    SensingScene scene = sample_sensing_scene_fixed(prior, 3, ofdm, rng);
    CVec f_r = synthesize_beam(angle_dict, prior.theta_min_rad, prior.theta_max_rad);
    CVec f = isac_combine(f_r, f_r, 1.0, 0.0, ofdm.power_w).f;
    SymbolBlock sym = sample_symbols(ofdm.subcarriers, rng);
    CMat y = sensing_observation(scene, truth, f, sym, ofdm, rng);
    filtered = matched_filter(y, sym);
  }

  static OfdmConfig make_ofdm() {
    OfdmConfig o;
    o.subcarriers = 64;
    ScenePriors prior;
    o.noise_psd = calibrate_noise(o, 16, prior, 7.05);
    return o;
  }

  static ArrayModel make_truth(const OfdmConfig& o) {
    double lam = o.wavelength();
    Rng rng = Rng::stream(3, 0);
    return impaired_array(16, lam, sample_impairment(16, lam, lam / 15.0, rng));
  }
};

const DeskFixture& desk() {
  static DeskFixture f;
  return f;
}

void MapDirect(benchmark::State& state) {
  const DeskFixture& f = desk();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        angle_delay_map(f.filtered, f.angle_dict, f.delay_dict, MapBackend::kDirect));
}
BENCHMARK(MapDirect)->Unit(benchmark::kMillisecond);

void MapChirp(benchmark::State& state) {
  const DeskFixture& f = desk();
  for (auto _ : state)
    benchmark::DoNotOptimize(
        angle_delay_map(f.filtered, f.angle_dict, f.delay_dict, MapBackend::kChirp));
}
BENCHMARK(MapChirp)->Unit(benchmark::kMillisecond);

void GreedyPath(benchmark::State& state) {
  const DeskFixture& f = desk();
  int depth = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(omp_path(f.filtered, f.angle_dict, f.delay_dict, depth));
}
BENCHMARK(GreedyPath)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

void AssignHungarian(benchmark::State& state) {
  Rng rng = Rng::stream(4, 0);
  RMat cost(5, 5);
  for (int i = 0; i < 25; ++i) cost(i) = rng.uniform(0.0, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(detail::assign_hungarian(cost));
}
BENCHMARK(AssignHungarian);

void AssignEnumerate(benchmark::State& state) {
  Rng rng = Rng::stream(4, 0);
  RMat cost(5, 5);
  for (int i = 0; i < 25; ++i) cost(i) = rng.uniform(0.0, 10.0);
  for (auto _ : state) benchmark::DoNotOptimize(detail::assign_enumerate(cost));
}
BENCHMARK(AssignEnumerate);

void TrainStep(benchmark::State& state) {
  TrainConfig tc = ExperimentConfig::desk().train;
  tc.batch = 8;
  tc.omega = 1.0;
  tc.eta = 1.0;
  tc.t_max = static_cast<int>(state.range(0));
  const ArrayModel& truth = desk().truth;
  LearnableParams params = LearnableParams::impairment_init(tc.antennas, tc.angle_grid());
  TrainBatch batch = sample_train_batch(tc, 5, 0);
  for (auto _ : state)
    benchmark::DoNotOptimize(evaluate_batch(params, tc, truth, batch, true));
}
BENCHMARK(TrainStep)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
