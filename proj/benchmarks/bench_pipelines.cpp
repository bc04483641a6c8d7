// SPDX-License-Identifier: Apache-2.0
// End-to-end estimation time versus path count: matrix pipeline and CP baseline.
#include <benchmark/benchmark.h>

#include "bsesprit/harness.hpp"

using namespace bsesprit;

namespace {

struct Case {
  std::array<BeamTransform, 4> tr;
  BeamspaceTensor noisy;
  double delta_f = 0.0;
};

Case make_case(int l) {
  Scenario base;
  base.m[4] = 64;
  base.delta_f = 937.5e3;
  const Scenario sc = scenario_with_paths(base, l);
  const auto truth = params_from_geometry(sc);
  Case c;
  c.tr = make_transforms(sc, truth);
  c.delta_f = sc.delta_f;
  const BeamspaceTensor clean = synth_beamspace_tensor(truth, c.tr, sc);
  Rng rng = make_stream(5, {static_cast<std::uint64_t>(l)});
  const ObservationConfig obs{sc.n_p, sc.e_s, noise_for_snr(truth, c.tr, sc, 30.0), sc.noise_mode};
  c.noisy = observe_and_estimate(clean, obs, rng);
  return c;
}

void BM_MatrixPipeline(benchmark::State& state) {
  const int l = static_cast<int>(state.range(0));
  const Case c = make_case(l);
  EspritOptions opts;
  opts.method = SubspaceMethod::fast;
  opts.delta_f = c.delta_f;
  for (auto _ : state) benchmark::DoNotOptimize(esprit_pipeline(c.noisy, c.tr, l, 0, opts));
}
BENCHMARK(BM_MatrixPipeline)->DenseRange(2, 6)->Unit(benchmark::kMillisecond);

void BM_TensorPipeline(benchmark::State& state) {
  const int l = static_cast<int>(state.range(0));
  const Case c = make_case(l);
  for (auto _ : state) benchmark::DoNotOptimize(tensor_esprit_pipeline(c.noisy, c.tr, l, c.delta_f));
}
BENCHMARK(BM_TensorPipeline)->DenseRange(2, 6)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
