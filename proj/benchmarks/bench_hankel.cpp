// SPDX-License-Identifier: Apache-2.0
// Smoothed-matrix products and top-L subspaces: FFT operator vs the dense matrix.
#include <benchmark/benchmark.h>

#include "bsesprit/fast_svd.hpp"
#include "bsesprit/md_esprit.hpp"

using namespace bsesprit;

namespace {

BeamspaceTensor random_tensor(int m5) {
  BeamspaceTensor t;
  t.dims = {4, 4, 4, 4, m5};
  t.values.resize(256 * m5);
  Rng rng = make_stream(3, {static_cast<std::uint64_t>(m5)});
  fill_complex_normal(rng, t.values, 1.0);
  return t;
}

void BM_MatvecFft(benchmark::State& state) {
  const int m5 = static_cast<int>(state.range(0));
  const BeamspaceTensor t = random_tensor(m5);
  const HankelBlockOperator op(t, default_l5(m5));
  const ComplexVector x = ComplexVector::Ones(op.cols());
  for (auto _ : state) benchmark::DoNotOptimize(op.apply(x));
  state.SetComplexityN(m5);
}
BENCHMARK(BM_MatvecFft)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_MatvecDense(benchmark::State& state) {
  const int m5 = static_cast<int>(state.range(0));
  const BeamspaceTensor t = random_tensor(m5);
  const ComplexMatrix h = spatial_smooth(t, default_l5(m5)).values;
  const ComplexVector x = ComplexVector::Ones(h.cols());
  for (auto _ : state) benchmark::DoNotOptimize((h * x).eval());
  state.SetComplexityN(m5);
}
BENCHMARK(BM_MatvecDense)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_Subspace(benchmark::State& state) {
  const int m5 = 64;
  const int l = static_cast<int>(state.range(0));
  const auto method = state.range(1) ? SubspaceMethod::fast : SubspaceMethod::dense;
  const BeamspaceTensor t = random_tensor(m5);
  for (auto _ : state) benchmark::DoNotOptimize(signal_subspace(t, default_l5(m5), l, method));
}
BENCHMARK(BM_Subspace)->ArgsProduct({{2, 4, 8}, {0, 1}})->ArgNames({"L", "fast"})
    ->Unit(benchmark::kMillisecond);

}  // namespace
