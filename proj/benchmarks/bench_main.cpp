#include "w2r/conjugate.hpp"
#include "w2r/distributions.hpp"
#include "w2r/oracle.hpp"
#include "w2r/solver.hpp"

#include <benchmark/benchmark.h>

using namespace w2r;

namespace {

SampleSet canonical_mu(Index n, std::uint64_t seed) {
  MixtureSpec mix;
  for (double sx : {-2.0, 2.0})
    for (double sy : {-2.0, 2.0}) mix.components.push_back({0.25, {Vector{{sx, sy}}, 0.25 * Matrix::Identity(2, 2)}});
  return sample_mixture(mix, n, seed);
}

PotentialParams default_icnn() {
  ClassSpec spec;
  spec.kind = PotentialClass::icnn;
  return initial_params(spec, 2, 1);
}

void BM_IcnnValueAndGradient(benchmark::State& state) {
  const PotentialParams theta = default_icnn();
  const Potential f(theta);
  const Matrix xs = canonical_mu(state.range(0), 3).points().transpose();
  Vector values;
  Matrix grads;
  for (auto _ : state) {
    f.value_and_gradient_batch(xs, values, grads);
    benchmark::DoNotOptimize(values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IcnnValueAndGradient)->Arg(1)->Arg(64)->Arg(256);

void BM_ConjugateBatch(benchmark::State& state) {
  const PotentialParams theta = default_icnn();
  const Potential f(theta);
  const SampleSet ys = affine_pushforward(canonical_mu(64, 4), Matrix{{1.5, 0.5}, {0.5, 1.0}}, Vector{{1.0, -1.0}});
  std::vector<Index> rows(64);
  for (Index i = 0; i < 64; ++i) rows[static_cast<std::size_t>(i)] = i;
  ConjugateConfig inner;
  inner.max_iter = static_cast<int>(state.range(0));
  inner.search_box = Box::cube(2, 20.0);
  for (auto _ : state) benchmark::DoNotOptimize(conjugate_batch(f, ys.points(), rows, inner, nullptr));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_ConjugateBatch)->Arg(20)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_QuadraticClosedForm(benchmark::State& state) {
  const SampleSet mu = canonical_mu(state.range(0), 5);
  const SampleSet nu = canonical_mu(state.range(0), 6);
  for (auto _ : state) benchmark::DoNotOptimize(fit_quadratic_closed_form(mu, nu));
}
BENCHMARK(BM_QuadraticClosedForm)->Arg(1000)->Arg(10000);

void BM_Hungarian(benchmark::State& state) {
  const SampleSet mu = canonical_mu(state.range(0), 7);
  const SampleSet nu = canonical_mu(state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(exact_w2_assignment(mu, nu));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(64, 512)->Complexity()->Unit(benchmark::kMillisecond);

void BM_SinkhornSweep(benchmark::State& state) {
  const SampleSet mu = canonical_mu(state.range(0), 9);
  const SampleSet nu = canonical_mu(state.range(0), 10);
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(mu, nu, 0.1, 10));
  state.SetItemsProcessed(state.iterations() * 10);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SinkhornSweep)->RangeMultiplier(2)->Range(250, 2000)->Complexity()->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
