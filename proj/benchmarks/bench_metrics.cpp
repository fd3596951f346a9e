#include <benchmark/benchmark.h>

#include "samadapter/metrics.hpp"
#include "samadapter/tensor.hpp"

using namespace samadapter;

namespace {

struct Pair {
  SoftPrediction pred;
  BinaryMask gt;
};

Pair make_pair(int n) {
  Rng rng(1);
  Mat p(n, n), g = Mat::Zero(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double d = std::hypot(y - n / 2.0, x - n / 2.0) / n;
      g(y, x) = d < 0.25 ? 1.0 : 0.0;
      p(y, x) = std::clamp(1.2 - 3 * d + 0.2 * rng.uniform(), 0.0, 1.0);
    }
  return {SoftPrediction(p), BinaryMask(g)};
}

void BM_SMeasure(benchmark::State& state) {
  const Pair pr = make_pair(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(s_measure(pr.pred, pr.gt));
}

void BM_EMeasure(benchmark::State& state) {
  const Pair pr = make_pair(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(e_measure_mean(pr.pred, pr.gt));
}

void BM_WeightedFbeta(benchmark::State& state) {
  const Pair pr = make_pair(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(weighted_fbeta(pr.pred, pr.gt));
}

void BM_EvaluateImage(benchmark::State& state) {
  const Pair pr = make_pair(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_image("x", pr.pred, pr.gt));
}

}  // namespace

BENCHMARK(BM_SMeasure)->Arg(64)->Arg(352);
BENCHMARK(BM_EMeasure)->Arg(64)->Arg(352);
BENCHMARK(BM_WeightedFbeta)->Arg(64)->Arg(352);
BENCHMARK(BM_EvaluateImage)->Arg(64)->Arg(352);
BENCHMARK_MAIN();
