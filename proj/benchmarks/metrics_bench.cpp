#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "jras/metrics.hpp"

namespace {

// A filled disc of radius n/4 and the same disc shifted by n/8.
std::pair<jras::LabelMap, jras::LabelMap> discs(int n) {
  jras::LabelMap p(n, n), g(n, n);
  const double r = n / 4.0, c = n / 2.0, shift = n / 8.0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      if (std::hypot(y - c, x - c) < r) p.at(y, x) = 1;
      if (std::hypot(y - c - shift, x - c) < r) g.at(y, x) = 1;
    }
  }
  return {p, g};
}

// Independent 50% noise: nearly every foreground pixel is on the boundary.
std::pair<jras::LabelMap, jras::LabelMap> noise(int n) {
  std::mt19937_64 rng(7);
  std::bernoulli_distribution coin(0.5);
  jras::LabelMap p(n, n), g(n, n);
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = coin(rng);
    g[i] = coin(rng);
  }
  return {p, g};
}

void BM_HausdorffEdt(benchmark::State& state) {
  const auto [p, g] = discs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jras::hausdorff(p, g, 1));
}
BENCHMARK(BM_HausdorffEdt)->RangeMultiplier(2)->Range(32, 256);

void BM_HausdorffBruteForce(benchmark::State& state) {
  const auto [p, g] = discs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jras::hausdorff_brute_force(p, g, 1));
}
BENCHMARK(BM_HausdorffBruteForce)->RangeMultiplier(2)->Range(32, 256);

void BM_Dice(benchmark::State& state) {
  const auto [p, g] = discs(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jras::dice_score(p, g, 1));
}
void BM_HausdorffEdtNoise(benchmark::State& state) {
  const auto [p, g] = noise(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jras::hausdorff(p, g, 1));
}
BENCHMARK(BM_HausdorffEdtNoise)->Arg(64)->Arg(128);

void BM_HausdorffBruteForceNoise(benchmark::State& state) {
  const auto [p, g] = noise(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(jras::hausdorff_brute_force(p, g, 1));
}
BENCHMARK(BM_HausdorffBruteForceNoise)->Arg(64)->Arg(128);

BENCHMARK(BM_Dice)->Arg(128);

}  // namespace
