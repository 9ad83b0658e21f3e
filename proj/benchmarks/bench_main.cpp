#include <benchmark/benchmark.h>

#include "ota/attack.hpp"
#include "ota/channel.hpp"
#include "ota/classifier.hpp"
#include "ota/harness.hpp"
#include "ota/numerics.hpp"
#include "ota/signal.hpp"

using namespace ota;

namespace {

// Untrained default architecture; timings do not depend on the weights.
const ClassifierModel& model() {
  static const ClassifierModel m{ArchitectureSpec{}};
  return m;
}

CVec input(std::uint64_t seed) {
  Rng rng(seed);
  return synth_sample(ModulationType::QPSK, 10.0, kDefaultLength, rng).iq;
}

CVec channel(std::uint64_t seed) {
  Rng rng(seed, Stream::Channel, 0);
  return sample_channel({}, kDefaultLength, rng).h;
}

void BM_InputGradient(benchmark::State& state) {
  const RVec x = to_real(input(1));
  for (auto _ : state) benchmark::DoNotOptimize(model().input_gradient(x, 2));
}
BENCHMARK(BM_InputGradient);

void BM_TargetedMrpp(benchmark::State& state) {
  const CVec x = input(2);
  const CVec h = channel(2);
  for (auto _ : state) benchmark::DoNotOptimize(targeted_mrpp(model(), x, 1, h, PowerBudget(12.8)));
}
BENCHMARK(BM_TargetedMrpp)->Unit(benchmark::kMicrosecond);

void BM_NontargetedMrpp(benchmark::State& state) {
  const CVec x = input(3);
  const CVec h = channel(3);
  for (auto _ : state) benchmark::DoNotOptimize(nontargeted_mrpp(model(), x, 1, PowerBudget(12.8), 4, h));
}
BENCHMARK(BM_NontargetedMrpp)->Unit(benchmark::kMicrosecond);

void BM_FirstSingular(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  RealMatrix m;
  RVec common(2 * kDefaultLength);
  for (auto& e : common) e = rng.normal();
  for (std::size_t r = 0; r < rows; ++r) {
    RVec row(common.size());
    const double a = rng.normal();
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = a * common[c] + 0.3 * rng.normal();
    m.append_row(row);
  }
  for (auto _ : state) benchmark::DoNotOptimize(first_right_singular(m));
}
BENCHMARK(BM_FirstSingular)->Arg(40)->Arg(200)->Unit(benchmark::kMicrosecond);

void BM_SweepPoint(benchmark::State& state) {
  const EvalSet eval = build_eval_set(model().spec().classes, 100, kDefaultLength, kDefaultSamplesPerSymbol, 5);
  EvalSettings s;
  s.trials = 100;
  const PowerBudget b = pnr_to_budget(0.0, s.sigma2, kDefaultLength, PnrReference::Receiver, s.channel);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_accuracy(model(), eval, {AttackKind::MrppTargeted}, b, s));
}
BENCHMARK(BM_SweepPoint)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
