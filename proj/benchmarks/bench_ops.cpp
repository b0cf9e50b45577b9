#include <benchmark/benchmark.h>

#include "degen/degenerate.hpp"
#include "degen/experiment.hpp"
#include "degen/verify/random_factors.hpp"

using namespace degen;

namespace
{

struct Operands
{
    DegenerateFactor a, b;
};

// a is degenerate in a quarter of its dimensions, b is dense
Operands operands(Index n)
{
    verify::Rng rng(static_cast<std::uint64_t>(n));
    const Scope s{{"x", n/2}, {"y", n - n/2}};
    return {verify::randomFactor(rng, s, n/4), verify::randomFactor(rng, s, 0)};
}

void BM_Multiply(benchmark::State & state)
{
    const Operands p = operands(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(multiply(p.a, p.b));
    state.SetComplexityN(state.range(0));
}

void BM_Divide(benchmark::State & state)
{
    const Operands p = operands(state.range(0));
    const DegenerateFactor prod = multiply(p.a, p.b);
    for (auto _ : state)
        benchmark::DoNotOptimize(divide(prod, p.b));
    state.SetComplexityN(state.range(0));
}

void BM_Marginalise(benchmark::State & state)
{
    const Operands p = operands(state.range(0));
    const DegenerateFactor prod = multiply(p.a, p.b);
    for (auto _ : state)
        benchmark::DoNotOptimize(marginalise(prod, {"y"}));
    state.SetComplexityN(state.range(0));
}

void BM_Reduce(benchmark::State & state)
{
    const Operands p = operands(state.range(0));
    const Evidence ev{{"y", Vector::Zero(state.range(0) - state.range(0)/2)}};
    for (auto _ : state)
        benchmark::DoNotOptimize(reduce(p.a, ev));
    state.SetComplexityN(state.range(0));
}

void BM_Moments(benchmark::State & state)
{
    const Operands p = operands(state.range(0));
    for (auto _ : state)
        benchmark::DoNotOptimize(moments(p.a));
    state.SetComplexityN(state.range(0));
}

// Full transport run; argument 1 tracks the normaliser, 0 is moments-only
void BM_TransportRun(benchmark::State & state)
{
    const WorldConfig w;
    const SimulationRecord rec = simulate(w);
    OpOptions opts;
    opts.trackNormaliser = state.range(0) != 0;
    for (auto _ : state)
        benchmark::DoNotOptimize(runEstimation(rec, Hypothesis::truthOf(w), {}, opts));
}

} // namespace

BENCHMARK(BM_Multiply)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);
BENCHMARK(BM_Divide)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);
BENCHMARK(BM_Marginalise)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);
BENCHMARK(BM_Reduce)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);
BENCHMARK(BM_Moments)->RangeMultiplier(2)->Range(4, 64)->Complexity(benchmark::oNCubed);
BENCHMARK(BM_TransportRun)->Arg(1)->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
