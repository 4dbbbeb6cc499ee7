#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mambaest/mambanet.hpp"
#include "mambaest/scan.hpp"
#include "mambaest/tensor.hpp"
#include "mambaest/training.hpp"

using namespace mambaest;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from(std::move(shape), std::move(v), grad);
}

// args: H, W, cin, cout, kh, kw
void BM_Conv2dForwardBackward(benchmark::State& state) {
    const auto H = static_cast<std::size_t>(state.range(0));
    const auto W = static_cast<std::size_t>(state.range(1));
    const auto cin = static_cast<std::size_t>(state.range(2));
    const auto cout = static_cast<std::size_t>(state.range(3));
    const auto kh = static_cast<std::size_t>(state.range(4));
    const auto kw = static_cast<std::size_t>(state.range(5));
    const Tensor x = random_tensor({H, W, cin}, 1, true);
    const Tensor k = random_tensor({kh, kw, cin, cout}, 2, true);
    const Tensor b = random_tensor({cout}, 3, true);
    for (auto _ : state) {
        sum(conv2d_same(x, k, b)).backward();
        benchmark::DoNotOptimize(k.grad().data());
    }
}
BENCHMARK(BM_Conv2dForwardBackward)
    ->Args({12, 4, 12, 12, 5, 5})
    ->Args({48, 14, 12, 2, 96, 5})
    ->Args({57, 4, 12, 12, 5, 5})
    ->Args({228, 14, 12, 2, 96, 5})
    ->Unit(benchmark::kMicrosecond);

void BM_ScanSequential(benchmark::State& state) {
    const auto L = static_cast<std::size_t>(state.range(0));
    const std::size_t c = 24;
    std::vector<double> a(L * c, 0.5), b(L * c, 1.0), h(L * c);
    for (auto _ : state) {
        scan_sequential(a, b, L, c, h);
        benchmark::DoNotOptimize(h.data());
    }
    state.SetComplexityN(static_cast<benchmark::IterationCount>(L));
}
BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

void BM_ScanParallel(benchmark::State& state) {
    const auto L = static_cast<std::size_t>(state.range(0));
    const std::size_t c = 24;
    std::vector<double> a(L * c, 0.5), b(L * c, 1.0), h(L * c);
    for (auto _ : state) {
        scan_parallel(a, b, L, c, h);
        benchmark::DoNotOptimize(h.data());
    }
    state.SetComplexityN(static_cast<benchmark::IterationCount>(L));
}
BENCHMARK(BM_ScanParallel)->RangeMultiplier(4)->Range(256, 16384)->Complexity(benchmark::oN);

// One training sample (forward, Huber loss, backward) at N_f = range(0).
void BM_TrainSample(benchmark::State& state) {
    BasebandConfig bb;
    bb.n_f = static_cast<std::size_t>(state.range(0));
    const MambaNetConfig cfg = MambaNetConfig::for_baseband(bb);
    const ParameterSet params = init_parameters(cfg, 4);
    const Tensor tokens = random_tensor({cfg.seq_len(), 2}, 5);
    const Tensor target = random_tensor({cfg.n_f, cfg.n_s, 2}, 6);
    for (auto _ : state) {
        params.zero_grad();
        huber_loss(forward_tensor(tokens, params, cfg), target, 1.0).backward();
    }
}
BENCHMARK(BM_TrainSample)->Arg(48)->Arg(228)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
