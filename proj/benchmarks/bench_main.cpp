#include <benchmark/benchmark.h>

#include <random>

#include "affinv/correlation.hpp"
#include "affinv/ocsvm.hpp"
#include "affinv/preflearn.hpp"

using namespace affinv;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Eigen::MatrixXd x(rows, cols);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
    return x;
}

PairSet random_pairs(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
    const auto x = gaussian(n, d, seed);
    std::vector<double> labels(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = x(i, 0) + 0.5 * x(i, 1) > 0 ? 1.0 : 0.0;
    return PairSet::from_diffs("bench", x, labels);
}

}  // namespace

static void BM_OcsvmTrain(benchmark::State& state) {
    const Eigen::MatrixXd x = gaussian(state.range(0), 768, 1).array().sign().matrix();
    for (auto _ : state) benchmark::DoNotOptimize(ocsvm::train(x, 0.3, ocsvm::Kernel::rbf(1.0 / 768.0)));
}
BENCHMARK(BM_OcsvmTrain)->Arg(50)->Arg(200);

static void BM_SignVector(benchmark::State& state) {
    const auto pairs = random_pairs(state.range(0), 768, 2);
    for (auto _ : state) benchmark::DoNotOptimize(sign_vector(pairs));
}
BENCHMARK(BM_SignVector)->Arg(1000)->Arg(10000);

static void BM_PreferenceTrain(benchmark::State& state) {
    const std::vector<PairSet> pairs{random_pairs(state.range(0), 64, 3)};
    for (auto _ : state) benchmark::DoNotOptimize(pref::train(pairs, std::nullopt));
}
BENCHMARK(BM_PreferenceTrain)->Arg(1000)->Arg(10000);
BENCHMARK_MAIN();
