#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "mipic/objective.hpp"
#include "mipic/similarity.hpp"
#include "mipic/trainer.hpp"

namespace {

mipic::TokenBatch random_batch(const mipic::ModelConfig& cfg, std::size_t batch, std::size_t tokens, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<mipic::TokenId>> seqs;
    for (std::size_t b = 0; b < batch; ++b) {
        std::vector<mipic::TokenId> s{mipic::Vocabulary::kCls};
        for (std::size_t t = 0; t < tokens; ++t) {
            s.push_back(static_cast<mipic::TokenId>(mipic::Vocabulary::kNumSpecial + rng() % (cfg.vocab_size - 3)));
        }
        seqs.push_back(std::move(s));
    }
    return mipic::TokenBatch::from_sequences(seqs);
}

mipic::ModelConfig bench_config() {
    auto cfg = mipic::desk_model_config();
    cfg.vocab_size = 200;
    return cfg;
}

void BM_EncoderForward(benchmark::State& state) {
    const auto cfg = bench_config();
    const mipic::MipicModel model(cfg);
    const auto batch = random_batch(cfg, static_cast<std::size_t>(state.range(0)), 9, 1);
    for (auto _ : state) benchmark::DoNotOptimize(model.encoder().encode_inference(batch).layers.back().value());
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncoderForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// One full optimisation step (two views, loss, backward, AdamW) per variant.
void training_step(benchmark::State& state, mipic::AblationFlags flags) {
    const auto cfg = bench_config();
    mipic::MipicModel model(cfg);
    const auto params = model.parameters();
    mipic::AdamW opt(params, mipic::TrainConfig{});
    const auto batch = random_batch(cfg, 16, 9, 2);
    std::size_t step = 0;
    for (auto _ : state) {
        auto terms = mipic::mipic_loss(batch, model, flags, {mipic::view_seed(0, step, 0), mipic::view_seed(0, step, 1)});
        mipic::zero_grads(params);
        mipic::backward(terms.total);
        opt.step(1e-4);
        ++step;
    }
}

void BM_StepMipic(benchmark::State& state) { training_step(state, {}); }
void BM_StepNoSia(benchmark::State& state) { training_step(state, {true, false, false}); }
void BM_StepNoPic(benchmark::State& state) { training_step(state, {false, true, false}); }
void BM_StepMrlOnly(benchmark::State& state) { training_step(state, {false, false, true}); }
BENCHMARK(BM_StepMipic)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepNoSia)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepNoPic)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StepMrlOnly)->Unit(benchmark::kMillisecond);

void BM_CkaLinear(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    mipic::Matrix x(k, 8), y(k, 32);
    for (double& v : x.data()) v = n01(rng);
    for (double& v : y.data()) v = n01(rng);
    for (auto _ : state) benchmark::DoNotOptimize(mipic::sim::cka_linear(x, y).value);
}
BENCHMARK(BM_CkaLinear)->Arg(8)->Arg(32)->Arg(128);

void BM_CkaLossBackward(benchmark::State& state) {
    const auto k = static_cast<std::size_t>(state.range(0));
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01;
    mipic::Matrix x(k, 8), y(k, 32);
    for (double& v : x.data()) v = n01(rng);
    for (double& v : y.data()) v = n01(rng);
    const auto param = mipic::Node::parameter(x);
    for (auto _ : state) {
        auto loss = mipic::sim::cka_loss(param, y);
        param.zero_grad();
        mipic::backward(loss.loss);
        benchmark::DoNotOptimize(param.grad().data().data());
    }
}
BENCHMARK(BM_CkaLossBackward)->Arg(8)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
