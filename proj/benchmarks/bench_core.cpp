#include <benchmark/benchmark.h>

#include "fedse/features.hpp"
#include "fedse/rollout.hpp"
#include "fedse/server.hpp"
#include "fedse/wire.hpp"
#include "support.hpp"

using namespace fedse;

namespace {

// Default model shape: 508 features, 64 hidden units, 66 actions.
constexpr std::size_t kIn = 508, kHidden = 64, kVocab = 66;

void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  auto base = test::random_base(kIn, kHidden, kVocab, rng);
  const nn::PolicyNet net(base, test::random_adapter(base->schema(), static_cast<std::size_t>(state.range(0)), 16.0, rng));
  const auto batch = test::random_batch(1, kIn, kVocab, 1, rng);
  const auto& step = batch[0].steps[0];
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(step.features, step.mask));
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(8)->Arg(16);

void BM_Backward(benchmark::State& state) {
  Rng rng(2);
  auto base = test::random_base(kIn, kHidden, kVocab, rng);
  const nn::PolicyNet net(base, test::random_adapter(base->schema(), 8, 16.0, rng));
  const auto batch = test::random_batch(static_cast<std::size_t>(state.range(0)), kIn, kVocab, 10, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::backward_adapter(net, batch));
}
BENCHMARK(BM_Backward)->Arg(1)->Arg(8);

void BM_FeatureEncode(benchmark::State& state) {
  const env::FeatureEncoder encoder(env::EnvSuite::standard());
  Rng rng(3);
  const auto task = env::sample_task(EnvId::craft, env::Split::train, rng);
  const auto t = env::expert_rollout(encoder, task);
  auto e = env::make_environment(EnvId::craft, encoder.suite_ptr());
  const auto [u, obs] = e->reset(task);
  const auto actions = t.actions();
  for (auto _ : state) benchmark::DoNotOptimize(encoder.encode(u, actions, obs));
}
BENCHMARK(BM_FeatureEncode);

void BM_Encode(benchmark::State& state) {
  Rng rng(4);
  const std::vector<nn::LayerShape> schema{{kHidden, kIn}, {kHidden, kHidden}, {kVocab, kHidden}};
  const auto a = test::random_adapter(schema, static_cast<std::size_t>(state.range(0)), 16.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(wire::encode_upload(a, 1, 2, 3));
}
BENCHMARK(BM_Encode)->Arg(2)->Arg(8)->Arg(16);

void BM_Decode(benchmark::State& state) {
  Rng rng(5);
  const std::vector<nn::LayerShape> schema{{kHidden, kIn}, {kHidden, kHidden}, {kVocab, kHidden}};
  const auto bytes = wire::encode_upload(test::random_adapter(schema, static_cast<std::size_t>(state.range(0)), 16.0, rng), 1, 2, 3);
  for (auto _ : state) benchmark::DoNotOptimize(wire::decode_adapter(bytes));
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * bytes.size()));
}
BENCHMARK(BM_Decode)->Arg(2)->Arg(8)->Arg(16);

void BM_Aggregate(benchmark::State& state) {
  Rng rng(6);
  const std::vector<nn::LayerShape> schema{{kHidden, kIn}, {kHidden, kHidden}, {kVocab, kHidden}};
  std::vector<nn::LoraAdapter> set;
  for (int k = 0; k < state.range(0); ++k) set.push_back(test::random_adapter(schema, 8, 16.0, rng));
  for (auto _ : state) benchmark::DoNotOptimize(server::aggregate_uniform(set));
}
BENCHMARK(BM_Aggregate)->Arg(3)->Arg(10);

}  // namespace
BENCHMARK_MAIN();
