#include <benchmark/benchmark.h>

#include <random>

#include "chronovec/checkpoint.hpp"
#include "chronovec/toylab/corpus.hpp"
#include "chronovec/toylab/model.hpp"
#include "chronovec/vecalg.hpp"

using namespace chronovec;

namespace {

Checkpoint make_checkpoint(std::size_t tensors, std::size_t per_tensor, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Checkpoint c;
  for (std::size_t i = 0; i < tensors; ++i) {
    std::vector<float> v(per_tensor);
    for (auto& x : v) x = n(rng);
    c.insert("layer" + std::to_string(i) + ".weight", Tensor::from_f32({static_cast<std::int64_t>(per_tensor)}, v));
  }
  return c;
}

TimeVector vector_over(const Checkpoint& base, std::uint64_t seed) {
  return diff(make_checkpoint(base.tensors.size(), base.at("layer0.weight").numel(), seed), base, std::nullopt);
}

void BM_Encode(benchmark::State& state) {
  const auto c = make_checkpoint(16, state.range(0) / 16, 1);
  for (auto _ : state) benchmark::DoNotOptimize(encode_checkpoint(c));
  state.SetBytesProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_Encode)->Arg(1 << 16)->Arg(1 << 20);

void BM_Decode(benchmark::State& state) {
  const auto bytes = encode_checkpoint(make_checkpoint(16, state.range(0) / 16, 1));
  for (auto _ : state) benchmark::DoNotOptimize(decode_checkpoint(bytes));
  state.SetBytesProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_Decode)->Arg(1 << 16)->Arg(1 << 20);

void BM_CastF16(benchmark::State& state) {
  const auto c = make_checkpoint(1, state.range(0), 2);
  const auto& t = c.at("layer0.weight");
  for (auto _ : state) benchmark::DoNotOptimize(t.cast(DType::F16));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CastF16)->Arg(1 << 20);

void BM_Lincomb(benchmark::State& state) {
  const auto base = make_checkpoint(16, state.range(0) / 16, 3);
  std::vector<TimeVector> vs;
  for (std::uint64_t s = 0; s < 4; ++s) vs.push_back(vector_over(base, 10 + s));
  std::vector<std::pair<double, const TimeVector*>> terms;
  for (const auto& v : vs) terms.emplace_back(0.25, &v);
  for (auto _ : state) benchmark::DoNotOptimize(lincomb(terms));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 4);
}
BENCHMARK(BM_Lincomb)->Arg(1 << 20);

void BM_Cosine(benchmark::State& state) {
  const auto base = make_checkpoint(16, state.range(0) / 16, 4);
  const auto a = vector_over(base, 20), b = vector_over(base, 21);
  for (auto _ : state) benchmark::DoNotOptimize(cosine_similarity(a, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Cosine)->Arg(1 << 20);

void BM_ToyTrainEpoch(benchmark::State& state) {
  toylab::ToyCorpusSpec spec;
  spec.periods = {TimePeriod::year(2012)};
  const auto tokens = toylab::generate_corpus(spec).begin()->second;
  toylab::TrainSpec ts;
  ts.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(toylab::train(tokens, ts));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_ToyTrainEpoch)->Unit(benchmark::kMillisecond);

void BM_ToyEvaluate(benchmark::State& state) {
  toylab::ToyCorpusSpec spec;
  spec.periods = {TimePeriod::year(2012)};
  const auto tokens = toylab::generate_corpus(spec).begin()->second;
  toylab::TrainSpec ts;
  ts.epochs = 0;
  const auto model = toylab::train(tokens, ts);
  for (auto _ : state) benchmark::DoNotOptimize(toylab::evaluate(model, tokens));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_ToyEvaluate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
