#include <benchmark/benchmark.h>

#include "epireader/model.hpp"
#include "epireader/ops.hpp"
#include "epireader/rng.hpp"
#include "epireader/synthetic.hpp"

namespace {

using namespace epi;

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-1, 1);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, n}, rng);
  Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128);

void BM_GruStep(benchmark::State& state) {
  Rng rng(2);
  GruParams params = GruParams::init(32, 32, rng);
  Tensor x = random_tensor({32}, rng);
  Tensor h = random_tensor({32}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gru_step(params, x, h));
  }
}
BENCHMARK(BM_GruStep);

void BM_GruStepBackward(benchmark::State& state) {
  Rng rng(2);
  GruParams params = GruParams::init(32, 32, rng);
  Tensor x = random_tensor({32}, rng, true);
  Tensor h = random_tensor({32}, rng);
  for (auto _ : state) {
    Tape tape;
    TapeScope scope(tape);
    Tensor out = gru_step(params, x, h);
    tape.backward(ops::sum(out));
  }
}
BENCHMARK(BM_GruStepBackward);

void BM_Conv1d(benchmark::State& state) {
  Rng rng(3);
  Tensor seq = random_tensor({34, 12}, rng);
  Tensor filters = random_tensor({34, 3, 8}, rng);
  Tensor bias = random_tensor({8}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::conv1d_valid(seq, filters, bias));
  }
}
BENCHMARK(BM_Conv1d);

void BM_EncodeText(benchmark::State& state) {
  Rng rng(4);
  GruParams fwd = GruParams::init(32, 32, rng);
  GruParams bwd = GruParams::init(32, 32, rng);
  Tensor emb = random_tensor({32, 40}, rng);
  std::vector<std::uint8_t> mask(40, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_text(fwd, bwd, emb, mask));
  }
}
BENCHMARK(BM_EncodeText);

void BM_ForwardExample(benchmark::State& state) {
  SyntheticSpec spec;
  spec.num_examples = 1;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  ClozeExample example = encode_example(corpus.train[0], vocab);
  TrainConfig config;
  Rng rng(5);
  ModelParams params =
      ModelParams::init(config, static_cast<int>(vocab.size()), rng);
  ForwardOptions options;
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward_example(params, config, example, options));
  }
}
BENCHMARK(BM_ForwardExample);

void BM_TrainExampleStep(benchmark::State& state) {
  SyntheticSpec spec;
  spec.num_examples = 1;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  ClozeExample example = encode_example(corpus.train[0], vocab);
  TrainConfig config;
  Rng rng(6);
  ModelParams params =
      ModelParams::init(config, static_cast<int>(vocab.size()), rng);
  auto named = params.named_tensors();
  for (auto _ : state) {
    for (auto& [name, t] : named) t.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    ForwardOptions options;
    options.training = true;
    ExampleOutput out = forward_example(params, config, example, options);
    Tensor le = loss_extractor(out.word_probs, example.answer);
    Tensor lr =
        loss_reasoner(out.combined, *out.slate.gold_index, config.gamma);
    tape.backward(ops::add(le, ops::scale(lr, config.lambda)));
  }
}
BENCHMARK(BM_TrainExampleStep);

}  // namespace

BENCHMARK_MAIN();
