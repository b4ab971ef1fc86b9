#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "epireader/checkpoint.hpp"
#include "epireader/model.hpp"
#include "epireader/ops.hpp"
#include "epireader/synthetic.hpp"

using namespace epi;

namespace {

TrainConfig micro_config() {
  TrainConfig c;
  c.embedding_dim = 6;
  c.hidden_dim = 4;
  c.top_k = 2;
  c.filter_width = 3;
  c.num_filters = 3;
  c.agg_hidden_dim = 3;
  return c;
}

ClozeExample micro_example() {
  ClozeExample ex;
  ex.text = {3, 4, 5, 6, 7, 8, 9, 3, 10};
  ex.sentence_ends = {5, 9};
  ex.question = {11, Vocabulary::kPlaceholderId, 12, 6};
  ex.placeholder_pos = 1;
  ex.answer = 3;
  ex.candidates = {3, 9};
  ex.source_id = "micro";
  return ex;
}

ModelParams zero_params(const TrainConfig& config, int vocab_size) {
  Rng rng(1);
  ModelParams p = ModelParams::init(config, vocab_size, rng);
  for (auto& [name, t] : p.named_tensors()) {
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 0.0;
  }
  return p;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("combine_probabilities uniform-evidence identity") {
  Tensor e = Tensor::from({2}, {0.5, 0.5});
  Tensor p = Tensor::from({2}, {0.2, 0.8});
  Tensor pi = combine_probabilities(e, p);
  CHECK(pi.at(0) == doctest::Approx(0.2));
  CHECK(pi.at(1) == doctest::Approx(0.8));
}

TEST_CASE("combine_probabilities with uniform p returns the evidence") {
  Tensor e = Tensor::from({3}, {0.2, 0.5, 0.3});
  Tensor p = Tensor::from({3}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  Tensor pi = combine_probabilities(e, p);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(pi.at(i) == doctest::Approx(e.at(i)));
}

TEST_CASE("combine_probabilities direct arithmetic") {
  Tensor e = Tensor::from({2}, {0.6, 0.4});
  Tensor p = Tensor::from({2}, {0.25, 0.75});
  Tensor pi = combine_probabilities(e, p);
  CHECK(pi.at(0) == doctest::Approx(1.0 / 3));
  CHECK(pi.at(1) == doctest::Approx(2.0 / 3));
}

TEST_CASE("combine_probabilities rejects all-zero products") {
  Tensor e = Tensor::from({2}, {0.5, 0.5});
  Tensor p = Tensor::from({2}, {0.0, 0.0});
  CHECK_THROWS_AS(combine_probabilities(e, p), DegenerateInputError);
}

TEST_CASE("argmax of pi is invariant under positive rescaling of e") {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    std::vector<Scalar> ev(k), pv(k);
    for (auto& v : ev) v = rng.uniform(0.05, 1.0);
    for (auto& v : pv) v = rng.uniform(0.05, 1.0);
    Tensor e = Tensor::from({k}, ev);
    Tensor p = Tensor::from({k}, pv);
    Tensor pi = combine_probabilities(e, p);
    const double c = rng.uniform(0.1, 10.0);
    Tensor pi_scaled = combine_probabilities(ops::scale(e, c), p);
    Scalar total = 0;
    std::size_t best = 0, best_scaled = 0;
    for (std::size_t i = 0; i < k; ++i) {
      total += pi.at(i);
      CHECK(pi.at(i) > 0.0);
      if (pi.at(i) > pi.at(best)) best = i;
      if (pi_scaled.at(i) > pi_scaled.at(best_scaled)) best_scaled = i;
    }
    CHECK(std::abs(total - 1.0) <= 1e-9);
    CHECK(best == best_scaled);
  }
}

TEST_CASE("loss_extractor matches -log P") {
  WordProbs wp;
  wp.words = {3, 4};
  wp.first_occurrence = {0, 1};
  wp.probs = Tensor::from({2}, {0.5, 0.5});
  CHECK(loss_extractor(wp, 3).item() == doctest::Approx(0.69314718056));
  wp.probs = Tensor::from({2}, {1.0, 0.0});
  CHECK(loss_extractor(wp, 3).item() == doctest::Approx(0.0));
}

TEST_CASE("batch mean of two extractor losses") {
  WordProbs a;
  a.words = {3};
  a.first_occurrence = {0};
  a.probs = Tensor::from({1}, {0.5});
  WordProbs b = a;
  b.probs = Tensor::from({1}, {1.0});
  Tensor mean = ops::scale(
      ops::add(loss_extractor(a, 3), loss_extractor(b, 3)), 0.5);
  CHECK(mean.item() == doctest::Approx(0.3466).epsilon(1e-3));
}

TEST_CASE("loss_extractor rejects zero-support gold") {
  WordProbs wp;
  wp.words = {4};
  wp.first_occurrence = {0};
  wp.probs = Tensor::from({1}, {1.0});
  CHECK_THROWS_AS(loss_extractor(wp, 3), DegenerateInputError);
}

TEST_CASE("loss_reasoner worked margin example") {
  Tensor pi = Tensor::from({3}, {0.5, 0.3, 0.48});
  CHECK(loss_reasoner(pi, 0, 0.04).item() == doctest::Approx(0.02));
}

TEST_CASE("loss_reasoner is zero when the margin is satisfied") {
  Tensor pi = Tensor::from({3}, {0.8, 0.1, 0.1});
  CHECK(loss_reasoner(pi, 0, 0.04).item() == 0.0);
}

TEST_CASE("loss_reasoner penalizes an exact tie by gamma") {
  Tensor pi = Tensor::from({2}, {0.5, 0.5});
  CHECK(loss_reasoner(pi, 0, 0.04).item() == doctest::Approx(0.04));
}

TEST_CASE("loss_total weighted combination") {
  TrainConfig config = micro_config();
  ModelParams params = zero_params(config, 13);
  Tensor le = Tensor::scalar(1.0);
  Tensor lr = Tensor::scalar(0.02);
  CHECK(loss_total(le, lr, 50.0, params, 0.001).item() ==
        doctest::Approx(2.0));
  // lambda = 0 reduces to the extractor objective.
  CHECK(loss_total(le, lr, 0.0, params, 0.0).item() == doctest::Approx(1.0));
}

TEST_CASE("l2 penalty on a single weight") {
  TrainConfig config = micro_config();
  ModelParams params = zero_params(config, 13);
  params.reasoner.bilinear.at(0) = 2.0;
  CHECK(l2_penalty(params, 0.001).item() == doctest::Approx(0.004));
  // Biases never enter the penalty.
  params.reasoner.sent_bias.at(0) = 100.0;
  CHECK(l2_penalty(params, 0.001).item() == doctest::Approx(0.004));
}

TEST_CASE("adam first step moves by about the learning rate") {
  Tensor w = Tensor::scalar(0.0, true);
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  AdamState state = AdamState::init(params);
  w.grad()[0] = 1.0;
  adam_step(params, state, 0.001);
  CHECK(w.at(0) == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam zero gradient means zero update") {
  Tensor w = Tensor::scalar(1.5, true);
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  AdamState state = AdamState::init(params);
  w.grad();  // allocated, all zero
  adam_step(params, state, 0.1);
  CHECK(w.at(0) == 1.5);
}

TEST_CASE("adam rejects non-finite gradients naming the tensor") {
  Tensor w = Tensor::scalar(1.0, true);
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  AdamState state = AdamState::init(params);
  w.grad()[0] = std::nan("");
  CHECK_THROWS_WITH_AS(adam_step(params, state, 0.1),
                       doctest::Contains("w"), NumericError);
}

TEST_CASE("adam converges on (w-3)^2 and tracks a direct simulation") {
  Tensor w = Tensor::scalar(0.0, true);
  std::vector<std::pair<std::string, Tensor>> params = {{"w", w}};
  AdamState state = AdamState::init(params);

  // Independent oracle: the same recurrence in plain doubles.
  double sim_w = 0.0, sim_m = 0.0, sim_v = 0.0;
  for (int step = 1; step <= 100; ++step) {
    w.zero_grad();
    Tape tape;
    {
      TapeScope scope(tape);
      Tensor diff = ops::add_const(w, -3.0);
      tape.backward(ops::mul(diff, diff));
    }
    adam_step(params, state, 0.1);

    const double g = 2.0 * (sim_w - 3.0);
    sim_m = 0.9 * sim_m + 0.1 * g;
    sim_v = 0.999 * sim_v + 0.001 * g * g;
    const double m_hat = sim_m / (1.0 - std::pow(0.9, step));
    const double v_hat = sim_v / (1.0 - std::pow(0.999, step));
    sim_w -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    sim_w = static_cast<double>(static_cast<float>(sim_w));
    CHECK(w.at(0) == doctest::Approx(sim_w).epsilon(1e-6));
  }
  CHECK(std::abs(w.at(0) - 3.0) < 0.1);
}

TEST_CASE("early stopping follows the patience rule trace") {
  EarlyStopping stopper(2);
  CHECK_FALSE(stopper.observe(0.5));
  CHECK_FALSE(stopper.observe(0.6));
  CHECK_FALSE(stopper.observe(0.58));
  CHECK(stopper.observe(0.59));
  CHECK(stopper.best_epoch() == 2);
  CHECK(stopper.best_metric() == 0.6);
}

TEST_CASE("forward with zero parameters is uniform and hand-computable") {
  TrainConfig config = micro_config();
  // Text of 9 tokens: candidate 3 occurs twice, candidate 9 once.
  ClozeExample ex = micro_example();
  ModelParams params = zero_params(config, 13);
  ForwardOptions fo;
  ExampleOutput out = forward_example(params, config, ex, fo);
  // Uniform attention: P(3) = 2/9, P(9) = 1/9.
  CHECK(out.word_probs.probs.at(0) == doctest::Approx(2.0 / 9));
  CHECK(out.word_probs.probs.at(1) == doctest::Approx(1.0 / 9));
  CHECK(out.extractor_prediction == 3);
  // Zero reasoner gives uniform evidence, so pi follows p.
  CHECK(out.full_prediction == 3);
  CHECK(out.evidence.evidence.at(0) == doctest::Approx(0.5));
  CHECK(out.combined.at(0) == doctest::Approx(2.0 / 3));
}

TEST_CASE("evaluate matches a hand-computed fixture accuracy") {
  TrainConfig config = micro_config();
  ModelParams params = zero_params(config, 13);
  // With zero parameters the prediction is the most frequent candidate,
  // earliest first occurrence on ties.
  std::vector<ClozeExample> fixture;
  for (int i = 0; i < 10; ++i) {
    ClozeExample ex = micro_example();
    ex.source_id = "fx" + std::to_string(i);
    // Examples 0..6 keep gold 3 (predicted); 7..9 switch gold to 9 (missed).
    if (i >= 7) ex.answer = 9;
    fixture.push_back(ex);
  }
  EvalReport report =
      evaluate(params, config, fixture, EvalMode::full, /*workers=*/1);
  CHECK(report.total == 10);
  CHECK(report.correct_full == 7);
  CHECK(report.correct_extractor == 7);
  CHECK(report.accuracy(EvalMode::full) == doctest::Approx(0.7));
  CHECK(report.forced == 0);  // no gold-forcing at evaluation
}

TEST_CASE("evaluate with parallel workers matches single-threaded") {
  TrainConfig config = micro_config();
  Rng rng(71);
  ModelParams params = ModelParams::init(config, 13, rng);
  std::vector<ClozeExample> fixture;
  for (int i = 0; i < 16; ++i) {
    ClozeExample ex = micro_example();
    ex.source_id = "p" + std::to_string(i);
    if (i % 3 == 0) ex.answer = 9;
    fixture.push_back(ex);
  }
  EvalReport serial = evaluate(params, config, fixture, EvalMode::full, 1);
  EvalReport parallel = evaluate(params, config, fixture, EvalMode::full, 4);
  CHECK(serial.correct_full == parallel.correct_full);
  REQUIRE(serial.predictions.size() == parallel.predictions.size());
  for (std::size_t i = 0; i < serial.predictions.size(); ++i) {
    CHECK(serial.predictions[i].predicted_full ==
          parallel.predictions[i].predicted_full);
    CHECK(serial.predictions[i].pi == parallel.predictions[i].pi);
  }
}

TEST_CASE("zero-support examples are automatic misses with diagnostics") {
  TrainConfig config = micro_config();
  ModelParams params = zero_params(config, 13);
  ClozeExample ex = micro_example();
  ex.answer = 12;  // not in the text
  ex.candidates = {12};
  EvalReport report = evaluate(params, config, {ex}, EvalMode::full);
  CHECK(report.total == 1);
  CHECK(report.zero_support == 1);
  CHECK(report.correct_full == 0);
  CHECK(report.predictions[0].predicted_full == -1);
}

TEST_CASE("checkpoint round-trip is byte-identical and evaluates equally") {
  TrainConfig config = micro_config();
  Rng rng(81);
  ModelParams params = ModelParams::init(config, 13, rng);
  const std::uint64_t vocab_hash = 0xabcdef1234567890ULL;
  const std::string path1 = "/tmp/epireader_ckpt_a.epir";
  const std::string path2 = "/tmp/epireader_ckpt_b.epir";
  save_checkpoint(path1, params, config, vocab_hash);
  LoadedCheckpoint loaded = load_checkpoint(path1, vocab_hash);
  save_checkpoint(path2, loaded.params, loaded.config, loaded.vocab_hash);
  CHECK(file_bytes(path1) == file_bytes(path2));
  CHECK(loaded.config == config);

  std::vector<ClozeExample> fixture = {micro_example()};
  EvalReport a = evaluate(params, config, fixture, EvalMode::full);
  EvalReport b = evaluate(loaded.params, loaded.config, fixture, EvalMode::full);
  REQUIRE(a.predictions.size() == b.predictions.size());
  CHECK(a.predictions[0].predicted_full == b.predictions[0].predicted_full);
  CHECK(a.predictions[0].pi == b.predictions[0].pi);  // bit-exact
}

TEST_CASE("checkpoint rejects a wrong vocabulary hash") {
  TrainConfig config = micro_config();
  Rng rng(82);
  ModelParams params = ModelParams::init(config, 13, rng);
  const std::string path = "/tmp/epireader_ckpt_hash.epir";
  save_checkpoint(path, params, config, 111);
  CHECK_THROWS_AS(load_checkpoint(path, 222), CheckpointError);
  CHECK_NOTHROW(load_checkpoint(path, 111));
  CHECK_NOTHROW(load_checkpoint(path));  // no expectation, no check
}

TEST_CASE("checkpoint rejects corruption naming the field") {
  TrainConfig config = micro_config();
  Rng rng(83);
  ModelParams params = ModelParams::init(config, 13, rng);
  const std::string path = "/tmp/epireader_ckpt_corrupt.epir";
  save_checkpoint(path, params, config, 1);
  std::string bytes = file_bytes(path);
  std::ofstream(path, std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_WITH_AS(load_checkpoint(path),
                       doctest::Contains("truncated"), CheckpointError);

  std::ofstream(path, std::ios::binary) << "NOPE" << bytes.substr(4);
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"),
                       CheckpointError);
}

TEST_CASE("lambda = 0 isolates training from the reasoner parameters") {
  TrainConfig config = micro_config();
  config.lambda = 0.0;
  config.l2 = 0.0;
  Rng rng(91);
  ModelParams a = ModelParams::init(config, 13, rng);
  ModelParams b = a.clone();
  // Scramble every reasoner tensor in b.
  Rng scramble(992);
  for (auto& [name, t] : b.reasoner.named("reasoner")) {
    for (std::size_t i = 0; i < t.size(); ++i)
      t.at(i) = scramble.uniform(-0.5, 0.5);
  }

  ClozeExample ex = micro_example();
  auto step = [&](ModelParams& params) {
    auto named = params.named_tensors();
    AdamState state = AdamState::init(named);
    for (auto& [name, t] : named) t.zero_grad();
    Tape tape;
    TapeScope scope(tape);
    ForwardOptions fo;
    fo.training = true;
    fo.run_reasoner = false;
    ExampleOutput out = forward_example(params, config, ex, fo);
    tape.backward(loss_extractor(out.word_probs, ex.answer));
    adam_step(named, state, config.learning_rate);
  };
  step(a);
  step(b);

  // Extractor-side parameters moved identically.
  auto names_a = a.named_tensors();
  auto names_b = b.named_tensors();
  for (std::size_t k = 0; k < names_a.size(); ++k) {
    if (names_a[k].first.rfind("reasoner", 0) == 0) continue;
    const Tensor& ta = names_a[k].second;
    const Tensor& tb = names_b[k].second;
    for (std::size_t i = 0; i < ta.size(); ++i) {
      CHECK(ta.at(i) == tb.at(i));
    }
  }
  // And extractor-mode predictions agree bit-exactly.
  EvalReport ra = evaluate(a, config, {ex}, EvalMode::extractor_only);
  EvalReport rb = evaluate(b, config, {ex}, EvalMode::extractor_only);
  CHECK(ra.predictions[0].predicted_extractor ==
        rb.predictions[0].predicted_extractor);
  CHECK(ra.predictions[0].p == rb.predictions[0].p);
}

TEST_CASE("model_grad_check passes on the micro instance") {
  GradCheckReport report = model_grad_check(7, 1e-5, 1e-4);
  for (const auto& entry : report.entries) {
    CHECK_MESSAGE(entry.pass, entry.name << " rel err " << entry.max_rel_err);
  }
}

TEST_CASE("model_grad_check localizes an injected conv fault") {
  GradCheckReport report = model_grad_check(7, 1e-5, 1e-4, "conv");
  bool sent_filters_fail = false, hyp_filters_fail = false;
  for (const auto& entry : report.entries) {
    if (entry.name == "reasoner.sent_filters") sent_filters_fail = !entry.pass;
    if (entry.name == "reasoner.hyp_filters") hyp_filters_fail = !entry.pass;
    if (entry.name == "embedding.weights") CHECK(entry.pass);
  }
  CHECK(sent_filters_fail);
  CHECK(hyp_filters_fail);
}

TEST_CASE("model_grad_check covers every parameter tensor exactly once") {
  GradCheckReport report = model_grad_check(7, 1e-4, 1e-3);
  TrainConfig config = micro_config();
  Rng rng(1);
  ModelParams params = ModelParams::init(config, 13, rng);
  auto named = params.named_tensors();
  REQUIRE(report.entries.size() == named.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    CHECK(report.entries[i].name == named[i].first);
  }
}

TEST_CASE("at init, full mode tracks extractor mode up to evidence noise") {
  SyntheticSpec spec;
  spec.num_examples = 50;
  spec.seed = 21;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  auto examples = encode_examples(corpus.train, vocab);

  TrainConfig config;
  Rng rng(22);
  ModelParams params =
      ModelParams::init(config, static_cast<int>(vocab.size()), rng);
  EvalReport report = evaluate(params, config, examples, EvalMode::full);
  std::size_t agree = 0;
  for (const auto& pr : report.predictions) {
    if (pr.predicted_full == pr.predicted_extractor) ++agree;
    // Untrained evidence stays near uniform over the slate.
    for (double e : pr.e) {
      CHECK(std::abs(e - 1.0 / static_cast<double>(pr.e.size())) < 0.02);
    }
  }
  CHECK(agree >= report.predictions.size() * 6 / 10);
}

TEST_CASE("training is deterministic and improves on the locate task") {
  SyntheticSpec spec;
  spec.num_examples = 150;
  spec.seed = 5;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  auto train_set = encode_examples(corpus.train, vocab);
  auto valid_set = encode_examples(corpus.valid, vocab);

  TrainConfig config;
  config.max_epochs = 3;
  config.seed = 7;
  TrainResult first = train(config, static_cast<int>(vocab.size()),
                            train_set, valid_set);
  TrainResult second = train(config, static_cast<int>(vocab.size()),
                             train_set, valid_set);
  REQUIRE(first.history.size() == second.history.size());
  for (std::size_t i = 0; i < first.history.size(); ++i) {
    CHECK(first.history[i].train_loss == second.history[i].train_loss);
    CHECK(first.history[i].valid_acc_full == second.history[i].valid_acc_full);
  }
  CHECK(first.best_accuracy >= 0.9);
  // Identical parameters out of both runs.
  auto pa = first.params.named_tensors();
  auto pb = second.params.named_tensors();
  for (std::size_t k = 0; k < pa.size(); ++k) {
    const Tensor& ta = pa[k].second;
    const Tensor& tb = pb[k].second;
    for (std::size_t i = 0; i < ta.size(); ++i) CHECK(ta.at(i) == tb.at(i));
  }
}

TEST_CASE("training loss is non-increasing early, in most seeds") {
  SyntheticSpec spec;
  spec.num_examples = 120;
  spec.seed = 3;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  auto train_set = encode_examples(corpus.train, vocab);
  auto valid_set = encode_examples(corpus.valid, vocab);

  int good_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainConfig config;
    config.max_epochs = 5;
    config.patience = 5;
    config.seed = seed;
    TrainResult result = train(config, static_cast<int>(vocab.size()),
                               train_set, valid_set);
    bool non_increasing = true;
    for (std::size_t i = 1; i < result.history.size(); ++i) {
      if (result.history[i].train_loss >
          result.history[i - 1].train_loss + 1e-9) {
        non_increasing = false;
      }
    }
    if (non_increasing) ++good_seeds;
  }
  CHECK(good_seeds >= 4);
}

TEST_CASE("train drops zero-support examples and counts them") {
  SyntheticSpec spec;
  spec.num_examples = 40;
  SyntheticCorpus corpus = generate_synthetic(spec);
  Vocabulary vocab = Vocabulary::build(corpus.train);
  auto train_set = encode_examples(corpus.train, vocab);
  auto valid_set = encode_examples(corpus.valid, vocab);
  // Break the support of three training examples.
  for (int i = 0; i < 3; ++i) train_set[i].answer = Vocabulary::kUnkId;

  TrainConfig config;
  config.max_epochs = 1;
  TrainResult result =
      train(config, static_cast<int>(vocab.size()), train_set, valid_set);
  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].skipped_zero_support == 3);
}
