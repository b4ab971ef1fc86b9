#include "epireader/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "epireader/ops.hpp"

namespace epi {

ModelParams ModelParams::init(const TrainConfig& config, int vocab_size,
                              Rng& rng) {
  config.validate();
  ModelParams p;
  p.embedding = EmbeddingTable::init(config.embedding_dim, vocab_size,
                                     Vocabulary::kPadId, rng);
  p.text_forward = GruParams::init(config.embedding_dim, config.hidden_dim, rng);
  p.text_backward = GruParams::init(config.embedding_dim, config.hidden_dim, rng);
  p.question_forward =
      GruParams::init(config.embedding_dim, config.hidden_dim, rng);
  p.question_backward =
      GruParams::init(config.embedding_dim, config.hidden_dim, rng);
  p.reasoner = ReasonerParams::init(config.embedding_dim, config.filter_width,
                                    config.num_filters, config.agg_hidden_dim,
                                    rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_tensors()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding.weights", embedding.weights);
  for (auto& nt : text_forward.named("text_forward")) out.push_back(nt);
  for (auto& nt : text_backward.named("text_backward")) out.push_back(nt);
  for (auto& nt : question_forward.named("question_forward")) out.push_back(nt);
  for (auto& nt : question_backward.named("question_backward"))
    out.push_back(nt);
  for (auto& nt : reasoner.named("reasoner")) out.push_back(nt);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::weight_tensors()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& nt : named_tensors()) {
    const std::string& name = nt.first;
    const bool bias = name.find(".b_") != std::string::npos ||
                      name.ends_with("_bias") || name.ends_with(".out_bias");
    if (!bias) out.push_back(nt);
  }
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams p = *this;
  p.embedding.weights = embedding.weights.clone();
  auto clone_gru = [](GruParams& g) {
    g.w_update = g.w_update.clone();
    g.u_update = g.u_update.clone();
    g.b_update = g.b_update.clone();
    g.w_reset = g.w_reset.clone();
    g.u_reset = g.u_reset.clone();
    g.b_reset = g.b_reset.clone();
    g.w_cand = g.w_cand.clone();
    g.u_cand = g.u_cand.clone();
    g.b_cand = g.b_cand.clone();
  };
  clone_gru(p.text_forward);
  clone_gru(p.text_backward);
  clone_gru(p.question_forward);
  clone_gru(p.question_backward);
  p.reasoner.sent_filters = reasoner.sent_filters.clone();
  p.reasoner.sent_bias = reasoner.sent_bias.clone();
  p.reasoner.hyp_filters = reasoner.hyp_filters.clone();
  p.reasoner.hyp_bias = reasoner.hyp_bias.clone();
  p.reasoner.bilinear = reasoner.bilinear.clone();
  clone_gru(p.reasoner.aggregator);
  p.reasoner.out_weight = reasoner.out_weight.clone();
  p.reasoner.out_bias = reasoner.out_bias.clone();
  return p;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors()) n += t.size();
  return n;
}

Tensor combine_probabilities(const Tensor& evidence, const Tensor& probs) {
  if (evidence.rank() != 1 || probs.rank() != 1 ||
      evidence.dim(0) != probs.dim(0)) {
    throw DimensionError("combine_probabilities: evidence " +
                         shape_string(evidence.shape()) + " vs probs " +
                         shape_string(probs.shape()));
  }
  Tensor product = ops::mul(evidence, probs);
  Scalar total = 0;
  for (std::size_t i = 0; i < product.size(); ++i) total += product.at(i);
  if (total <= 0.0) {
    throw DegenerateInputError(
        "combine_probabilities: every evidence-probability product is zero");
  }
  return ops::div_scalar(product, ops::sum(product));
}

Tensor loss_extractor(const WordProbs& word_probs, int gold) {
  const int slot = word_probs.slot_of(gold);
  if (slot < 0) {
    throw DegenerateInputError(
        "loss_extractor: gold answer has no support in the text");
  }
  return ops::scale(
      ops::log_op(ops::pick(word_probs.probs, static_cast<std::size_t>(slot))),
      -1.0);
}

Tensor loss_reasoner(const Tensor& combined, std::size_t gold_index,
                     double gamma) {
  if (combined.rank() != 1 || gold_index >= combined.dim(0)) {
    throw DimensionError("loss_reasoner: gold index " +
                         std::to_string(gold_index) + " outside " +
                         shape_string(combined.shape()));
  }
  Tensor gold_prob = ops::pick(combined, gold_index);
  std::vector<Tensor> hinges;
  for (std::size_t k = 0; k < combined.dim(0); ++k) {
    if (k == gold_index) continue;
    hinges.push_back(ops::relu(
        ops::add_const(ops::sub(ops::pick(combined, k), gold_prob), gamma)));
  }
  if (hinges.empty()) return Tensor::scalar(0.0);
  return ops::sum(ops::concat(hinges));
}

Tensor l2_penalty(const ModelParams& params, double coeff) {
  Tensor acc = Tensor::scalar(0.0);
  for (const auto& [name, t] : params.weight_tensors()) {
    acc = ops::add(acc, ops::sum_squares(t));
  }
  return ops::scale(acc, coeff);
}

Tensor loss_total(const Tensor& extractor_loss, const Tensor& reasoner_loss,
                  double lambda, const ModelParams& params, double l2_coeff) {
  return ops::add(
      ops::add(extractor_loss, ops::scale(reasoner_loss, lambda)),
      l2_penalty(params, l2_coeff));
}

namespace {

int argmax_first(const Tensor& values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values.at(i) > values.at(best)) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace

ExampleOutput forward_example(const ModelParams& params,
                              const TrainConfig& config,
                              const ClozeExample& example,
                              const ForwardOptions& options) {
  ExampleOutput out;
  out.zero_support_gold = !example.gold_supported();

  Tensor text_emb = params.embedding.lookup(example.text);
  std::vector<std::uint8_t> mask(example.text.size(), 1);
  BiGruEncoding text_enc =
      encode_text(params.text_forward, params.text_backward, text_emb, mask);
  Tensor question_emb = params.embedding.lookup(example.question);
  Tensor question_vec = encode_question(params.question_forward,
                                        params.question_backward, question_emb);
  Tensor attention = pointer_scores(text_enc, question_vec);
  out.word_probs = aggregate_word_probs(attention, example.text,
                                        &example.candidates,
                                        Vocabulary::kPadId);
  if (out.word_probs.words.empty()) {
    out.no_supported_candidates = true;
    return out;
  }
  out.extractor_prediction =
      out.word_probs.words[static_cast<std::size_t>(
          argmax_first(out.word_probs.probs))];

  out.slate = select_top_k(out.word_probs, config.top_k,
                           std::optional<int>(example.answer),
                           options.training, options.stats);

  if (options.run_reasoner) {
    std::vector<Hypothesis> hypotheses = form_hypotheses(
        example.question, Vocabulary::kPlaceholderId, out.slate);
    SentenceSplit split =
        split_sentences(example.text, &example.sentence_ends);
    out.evidence =
        reason(params.reasoner, params.embedding, example.text, split,
               example.question, example.placeholder_pos, hypotheses);
    Tensor evidence_used = out.evidence.evidence;
    if (options.uniform_evidence) {
      const std::size_t k = out.slate.size();
      evidence_used = Tensor::from(
          {k}, std::vector<Scalar>(k, 1.0 / static_cast<double>(k)));
    }
    Tensor probs_used = config.detach_extractor_probs
                            ? out.slate.probs.detach()
                            : out.slate.probs;
    out.combined = combine_probabilities(evidence_used, probs_used);
    out.full_prediction =
        out.slate.answers[static_cast<std::size_t>(argmax_first(out.combined))];
  }
  return out;
}

AdamState AdamState::init(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState state;
  for (const auto& [name, t] : params) {
    state.first_moment.emplace_back(t.size(), 0.0);
    state.second_moment.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adam_step(std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double learning_rate) {
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: state does not match the parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = params[k].second;
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const bool has = t.has_grad();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const Scalar g = has ? t.grad()[i] : 0.0;
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in '" +
                           params[k].first + "', step aborted");
      }
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const Scalar m_hat = m[i] / bc1;
      const Scalar v_hat = v[i] / bc2;
      Scalar next = t.at(i) - learning_rate * m_hat /
                                  (std::sqrt(v_hat) + state.epsilon);
      // Keep parameters on the f32 grid the checkpoint format stores.
      t.at(i) = static_cast<double>(static_cast<float>(next));
    }
  }
}

bool EarlyStopping::observe(double metric) {
  ++epoch_;
  if (metric > best_ || best_epoch_ == 0) {
    best_ = metric;
    best_epoch_ = epoch_;
    streak_ = 0;
  } else {
    ++streak_;
  }
  return streak_ >= patience_;
}

EvalReport evaluate(const ModelParams& params, const TrainConfig& config,
                    const std::vector<ClozeExample>& examples, EvalMode mode,
                    int workers, bool uniform_evidence) {
  const std::size_t n = examples.size();
  std::vector<Prediction> predictions(n);
  const int worker_count = std::max(1, workers);
  std::vector<ExtractorStats> stats(static_cast<std::size_t>(worker_count));

  auto run_range = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < n;
         i += static_cast<std::size_t>(worker_count)) {
      const ClozeExample& ex = examples[i];
      Prediction& pr = predictions[i];
      pr.source_id = ex.source_id;
      pr.gold = ex.answer;
      pr.zero_support = !ex.gold_supported();
      ForwardOptions fo;
      fo.training = false;
      fo.run_reasoner = mode == EvalMode::full;
      fo.uniform_evidence = uniform_evidence;
      fo.stats = &stats[static_cast<std::size_t>(w)];
      ExampleOutput out = forward_example(params, config, ex, fo);
      if (out.no_supported_candidates) continue;
      pr.predicted_extractor = out.extractor_prediction;
      pr.slate = out.slate.answers;
      for (std::size_t j = 0; j < out.slate.size(); ++j) {
        pr.p.push_back(out.slate.probs.at(j));
      }
      if (mode == EvalMode::full) {
        pr.predicted_full = out.full_prediction;
        for (std::size_t j = 0; j < out.slate.size(); ++j) {
          pr.e.push_back(out.evidence.evidence.at(j));
          pr.pi.push_back(out.combined.at(j));
        }
      }
    }
  };

  if (worker_count == 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int w = 0; w < worker_count; ++w) {
      pool.emplace_back([&, w]() {
        try {
          run_range(w);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  EvalReport report;
  report.total = n;
  report.predictions = std::move(predictions);
  for (const ExtractorStats& s : stats) report.forced += s.forced;
  for (const Prediction& pr : report.predictions) {
    if (pr.zero_support) ++report.zero_support;
    if (pr.predicted_extractor == pr.gold) ++report.correct_extractor;
    if (pr.predicted_full == pr.gold) ++report.correct_full;
  }
  return report;
}

TrainResult train(const TrainConfig& config, int vocab_size,
                  const std::vector<ClozeExample>& train_set,
                  const std::vector<ClozeExample>& valid_set,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  config.validate();
  if (train_set.empty() || valid_set.empty()) {
    throw ConfigError("train: empty train or validation split");
  }

  Rng init_rng(config.seed);
  ModelParams params = ModelParams::init(config, vocab_size, init_rng);
  auto named = params.named_tensors();
  AdamState adam = AdamState::init(named);
  EarlyStopping stopper(config.patience);
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result;
  result.params = params.clone();

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t epoch_seed = shuffle_rng.next_u64();
    const std::vector<Batch> batches =
        make_batches(train_set, static_cast<std::size_t>(config.batch_size),
                     epoch_seed, /*shuffle=*/true);

    double le_sum = 0.0, lr_sum = 0.0;
    std::size_t live_total = 0, skipped = 0;
    ExtractorStats stats;
    for (const Batch& batch : batches) {
      std::vector<ClozeExample> live;
      live.reserve(batch.count);
      for (std::size_t i = 0; i < batch.count; ++i) {
        ClozeExample ex = batch.restore(i);
        if (!ex.gold_supported()) {
          ++skipped;
          continue;
        }
        live.push_back(std::move(ex));
      }
      if (live.empty()) continue;

      for (auto& [name, t] : named) t.zero_grad();
      const double inv = 1.0 / static_cast<double>(live.size());
      for (const ClozeExample& ex : live) {
        Tape tape;
        TapeScope scope(tape);
        ForwardOptions fo;
        fo.training = true;
        fo.run_reasoner = config.lambda > 0.0;
        fo.stats = &stats;
        ExampleOutput out = forward_example(params, config, ex, fo);
        Tensor le = loss_extractor(out.word_probs, ex.answer);
        Tensor lr = Tensor::scalar(0.0);
        if (config.lambda > 0.0) {
          lr = loss_reasoner(out.combined, *out.slate.gold_index, config.gamma);
        }
        Tensor contribution =
            ops::scale(ops::add(le, ops::scale(lr, config.lambda)), inv);
        tape.backward(contribution);
        le_sum += le.item();
        lr_sum += lr.item();
        ++live_total;
      }
      if (config.l2 > 0.0) {
        Tape weight_tape;
        TapeScope scope(weight_tape);
        Tensor penalty = l2_penalty(params, config.l2);
        weight_tape.backward(penalty);
      }
      adam_step(named, adam, config.learning_rate);
    }

    EvalReport valid_report =
        evaluate(params, config, valid_set, EvalMode::full);

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.loss_extractor =
        live_total ? le_sum / static_cast<double>(live_total) : 0.0;
    metrics.loss_reasoner =
        live_total ? lr_sum / static_cast<double>(live_total) : 0.0;
    metrics.train_loss = metrics.loss_extractor +
                         config.lambda * metrics.loss_reasoner +
                         l2_penalty(params, config.l2).item();
    metrics.valid_acc_extractor = valid_report.accuracy(EvalMode::extractor_only);
    metrics.valid_acc_full = valid_report.accuracy(EvalMode::full);
    metrics.skipped_zero_support = skipped;
    metrics.wallclock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    result.history.push_back(metrics);
    if (on_epoch) on_epoch(metrics);

    const bool stop = stopper.observe(metrics.valid_acc_full);
    if (stopper.best_epoch() == epoch) {
      result.params = params.clone();
      result.best_epoch = epoch;
      result.best_accuracy = stopper.best_metric();
    }
    if (stop) break;
  }
  return result;
}

GradCheckReport model_grad_check(std::uint64_t seed, double epsilon,
                                 double tolerance,
                                 const std::string& fault_op) {
  struct FaultGuard {
    explicit FaultGuard(const std::string& op) { ops::set_backward_fault(op); }
    ~FaultGuard() { ops::set_backward_fault(""); }
  } guard(fault_op);

  TrainConfig config;
  config.embedding_dim = 6;
  config.hidden_dim = 4;
  config.top_k = 2;
  config.filter_width = 3;
  config.num_filters = 3;
  config.agg_hidden_dim = 3;
  config.lambda = 50.0;
  config.gamma = 0.04;
  config.l2 = 0.001;
  config.seed = seed;

  // Two sentences; candidate 3 occurs twice, the gold answer 9 once, so the
  // margin loss starts active and gradient flows through the whole second
  // stage, not just the extractor.
  ClozeExample example;
  example.text = {3, 4, 5, 6, 7, 8, 9, 3, 10};
  example.sentence_ends = {5, 9};
  example.question = {11, Vocabulary::kPlaceholderId, 12, 6};
  example.placeholder_pos = 1;
  example.answer = 9;
  example.candidates = {3, 9};
  example.source_id = "micro";

  const int vocab_size = 13;
  Rng rng(seed);
  ModelParams params = ModelParams::init(config, vocab_size, rng);
  // Positive conv biases keep the ReLUs alive at +-0.05-scale init, so the
  // check exercises the convolution backward paths for every seed.
  for (std::size_t i = 0; i < params.reasoner.sent_bias.size(); ++i) {
    params.reasoner.sent_bias.at(i) = 0.05;
    params.reasoner.hyp_bias.at(i) = 0.05;
  }
  auto named = params.named_tensors();

  auto f = [&]() -> Tensor {
    ForwardOptions fo;
    fo.training = true;
    ExampleOutput out = forward_example(params, config, example, fo);
    Tensor le = loss_extractor(out.word_probs, example.answer);
    Tensor lr =
        loss_reasoner(out.combined, *out.slate.gold_index, config.gamma);
    return loss_total(le, lr, config.lambda, params, config.l2);
  };
  return grad_check(f, named, epsilon, tolerance);
}

}  // namespace epi
