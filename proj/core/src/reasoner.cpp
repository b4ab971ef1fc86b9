#include "epireader/reasoner.hpp"

#include <algorithm>
#include <limits>

#include "epireader/errors.hpp"
#include "epireader/ops.hpp"

namespace epi {

namespace {

Tensor init_uniform(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.at(i) = static_cast<double>(static_cast<float>(rng.uniform(-0.05, 0.05)));
  }
  return t;
}

}  // namespace

ReasonerParams ReasonerParams::init(int embedding_dim, int filter_width,
                                    int num_filters, int agg_hidden_dim,
                                    Rng& rng) {
  const auto d = static_cast<std::size_t>(embedding_dim);
  const auto m = static_cast<std::size_t>(filter_width);
  const auto nf = static_cast<std::size_t>(num_filters);
  ReasonerParams p;
  p.filter_width = filter_width;
  p.num_filters = num_filters;
  p.sent_filters = init_uniform({d + 2, m, nf}, rng);
  p.sent_bias = init_uniform({nf}, rng);
  p.hyp_filters = init_uniform({d, m, nf}, rng);
  p.hyp_bias = init_uniform({nf}, rng);
  p.bilinear = init_uniform({nf, nf}, rng);
  p.aggregator = GruParams::init(2 * num_filters + 1, agg_hidden_dim, rng);
  p.out_weight = init_uniform({static_cast<std::size_t>(agg_hidden_dim)}, rng);
  p.out_bias = init_uniform({1}, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> ReasonerParams::named(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out = {
      {prefix + ".sent_filters", sent_filters},
      {prefix + ".sent_bias", sent_bias},
      {prefix + ".hyp_filters", hyp_filters},
      {prefix + ".hyp_bias", hyp_bias},
      {prefix + ".bilinear", bilinear},
  };
  for (auto& nt : aggregator.named(prefix + ".aggregator")) {
    out.push_back(std::move(nt));
  }
  out.emplace_back(prefix + ".out_weight", out_weight);
  out.emplace_back(prefix + ".out_bias", out_bias);
  return out;
}

std::size_t ReasonerParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named("r")) n += t.size();
  return n;
}

std::vector<Hypothesis> form_hypotheses(const std::vector<int>& question,
                                        int placeholder_id,
                                        const CandidateSlate& slate) {
  std::size_t placeholder_count = 0;
  std::size_t placeholder_pos = 0;
  for (std::size_t i = 0; i < question.size(); ++i) {
    if (question[i] == placeholder_id) {
      ++placeholder_count;
      placeholder_pos = i;
    }
  }
  if (placeholder_count != 1) {
    throw DegenerateInputError(
        "form_hypotheses: malformed question, expected exactly one "
        "placeholder, found " +
        std::to_string(placeholder_count));
  }
  std::vector<Hypothesis> out;
  out.reserve(slate.size());
  for (std::size_t k = 0; k < slate.size(); ++k) {
    Hypothesis h;
    h.tokens = question;
    h.tokens[placeholder_pos] = slate.answers[k];
    h.candidate = slate.answers[k];
    h.slate_index = k;
    out.push_back(std::move(h));
  }
  return out;
}

SentenceSplit split_sentences(const std::vector<int>& text,
                              const std::vector<std::size_t>* boundary_hints,
                              const std::vector<int>& terminal_ids) {
  if (text.empty()) {
    throw DegenerateInputError("split_sentences: empty text");
  }
  SentenceSplit split;
  if (boundary_hints && !boundary_hints->empty()) {
    std::size_t begin = 0;
    for (std::size_t end : *boundary_hints) {
      if (end <= begin || end > text.size()) {
        throw DegenerateInputError(
            "split_sentences: boundary hints do not cover the text");
      }
      split.spans.emplace_back(begin, end);
      begin = end;
    }
    if (begin != text.size()) {
      throw DegenerateInputError(
          "split_sentences: boundary hints do not cover the text");
    }
    return split;
  }
  std::size_t begin = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const bool terminal = std::find(terminal_ids.begin(), terminal_ids.end(),
                                    text[i]) != terminal_ids.end();
    if (terminal) {
      split.spans.emplace_back(begin, i + 1);
      begin = i + 1;
    }
  }
  if (begin < text.size()) {
    split.spans.emplace_back(begin, text.size());
  }
  return split;
}

Tensor word_match_features(const Tensor& sentence_emb, const Tensor& cand_emb,
                           const Tensor& question_emb,
                           std::optional<std::size_t> exclude_question_col) {
  if (sentence_emb.rank() != 2 || question_emb.rank() != 2 ||
      cand_emb.rank() != 1 || sentence_emb.dim(0) != cand_emb.dim(0) ||
      sentence_emb.dim(0) != question_emb.dim(0)) {
    throw DimensionError("word_match_features: sentence " +
                         shape_string(sentence_emb.shape()) + ", candidate " +
                         shape_string(cand_emb.shape()) + ", question " +
                         shape_string(question_emb.shape()));
  }
  const std::size_t dim = sentence_emb.dim(0);
  const std::size_t length = sentence_emb.dim(1);
  const std::size_t n_q = question_emb.dim(1);

  std::vector<std::size_t> allowed_cols;
  for (std::size_t c = 0; c < n_q; ++c) {
    if (exclude_question_col && *exclude_question_col == c) continue;
    allowed_cols.push_back(c);
  }
  if (allowed_cols.empty()) {
    throw DegenerateInputError(
        "word_match_features: no question words left after excluding the "
        "placeholder");
  }

  Tensor out = Tensor::zeros({2, length});
  std::vector<std::size_t> argmax_col(length, 0);
  for (std::size_t j = 0; j < length; ++j) {
    Scalar cand_dot = 0;
    for (std::size_t r = 0; r < dim; ++r)
      cand_dot += sentence_emb.at2(r, j) * cand_emb.at(r);
    out.at2(0, j) = cand_dot;

    Scalar best = -std::numeric_limits<Scalar>::infinity();
    std::size_t best_col = allowed_cols.front();
    for (std::size_t c : allowed_cols) {
      Scalar q_dot = 0;
      for (std::size_t r = 0; r < dim; ++r)
        q_dot += sentence_emb.at2(r, j) * question_emb.at2(r, c);
      if (q_dot > best) {
        best = q_dot;
        best_col = c;
      }
    }
    out.at2(1, j) = best;
    argmax_col[j] = best_col;
  }
  check_finite("word_match_features", out);

  Tape* tape = Tape::active();
  if (tape && (sentence_emb.requires_grad() || cand_emb.requires_grad() ||
               question_emb.requires_grad())) {
    out.set_requires_grad(true);
    Tensor sent = sentence_emb, cand = cand_emb, quest = question_emb;
    tape->record([sent, cand, quest, out, argmax_col, dim, length,
                  n_q]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t j = 0; j < length; ++j) {
        const Scalar g_cand = g[j];            // row 0
        const Scalar g_match = g[length + j];  // row 1
        const std::size_t qc = argmax_col[j];
        for (std::size_t r = 0; r < dim; ++r) {
          const Scalar s_rj = sent.at2(r, j);
          sent.accumulate(r * length + j, g_cand * cand.at(r) +
                                              g_match * quest.at2(r, qc));
          cand.accumulate(r, g_cand * s_rj);
          quest.accumulate(r * n_q + qc, g_match * s_rj);
        }
      }
    });
  }
  return out;
}

namespace {

Tensor conv_relu_pool(const Tensor& input, const Tensor& filters,
                      const Tensor& bias, int filter_width) {
  Tensor padded = input;
  const auto m = static_cast<std::size_t>(filter_width);
  if (input.dim(1) < m) padded = ops::pad_cols(input, m);
  return ops::maxpool_over_time(
      ops::relu(ops::conv1d_valid(padded, filters, bias)));
}

}  // namespace

Tensor encode_sentence(const ReasonerParams& params, const Tensor& augmented) {
  return conv_relu_pool(augmented, params.sent_filters, params.sent_bias,
                        params.filter_width);
}

Tensor encode_hypothesis(const ReasonerParams& params, const Tensor& hyp_emb) {
  return conv_relu_pool(hyp_emb, params.hyp_filters, params.hyp_bias,
                        params.filter_width);
}

Tensor bilinear_score(const Tensor& r_sentence, const Tensor& r_hypothesis,
                      const Tensor& bilinear) {
  return ops::dot(r_sentence, ops::matvec(bilinear, r_hypothesis));
}

EvidenceScores aggregate_evidence(
    const ReasonerParams& params,
    const std::vector<std::vector<Tensor>>& per_hypothesis_inputs) {
  if (per_hypothesis_inputs.empty()) {
    throw DegenerateInputError("aggregate_evidence: no hypotheses");
  }
  std::vector<Tensor> raw_scores;
  raw_scores.reserve(per_hypothesis_inputs.size());
  for (const auto& steps : per_hypothesis_inputs) {
    if (steps.empty()) {
      throw DegenerateInputError("aggregate_evidence: no sentences");
    }
    Tensor h =
        Tensor::zeros({static_cast<std::size_t>(params.aggregator.hidden_dim)});
    for (const Tensor& x : steps) h = gru_step(params.aggregator, x, h);
    raw_scores.push_back(
        ops::add(ops::dot(params.out_weight, h), params.out_bias));
  }
  EvidenceScores scores;
  scores.raw = ops::concat(raw_scores);
  scores.evidence = ops::softmax_stable(scores.raw);
  return scores;
}

EvidenceScores reason(const ReasonerParams& params,
                      const EmbeddingTable& embedding,
                      const std::vector<int>& text,
                      const SentenceSplit& sentences,
                      const std::vector<int>& question,
                      std::size_t placeholder_pos,
                      const std::vector<Hypothesis>& hypotheses) {
  Tensor question_emb = embedding.lookup(question);

  std::vector<std::vector<Tensor>> inputs;
  inputs.reserve(hypotheses.size());
  for (const Hypothesis& hyp : hypotheses) {
    Tensor r_hyp = encode_hypothesis(params, embedding.lookup(hyp.tokens));
    Tensor cand_emb = embedding.lookup_one(hyp.candidate);
    std::vector<Tensor> steps;
    steps.reserve(sentences.count());
    for (const auto& [begin, end] : sentences.spans) {
      std::vector<int> ids(text.begin() + static_cast<std::ptrdiff_t>(begin),
                           text.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor sent_emb = embedding.lookup(ids);
      Tensor match =
          word_match_features(sent_emb, cand_emb, question_emb,
                              placeholder_pos);
      Tensor r_sent =
          encode_sentence(params, ops::vconcat(sent_emb, match));
      Tensor score = bilinear_score(r_sent, r_hyp, params.bilinear);
      steps.push_back(ops::concat({score, r_sent, r_hyp}));
    }
    inputs.push_back(std::move(steps));
  }
  return aggregate_evidence(params, inputs);
}

}  // namespace epi
