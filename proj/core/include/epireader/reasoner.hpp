#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "epireader/encoders.hpp"
#include "epireader/extractor.hpp"
#include "epireader/tensor.hpp"

namespace epi {

// The question with one candidate substituted at the placeholder.
struct Hypothesis {
  std::vector<int> tokens;
  int candidate = -1;
  std::size_t slate_index = 0;
};

// Ordered, non-empty spans covering the text exactly.
struct SentenceSplit {
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end)
  std::size_t count() const { return spans.size(); }
};

struct ReasonerParams {
  Tensor sent_filters;  // [(D+2) x m x N_F]
  Tensor sent_bias;     // [N_F]
  Tensor hyp_filters;   // [D x m x N_F]
  Tensor hyp_bias;      // [N_F]
  Tensor bilinear;      // [N_F x N_F]
  GruParams aggregator;  // input 2*N_F+1, hidden d_S
  Tensor out_weight;    // [d_S]
  Tensor out_bias;      // [1]
  int filter_width = 0;
  int num_filters = 0;

  static ReasonerParams init(int embedding_dim, int filter_width,
                             int num_filters, int agg_hidden_dim, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named(
      const std::string& prefix) const;
  std::size_t parameter_count() const;
};

// Per-hypothesis entailment estimates.
struct EvidenceScores {
  Tensor raw;       // y, [K]
  Tensor evidence;  // e = softmax(y), [K]
};

// One hypothesis per slate entry, in slate order. The question must contain
// the placeholder exactly once.
std::vector<Hypothesis> form_hypotheses(const std::vector<int>& question,
                                        int placeholder_id,
                                        const CandidateSlate& slate);

// Uses the supplied boundary hints (exclusive end offsets) when given,
// otherwise splits after sentence-terminal tokens with any residue forming
// the final sentence.
SentenceSplit split_sentences(const std::vector<int>& text,
                              const std::vector<std::size_t>* boundary_hints,
                              const std::vector<int>& terminal_ids = {});

// Word-match matrix M [2 x L]: row 0 holds each sentence word's inner product
// with the candidate embedding, row 1 the maximum inner product with any
// question word (the excluded column, normally the placeholder, takes no part
// and the max routes gradient to the argmax word only, lowest index on ties).
Tensor word_match_features(const Tensor& sentence_emb, const Tensor& cand_emb,
                           const Tensor& question_emb,
                           std::optional<std::size_t> exclude_question_col);

// maxpool(relu(conv(x, F^S) + bias)) over an augmented sentence
// [(D+2) x L]; pads to the filter width when the sentence is shorter.
Tensor encode_sentence(const ReasonerParams& params, const Tensor& augmented);
// Same shape of computation for a hypothesis [D x |H|] with filters F^H.
Tensor encode_hypothesis(const ReasonerParams& params, const Tensor& hyp_emb);

// r_S^T R r_H.
Tensor bilinear_score(const Tensor& r_sentence, const Tensor& r_hypothesis,
                      const Tensor& bilinear);

// Runs the aggregation GRU over each hypothesis's per-sentence inputs
// x_ik = [score; r_S_i; r_H_k] (sentence index is the step dimension),
// projects the final state to a scalar y_k, and normalizes e = softmax(y).
EvidenceScores aggregate_evidence(
    const ReasonerParams& params,
    const std::vector<std::vector<Tensor>>& per_hypothesis_inputs);

// Full second-stage pass: encodes every (sentence, hypothesis) pair with
// word-match augmentation, scores entailment, and aggregates evidence.
EvidenceScores reason(const ReasonerParams& params,
                      const EmbeddingTable& embedding,
                      const std::vector<int>& text,
                      const SentenceSplit& sentences,
                      const std::vector<int>& question,
                      std::size_t placeholder_pos,
                      const std::vector<Hypothesis>& hypotheses);

}  // namespace epi
