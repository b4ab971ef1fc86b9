#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "epireader/encoders.hpp"
#include "epireader/tensor.hpp"

namespace epi {

// Word-level answer probabilities: each unique word's probability is the sum
// of the pointer distribution over its occurrences.
struct WordProbs {
  Tensor probs;                               // [num words], not renormalized
  std::vector<int> words;                     // token id per slot
  std::vector<std::size_t> first_occurrence;  // earliest text position
  std::vector<int> zero_support;              // candidates absent from text

  // Slot of a word, -1 when absent.
  int slot_of(int word) const;
};

// Top-K answer proposal.
struct CandidateSlate {
  std::vector<int> answers;  // distinct token ids, by descending probability
  Tensor probs;              // matching word probabilities, differentiable
  bool gold_forced = false;
  std::optional<std::size_t> gold_index;  // position of the gold answer

  std::size_t size() const { return answers.size(); }
};

struct ExtractorStats {
  std::size_t forced = 0;  // gold-forcing events (training only)
};

// Attention over text positions: softmax of f(t_i) . g(Q) under the text
// mask. Masked positions are exactly zero.
Tensor pointer_scores(const BiGruEncoding& text, const Tensor& question_vec);

// Sums position probabilities by word. With a candidate set, slots are
// restricted to candidates occurring in the text (values unchanged, no
// renormalization) and absent candidates are flagged zero-support.
// Positions holding ignore_id (padding) are skipped.
WordProbs aggregate_word_probs(const Tensor& s,
                               const std::vector<int>& token_ids,
                               const std::vector<int>* candidates = nullptr,
                               int ignore_id = -1);

// The min(K, #words) highest-probability words, ties broken by earliest
// first occurrence. During training a missing gold answer replaces the
// lowest-probability entry, keeping its own probability.
CandidateSlate select_top_k(const WordProbs& word_probs, int k,
                            std::optional<int> gold, bool training,
                            ExtractorStats* stats = nullptr);

}  // namespace epi
