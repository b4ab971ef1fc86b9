#include "epireader/extractor.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "epireader/errors.hpp"
#include "epireader/ops.hpp"

namespace epi {

int WordProbs::slot_of(int word) const {
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (words[i] == word) return static_cast<int>(i);
  }
  return -1;
}

Tensor pointer_scores(const BiGruEncoding& text, const Tensor& question_vec) {
  if (question_vec.rank() != 1 ||
      question_vec.dim(0) != text.states.dim(0)) {
    throw DimensionError("pointer_scores: question vector " +
                         shape_string(question_vec.shape()) +
                         " vs text states " +
                         shape_string(text.states.shape()));
  }
  Tensor scores = ops::vecmat(question_vec, text.states);
  return ops::softmax_stable(scores, &text.mask);
}

WordProbs aggregate_word_probs(const Tensor& s,
                               const std::vector<int>& token_ids,
                               const std::vector<int>* candidates,
                               int ignore_id) {
  if (s.rank() != 1 || s.dim(0) != token_ids.size()) {
    throw DimensionError("aggregate_word_probs: " + shape_string(s.shape()) +
                         " vs " + std::to_string(token_ids.size()) +
                         " tokens");
  }
  std::unordered_set<int> allowed;
  if (candidates) allowed.insert(candidates->begin(), candidates->end());

  WordProbs out;
  std::unordered_map<int, int> slot_of;
  std::vector<int> position_slot(token_ids.size(), -1);
  for (std::size_t i = 0; i < token_ids.size(); ++i) {
    const int word = token_ids[i];
    if (word == ignore_id) continue;
    if (candidates && !allowed.count(word)) continue;
    auto it = slot_of.find(word);
    if (it == slot_of.end()) {
      it = slot_of.emplace(word, static_cast<int>(out.words.size())).first;
      out.words.push_back(word);
      out.first_occurrence.push_back(i);
    }
    position_slot[i] = it->second;
  }
  if (candidates) {
    for (int cand : *candidates) {
      if (!slot_of.count(cand)) out.zero_support.push_back(cand);
    }
  }
  out.probs = ops::segment_sum(s, position_slot, out.words.size());
  return out;
}

CandidateSlate select_top_k(const WordProbs& word_probs, int k,
                            std::optional<int> gold, bool training,
                            ExtractorStats* stats) {
  if (k < 1) {
    throw ConfigError("select_top_k: K must be at least 1, got " +
                      std::to_string(k));
  }
  if (word_probs.words.empty()) {
    throw DegenerateInputError("select_top_k: empty word probabilities");
  }
  std::vector<std::size_t> order(word_probs.words.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const Scalar pa = word_probs.probs.at(a), pb = word_probs.probs.at(b);
    if (pa != pb) return pa > pb;
    return word_probs.first_occurrence[a] < word_probs.first_occurrence[b];
  });
  const std::size_t take =
      std::min(static_cast<std::size_t>(k), order.size());
  std::vector<std::size_t> slots(order.begin(), order.begin() + take);

  CandidateSlate slate;
  bool have_gold = false;
  std::size_t gold_pos = 0;
  if (gold) {
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (word_probs.words[slots[i]] == *gold) {
        have_gold = true;
        gold_pos = i;
      }
    }
  }
  if (training && gold && !have_gold) {
    const int gold_slot = word_probs.slot_of(*gold);
    if (gold_slot < 0) {
      throw DegenerateInputError(
          "select_top_k: gold answer has no support in the text");
    }
    slots.back() = static_cast<std::size_t>(gold_slot);
    slate.gold_forced = true;
    have_gold = true;
    gold_pos = slots.size() - 1;
    if (stats) ++stats->forced;
  }
  for (std::size_t slot : slots) slate.answers.push_back(word_probs.words[slot]);
  slate.probs = ops::gather(word_probs.probs, slots);
  if (have_gold) slate.gold_index = gold_pos;
  return slate;
}

}  // namespace epi
