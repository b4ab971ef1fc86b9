#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "epireader/errors.hpp"

namespace epi {

// One Cloze tuple at the string level, straight out of a parser. The
// question holds the canonical placeholder token at placeholder_pos.
struct RawExample {
  std::vector<std::vector<std::string>> sentences;
  std::vector<std::string> question;
  std::size_t placeholder_pos = 0;
  std::string answer;
  std::vector<std::string> candidates;
  std::string source_id;
  // CNN anonymization table; metadata only, never fed to the model.
  std::vector<std::pair<std::string, std::string>> entity_map;

  bool operator==(const RawExample&) const = default;
};

// Token <-> id map with reserved entries for padding, unknown words and the
// question placeholder. Ids are dense from 0 and stable for a given corpus.
class Vocabulary {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kPlaceholderId = 2;
  static constexpr const char* kPadToken = "<pad>";
  static constexpr const char* kUnkToken = "<unk>";
  static constexpr const char* kPlaceholderToken = "<placeholder>";

  // Frequency-counted over text, question, answer and candidate tokens;
  // tokens seen fewer than min_count times map to the unknown id. Ordering
  // is by descending count, ties lexicographic, so identical corpora give
  // identical vocabularies regardless of example order.
  static Vocabulary build(const std::vector<RawExample>& examples,
                          std::size_t min_count = 1);

  int id_of(const std::string& token) const;
  const std::string& token_of(int id) const;
  std::size_t size() const { return tokens_.size(); }
  // FNV-1a over the ordered token list; changes iff the mapping changes.
  std::uint64_t hash() const;
  // Ids of sentence-terminal tokens (. ! ?) present in this vocabulary.
  std::vector<int> terminal_ids() const;

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// One numericalized example.
struct ClozeExample {
  std::vector<int> text;
  std::vector<std::size_t> sentence_ends;  // exclusive offsets, ascending
  std::vector<int> question;               // exactly one placeholder id
  std::size_t placeholder_pos = 0;
  int answer = -1;
  std::vector<int> candidates;             // distinct, single tokens
  std::string source_id;

  bool operator==(const ClozeExample&) const = default;
  bool gold_supported() const;
};

ClozeExample encode_example(const RawExample& raw, const Vocabulary& vocab);
std::vector<ClozeExample> encode_examples(const std::vector<RawExample>& raw,
                                          const Vocabulary& vocab);

struct CbtStats {
  std::size_t blocks = 0;
  std::size_t skipped_multiword_candidates = 0;
};

// Children's Book Test layout: numbered sentence lines from 1, then a
// question line "<n+1> <question>\t<answer>\t\t<cand|...|cand>" whose
// question contains the literal token XXXXX; blocks separated by blank
// lines. Words are lowercased; the placeholder is not.
std::vector<RawExample> parse_cbt(std::istream& in, CbtStats* stats = nullptr);
std::vector<RawExample> parse_cbt_file(const std::string& path,
                                       CbtStats* stats = nullptr);

// Inverse of parse_cbt for one block (including the trailing blank line).
std::string render_cbt(const RawExample& example);
std::string render_cbt(const std::vector<RawExample>& examples);

// CNN story layout: URL line, blank, passage, blank, question containing
// @placeholder, blank, answer line, blank, "@entityN:original" mapping
// lines. Candidates are the entity tokens occurring in the passage (plus
// the answer, which is zero-support when absent from the passage).
RawExample parse_cnn(std::istream& in);
RawExample parse_cnn_file(const std::string& path);

// Padded id matrices with masks; restore(i) recovers the original example.
struct Batch {
  std::size_t count = 0;
  std::size_t max_text = 0;
  std::size_t max_question = 0;
  std::vector<int> text_ids;              // count * max_text, row-major
  std::vector<std::uint8_t> text_mask;
  std::vector<int> question_ids;
  std::vector<std::uint8_t> question_mask;
  std::vector<std::vector<std::size_t>> sentence_ends;
  std::vector<std::size_t> placeholder_pos;
  std::vector<int> answers;
  std::vector<std::vector<int>> candidates;
  std::vector<std::string> source_ids;

  ClozeExample restore(std::size_t i) const;
};

// Seeded shuffle (when asked), padding to per-batch maxima, final partial
// batch kept.
std::vector<Batch> make_batches(const std::vector<ClozeExample>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                bool shuffle);

}  // namespace epi
