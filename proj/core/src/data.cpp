#include "epireader/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "epireader/rng.hpp"

namespace epi {

namespace {

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) tokens.push_back(tok);
  return tokens;
}

std::string lowercased(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

bool has_whitespace(const std::string& s) {
  return s.find_first_of(" \t") != std::string::npos;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_entity_token(const std::string& tok) {
  if (tok.rfind("@entity", 0) != 0) return false;
  if (tok.size() == 7) return false;
  for (std::size_t i = 7; i < tok.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(tok[i]))) return false;
  }
  return true;
}

constexpr const char* kCbtPlaceholderSurface = "XXXXX";
constexpr const char* kCnnPlaceholderSurface = "@placeholder";

}  // namespace

Vocabulary Vocabulary::build(const std::vector<RawExample>& examples,
                             std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  auto note = [&](const std::string& tok) {
    if (tok == kPadToken || tok == kUnkToken || tok == kPlaceholderToken)
      return;
    ++counts[tok];
  };
  for (const RawExample& ex : examples) {
    for (const auto& sentence : ex.sentences)
      for (const auto& tok : sentence) note(tok);
    for (const auto& tok : ex.question) note(tok);
    note(ex.answer);
    for (const auto& tok : ex.candidates) note(tok);
  }

  std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(),
                                                           counts.end());
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary vocab;
  vocab.tokens_ = {kPadToken, kUnkToken, kPlaceholderToken};
  for (const auto& [tok, count] : ordered) {
    if (min_count > 0 && count < min_count) continue;
    vocab.tokens_.push_back(tok);
  }
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    vocab.ids_.emplace(vocab.tokens_[i], static_cast<int>(i));
  }
  return vocab;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw VocabError("token id " + std::to_string(id) +
                     " outside vocabulary of size " +
                     std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (const std::string& tok : tokens_) {
    for (char c : tok) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

std::vector<int> Vocabulary::terminal_ids() const {
  std::vector<int> out;
  for (const char* t : {".", "!", "?"}) {
    auto it = ids_.find(t);
    if (it != ids_.end()) out.push_back(it->second);
  }
  return out;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary to " + path);
  for (const std::string& tok : tokens_) out << tok << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw VocabError("cannot read vocabulary from " + path);
  Vocabulary vocab;
  std::string line;
  while (std::getline(in, line)) {
    vocab.tokens_.push_back(strip_cr(line));
  }
  if (vocab.tokens_.size() < 3 || vocab.tokens_[0] != kPadToken ||
      vocab.tokens_[1] != kUnkToken || vocab.tokens_[2] != kPlaceholderToken) {
    throw VocabError("vocabulary file " + path +
                     " is missing the reserved token header");
  }
  for (std::size_t i = 0; i < vocab.tokens_.size(); ++i) {
    vocab.ids_.emplace(vocab.tokens_[i], static_cast<int>(i));
  }
  return vocab;
}

bool ClozeExample::gold_supported() const {
  return std::find(text.begin(), text.end(), answer) != text.end();
}

ClozeExample encode_example(const RawExample& raw, const Vocabulary& vocab) {
  ClozeExample ex;
  ex.source_id = raw.source_id;
  for (const auto& sentence : raw.sentences) {
    for (const auto& tok : sentence) ex.text.push_back(vocab.id_of(tok));
    ex.sentence_ends.push_back(ex.text.size());
  }
  ex.question.reserve(raw.question.size());
  for (std::size_t i = 0; i < raw.question.size(); ++i) {
    ex.question.push_back(i == raw.placeholder_pos
                              ? Vocabulary::kPlaceholderId
                              : vocab.id_of(raw.question[i]));
  }
  ex.placeholder_pos = raw.placeholder_pos;
  ex.answer = vocab.id_of(raw.answer);
  std::unordered_set<int> seen;
  for (const auto& cand : raw.candidates) {
    const int id = vocab.id_of(cand);
    if (seen.insert(id).second) ex.candidates.push_back(id);
  }
  return ex;
}

std::vector<ClozeExample> encode_examples(const std::vector<RawExample>& raw,
                                          const Vocabulary& vocab) {
  std::vector<ClozeExample> out;
  out.reserve(raw.size());
  for (const RawExample& r : raw) out.push_back(encode_example(r, vocab));
  return out;
}

namespace {

struct CbtQuestionLine {
  std::vector<std::string> question;
  std::size_t placeholder_pos = 0;
  std::string answer;
  std::vector<std::string> candidates;
  bool multiword = false;
};

CbtQuestionLine parse_cbt_question(const std::string& rest,
                                   std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : rest) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(cur);
  // Expected layout: question, answer, empty, candidates.
  std::vector<std::string> nonempty;
  for (auto& f : fields) {
    if (!is_blank(f)) nonempty.push_back(f);
  }
  if (nonempty.size() < 3) {
    throw ParseError(ParseError::Code::Truncated, line_no,
                     "question line needs question, answer and candidates");
  }

  CbtQuestionLine q;
  std::size_t placeholders = 0;
  for (const std::string& tok : split_whitespace(nonempty[0])) {
    if (tok == kCbtPlaceholderSurface) {
      q.placeholder_pos = q.question.size();
      q.question.push_back(Vocabulary::kPlaceholderToken);
      ++placeholders;
    } else {
      q.question.push_back(lowercased(tok));
    }
  }
  if (placeholders != 1) {
    throw ParseError(ParseError::Code::MissingPlaceholder, line_no,
                     "question must contain XXXXX exactly once, found " +
                         std::to_string(placeholders));
  }

  q.answer = lowercased(nonempty[1]);
  std::string cands = nonempty.back();
  std::string cand;
  std::vector<std::string> raw_cands;
  for (char c : cands) {
    if (c == '|') {
      raw_cands.push_back(cand);
      cand.clear();
    } else {
      cand += c;
    }
  }
  raw_cands.push_back(cand);
  for (auto& rc : raw_cands) {
    if (has_whitespace(rc)) q.multiword = true;
    q.candidates.push_back(lowercased(rc));
  }
  if (has_whitespace(q.answer)) q.multiword = true;
  if (q.candidates.size() != 10) {
    throw ParseError(ParseError::Code::BadCandidateCount, line_no,
                     "expected 10 candidates, found " +
                         std::to_string(q.candidates.size()));
  }
  if (std::find(q.candidates.begin(), q.candidates.end(), q.answer) ==
      q.candidates.end()) {
    throw ParseError(ParseError::Code::AnswerNotInCandidates, line_no,
                     "answer '" + q.answer + "' is not among the candidates");
  }
  return q;
}

}  // namespace

std::vector<RawExample> parse_cbt(std::istream& in, CbtStats* stats) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(strip_cr(line));

  std::vector<RawExample> examples;
  std::size_t i = 0;
  while (i < lines.size()) {
    if (is_blank(lines[i])) {
      ++i;
      continue;
    }
    RawExample ex;
    std::size_t expected = 1;
    bool saw_question = false;
    while (i < lines.size()) {
      const std::size_t line_no = i + 1;
      if (is_blank(lines[i])) {
        throw ParseError(ParseError::Code::Truncated, line_no,
                         "block ended before its question line");
      }
      const std::string& text = lines[i];
      const std::size_t space = text.find(' ');
      const std::string number = text.substr(0, space);
      std::size_t parsed = 0;
      std::size_t value = 0;
      try {
        value = std::stoull(number, &parsed);
      } catch (const std::exception&) {
        parsed = 0;
      }
      if (parsed != number.size() || parsed == 0 || value != expected) {
        throw ParseError(ParseError::Code::MissingLineNumber, line_no,
                         "expected line number " + std::to_string(expected));
      }
      const std::string rest =
          space == std::string::npos ? std::string() : text.substr(space + 1);
      if (rest.find('\t') != std::string::npos) {
        if (expected == 1) {
          throw ParseError(ParseError::Code::Truncated, line_no,
                           "block has a question but no sentences");
        }
        CbtQuestionLine q = parse_cbt_question(rest, line_no);
        ++i;
        if (q.multiword) {
          if (stats) ++stats->skipped_multiword_candidates;
        } else {
          ex.question = std::move(q.question);
          ex.placeholder_pos = q.placeholder_pos;
          ex.answer = std::move(q.answer);
          ex.candidates = std::move(q.candidates);
          ex.source_id = "cbt-" + std::to_string(examples.size());
          examples.push_back(std::move(ex));
          if (stats) ++stats->blocks;
        }
        saw_question = true;
        break;
      }
      std::vector<std::string> tokens;
      for (const std::string& tok : split_whitespace(rest)) {
        tokens.push_back(lowercased(tok));
      }
      if (tokens.empty()) {
        throw ParseError(ParseError::Code::Truncated, line_no,
                         "empty sentence");
      }
      ex.sentences.push_back(std::move(tokens));
      ++expected;
      ++i;
    }
    if (!saw_question) {
      throw ParseError(ParseError::Code::Truncated, lines.size(),
                       "file ended before the question line");
    }
  }
  return examples;
}

std::vector<RawExample> parse_cbt_file(const std::string& path,
                                       CbtStats* stats) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  return parse_cbt(in, stats);
}

std::string render_cbt(const RawExample& example) {
  std::ostringstream out;
  for (std::size_t i = 0; i < example.sentences.size(); ++i) {
    out << (i + 1);
    for (const std::string& tok : example.sentences[i]) out << ' ' << tok;
    out << '\n';
  }
  out << (example.sentences.size() + 1);
  for (std::size_t i = 0; i < example.question.size(); ++i) {
    out << ' '
        << (i == example.placeholder_pos ? kCbtPlaceholderSurface
                                         : example.question[i].c_str());
  }
  out << '\t' << example.answer << "\t\t";
  for (std::size_t i = 0; i < example.candidates.size(); ++i) {
    if (i) out << '|';
    out << example.candidates[i];
  }
  out << "\n\n";
  return out.str();
}

std::string render_cbt(const std::vector<RawExample>& examples) {
  std::string out;
  for (const RawExample& ex : examples) out += render_cbt(ex);
  return out;
}

RawExample parse_cnn(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(strip_cr(line));

  auto require_line = [&](std::size_t idx, const char* what) -> const std::string& {
    if (idx >= lines.size() || is_blank(lines[idx])) {
      throw ParseError(ParseError::Code::Truncated, idx + 1,
                       std::string("missing ") + what);
    }
    return lines[idx];
  };
  auto require_blank = [&](std::size_t idx) {
    if (idx >= lines.size()) {
      throw ParseError(ParseError::Code::Truncated, idx + 1,
                       "story ends before the blank separator line");
    }
    if (!is_blank(lines[idx])) {
      throw ParseError(ParseError::Code::MissingSeparator, idx + 1,
                       "expected a blank separator line");
    }
  };

  RawExample ex;
  ex.source_id = require_line(0, "url line");
  require_blank(1);
  const std::string& passage = require_line(2, "passage");
  require_blank(3);
  const std::string& question = require_line(4, "question");
  require_blank(5);
  const std::string& answer = require_line(6, "answer line");
  require_blank(7);

  for (std::size_t i = 8; i < lines.size(); ++i) {
    if (is_blank(lines[i])) continue;
    const std::size_t colon = lines[i].find(':');
    if (colon == std::string::npos ||
        !is_entity_token(lines[i].substr(0, colon))) {
      throw ParseError(ParseError::Code::BadEntityMapping, i + 1,
                       "expected '@entityN:<original string>'");
    }
    ex.entity_map.emplace_back(lines[i].substr(0, colon),
                               lines[i].substr(colon + 1));
  }

  // Passage sentences split after terminal tokens; residue forms the last.
  std::vector<std::string> passage_tokens = split_whitespace(passage);
  std::vector<std::string> current;
  for (const std::string& tok : passage_tokens) {
    current.push_back(tok);
    if (tok == "." || tok == "!" || tok == "?") {
      ex.sentences.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) ex.sentences.push_back(std::move(current));
  if (ex.sentences.empty()) {
    throw ParseError(ParseError::Code::Truncated, 3, "empty passage");
  }

  std::size_t placeholders = 0;
  for (const std::string& tok : split_whitespace(question)) {
    if (tok == kCnnPlaceholderSurface) {
      ex.placeholder_pos = ex.question.size();
      ex.question.push_back(Vocabulary::kPlaceholderToken);
      ++placeholders;
    } else {
      ex.question.push_back(tok);
    }
  }
  if (placeholders != 1) {
    throw ParseError(ParseError::Code::MissingPlaceholder, 5,
                     "question must contain @placeholder exactly once, found " +
                         std::to_string(placeholders));
  }

  ex.answer = answer;
  if (has_whitespace(ex.answer) || !is_entity_token(ex.answer)) {
    throw ParseError(ParseError::Code::AnswerNotEntity, 7,
                     "answer '" + ex.answer + "' is not an @entityN token");
  }

  std::unordered_set<std::string> seen;
  for (const auto& sentence : ex.sentences) {
    for (const std::string& tok : sentence) {
      if (is_entity_token(tok) && seen.insert(tok).second) {
        ex.candidates.push_back(tok);
      }
    }
  }
  // Zero-support answers stay in the candidate set; training drops them,
  // evaluation counts them as automatic misses.
  if (!seen.count(ex.answer)) ex.candidates.push_back(ex.answer);
  return ex;
}

RawExample parse_cnn_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  return parse_cnn(in);
}

ClozeExample Batch::restore(std::size_t i) const {
  ClozeExample ex;
  std::size_t text_len = 0;
  while (text_len < max_text && text_mask[i * max_text + text_len]) ++text_len;
  ex.text.assign(text_ids.begin() + static_cast<std::ptrdiff_t>(i * max_text),
                 text_ids.begin() +
                     static_cast<std::ptrdiff_t>(i * max_text + text_len));
  std::size_t q_len = 0;
  while (q_len < max_question && question_mask[i * max_question + q_len])
    ++q_len;
  ex.question.assign(
      question_ids.begin() + static_cast<std::ptrdiff_t>(i * max_question),
      question_ids.begin() +
          static_cast<std::ptrdiff_t>(i * max_question + q_len));
  ex.sentence_ends = sentence_ends[i];
  ex.placeholder_pos = placeholder_pos[i];
  ex.answer = answers[i];
  ex.candidates = candidates[i];
  ex.source_id = source_ids[i];
  return ex;
}

std::vector<Batch> make_batches(const std::vector<ClozeExample>& examples,
                                std::size_t batch_size, std::uint64_t seed,
                                bool shuffle) {
  if (batch_size == 0) {
    throw ConfigError("make_batches: batch size must be positive");
  }
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(order);
  }

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b;
    b.count = count;
    for (std::size_t k = 0; k < count; ++k) {
      const ClozeExample& ex = examples[order[start + k]];
      b.max_text = std::max(b.max_text, ex.text.size());
      b.max_question = std::max(b.max_question, ex.question.size());
    }
    b.text_ids.assign(count * b.max_text, Vocabulary::kPadId);
    b.text_mask.assign(count * b.max_text, 0);
    b.question_ids.assign(count * b.max_question, Vocabulary::kPadId);
    b.question_mask.assign(count * b.max_question, 0);
    for (std::size_t k = 0; k < count; ++k) {
      const ClozeExample& ex = examples[order[start + k]];
      for (std::size_t j = 0; j < ex.text.size(); ++j) {
        b.text_ids[k * b.max_text + j] = ex.text[j];
        b.text_mask[k * b.max_text + j] = 1;
      }
      for (std::size_t j = 0; j < ex.question.size(); ++j) {
        b.question_ids[k * b.max_question + j] = ex.question[j];
        b.question_mask[k * b.max_question + j] = 1;
      }
      b.sentence_ends.push_back(ex.sentence_ends);
      b.placeholder_pos.push_back(ex.placeholder_pos);
      b.answers.push_back(ex.answer);
      b.candidates.push_back(ex.candidates);
      b.source_ids.push_back(ex.source_id);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace epi
