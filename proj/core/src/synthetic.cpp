#include "epireader/synthetic.hpp"

#include <algorithm>
#include <string>
#include <unordered_set>

#include "epireader/rng.hpp"

namespace epi {

namespace {

const char* kNouns[] = {
    "lamp",    "river",   "stone",   "garden",  "ladder",  "basket",
    "window",  "candle",  "bridge",  "meadow",  "barrel",  "saddle",
    "mirror",  "ribbon",  "kettle",  "anchor",  "shovel",  "pillow",
    "carpet",  "locket",  "marble",  "feather", "lantern", "cabbage",
    "thimble", "button",  "teapot",  "hammer",  "bucket",  "parcel",
    "satchel", "biscuit", "napkin",  "drawer",  "chimney", "railing",
    "pebble",  "acorn",   "walnut",  "sparrow"};
constexpr int kNounPool = static_cast<int>(std::size(kNouns));

const char* kSyllableA[] = {"bo", "ra", "mi", "ta", "lu",
                            "ke", "zo", "fi", "na", "du"};
const char* kSyllableB[] = {"rin", "mak", "tol", "ves", "nor",
                            "lim", "gard", "bek", "sun", "pol"};

std::string entity_name(int i) {
  return std::string(kSyllableA[i % 10]) + kSyllableB[(i / 10) % 10];
}

const char* kExchangeVerbs[] = {"tagged", "chased", "poked",
                                "bumped", "nudged", "caught"};

struct Pools {
  std::vector<std::string> entities;
  std::vector<std::string> nouns;
};

// Draws without replacement from the per-example noun deck.
class NounDeck {
 public:
  NounDeck(const std::vector<std::string>& pool, Rng& rng) : pool_(pool) {
    order_.resize(pool.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    rng.shuffle(order_);
  }
  const std::string& draw() {
    if (next_ >= order_.size()) {
      throw ConfigError("synthetic generator: noun pool exhausted");
    }
    return pool_[order_[next_++]];
  }

 private:
  const std::vector<std::string>& pool_;
  std::vector<std::size_t> order_;
  std::size_t next_ = 0;
};

std::vector<std::string> tokens(std::initializer_list<std::string> parts) {
  return std::vector<std::string>(parts);
}

std::uint64_t content_hash(const RawExample& ex) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ULL;
    }
    h ^= 0xffULL;
    h *= 1099511628211ULL;
  };
  for (const auto& sentence : ex.sentences)
    for (const auto& tok : sentence) mix(tok);
  for (const auto& tok : ex.question) mix(tok);
  mix(ex.answer);
  return h;
}

// Tracks nouns in first-use order so candidate lines stay deterministic.
struct NounLog {
  std::vector<std::string> used;
  const std::string& note(const std::string& n) {
    if (std::find(used.begin(), used.end(), n) == used.end()) used.push_back(n);
    return n;
  }
};

RawExample make_locate(const Pools& pools, int num_sentences, Rng& rng) {
  RawExample ex;
  NounDeck deck(pools.nouns, rng);
  NounLog log;

  const std::string& answer =
      pools.entities[rng.below(pools.entities.size())];
  std::vector<std::string> others;
  while (others.size() <
         std::min<std::size_t>(2, pools.entities.size() - 1)) {
    const std::string& e = pools.entities[rng.below(pools.entities.size())];
    if (e != answer &&
        std::find(others.begin(), others.end(), e) == others.end()) {
      others.push_back(e);
    }
  }

  const std::size_t marker_pos =
      rng.below(static_cast<std::uint64_t>(num_sentences));
  std::size_t next_other = 0;
  for (int s = 0; s < num_sentences; ++s) {
    if (static_cast<std::size_t>(s) == marker_pos) {
      ex.sentences.push_back(
          tokens({"then", "the", "prize", "went", "to", answer, "."}));
    } else if (next_other < others.size()) {
      ex.sentences.push_back(tokens(
          {others[next_other++], "walked", "by", "the", log.note(deck.draw()),
           "."}));
    } else {
      ex.sentences.push_back(tokens({"the", log.note(deck.draw()), "lay",
                                     "near", "the", log.note(deck.draw()),
                                     "."}));
    }
  }

  ex.question = tokens({"the", "prize", "went", "to",
                        Vocabulary::kPlaceholderToken, "."});
  ex.placeholder_pos = 4;
  ex.answer = answer;

  ex.candidates.push_back(answer);
  for (const auto& e : others) ex.candidates.push_back(e);
  for (const auto& n : log.used) {
    if (ex.candidates.size() >= 10) break;
    ex.candidates.push_back(n);
  }
  if (ex.candidates.size() != 10) {
    throw ConfigError(
        "synthetic generator: not enough distinct words for 10 candidates; "
        "increase num_sentences or vocab_size");
  }
  rng.shuffle(ex.candidates);
  return ex;
}

// The pair alternates as subject and object of exchange sentences scattered
// through the passage; the question asks for the object of the final
// exchange. Exchange verbs vary and also occur in entity-on-noun filler
// sentences, and fillers keep naming the final subject after the last
// exchange, so neither verb identity, adjacency, position nor recency gives
// the answer away at the token level. Only the sentence order does.
RawExample make_alternation(const Pools& pools, int num_sentences, Rng& rng) {
  RawExample ex;
  NounDeck deck(pools.nouns, rng);
  NounLog log;

  const std::string& first =
      pools.entities[rng.below(pools.entities.size())];
  std::string second = first;
  while (second == first) {
    second = pools.entities[rng.below(pools.entities.size())];
  }

  const int exchanges = 2 + static_cast<int>(rng.below(3));  // 2..4
  const int fillers = num_sentences - exchanges;
  // Plain fillers carry two nouns, entity fillers one; eight distinct nouns
  // feed the candidate line and at least one entity filler is needed for
  // the recency misdirect.
  const int plain = std::max(0, 9 - fillers);
  const int entity_fillers = fillers - plain;

  const int starter = static_cast<int>(rng.below(2));
  std::vector<std::vector<std::string>> exchange_sentences;
  std::string last_subject, last_object;
  for (int i = 0; i < exchanges; ++i) {
    const bool first_leads = (i + starter) % 2 == 0;
    const std::string& subj = first_leads ? first : second;
    const std::string& obj = first_leads ? second : first;
    const char* verb = kExchangeVerbs[rng.below(std::size(kExchangeVerbs))];
    exchange_sentences.push_back(tokens({subj, verb, obj, "."}));
    last_subject = subj;
    last_object = obj;
  }

  // Exchanges keep their relative order in a random interleaving; the last
  // slot always holds a filler so the misdirect lands after the final
  // exchange.
  std::vector<int> slots(static_cast<std::size_t>(num_sentences), -1);
  std::vector<std::size_t> positions;
  for (std::size_t p = 0; p + 1 < slots.size(); ++p) positions.push_back(p);
  rng.shuffle(positions);
  positions.resize(static_cast<std::size_t>(exchanges));
  std::sort(positions.begin(), positions.end());
  for (int i = 0; i < exchanges; ++i) {
    slots[positions[static_cast<std::size_t>(i)]] = i;
  }

  // Assign filler types up front, then force at least one entity filler
  // behind the final exchange: it names the final subject, the wrong answer
  // under recency pointing.
  std::vector<std::size_t> filler_slots;
  for (std::size_t p = 0; p < slots.size(); ++p) {
    if (slots[p] < 0) filler_slots.push_back(p);
  }
  std::vector<int> filler_kind;  // 0 plain, 1 entity
  for (int i = 0; i < plain; ++i) filler_kind.push_back(0);
  for (int i = 0; i < entity_fillers; ++i) filler_kind.push_back(1);
  rng.shuffle(filler_kind);
  std::size_t first_after = 0;
  while (first_after < filler_slots.size() &&
         filler_slots[first_after] < positions.back()) {
    ++first_after;
  }
  bool have_entity_after = false;
  for (std::size_t i = first_after; i < filler_kind.size(); ++i) {
    have_entity_after = have_entity_after || filler_kind[i] == 1;
  }
  if (!have_entity_after) {
    for (std::size_t i = 0; i < first_after; ++i) {
      if (filler_kind[i] == 1) {
        std::swap(filler_kind[i], filler_kind[filler_kind.size() - 1]);
        break;
      }
    }
  }

  std::size_t next_filler = 0;
  for (std::size_t p = 0; p < slots.size(); ++p) {
    if (slots[p] >= 0) {
      ex.sentences.push_back(
          exchange_sentences[static_cast<std::size_t>(slots[p])]);
      continue;
    }
    const bool after_final = p > positions.back();
    if (filler_kind[next_filler++] == 1) {
      const std::string& who =
          after_final ? last_subject
                      : (rng.below(2) == 0 ? first : second);
      const char* verb = kExchangeVerbs[rng.below(std::size(kExchangeVerbs))];
      ex.sentences.push_back(
          tokens({who, verb, "the", log.note(deck.draw()), "."}));
    } else {
      ex.sentences.push_back(tokens({"the", log.note(deck.draw()), "lay",
                                     "near", "the", log.note(deck.draw()),
                                     "."}));
    }
  }

  ex.question = tokens({"so", Vocabulary::kPlaceholderToken, "was", "it",
                        "at", "last", "."});
  ex.placeholder_pos = 1;
  ex.answer = last_object;

  ex.candidates.push_back(first);
  ex.candidates.push_back(second);
  for (const auto& n : log.used) {
    if (ex.candidates.size() >= 10) break;
    ex.candidates.push_back(n);
  }
  if (ex.candidates.size() != 10) {
    throw ConfigError(
        "synthetic generator: not enough distinct words for 10 candidates; "
        "increase num_sentences or vocab_size");
  }
  rng.shuffle(ex.candidates);
  return ex;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_entities < 2) {
    throw ConfigError("synthetic generator: need at least 2 entities");
  }
  if (spec.vocab_size < 12) {
    throw ConfigError(
        "synthetic generator: vocab_size too small for the templates (need "
        ">= 12)");
  }
  if (spec.num_examples < 1) {
    throw ConfigError("synthetic generator: num_examples must be positive");
  }
  const bool locate = spec.task == SyntheticSpec::Task::locate;
  const int num_sentences =
      spec.num_sentences > 0 ? spec.num_sentences : (locate ? 6 : 10);
  if (locate && num_sentences < 6) {
    throw ConfigError("synthetic generator: locate needs >= 6 sentences");
  }
  if (!locate && num_sentences < 9) {
    throw ConfigError("synthetic generator: alternation needs >= 9 sentences");
  }

  Pools pools;
  for (int i = 0; i < spec.num_entities; ++i) {
    pools.entities.push_back(entity_name(i));
  }
  const int noun_count = std::min(spec.vocab_size, kNounPool);
  for (int i = 0; i < noun_count; ++i) pools.nouns.push_back(kNouns[i]);

  Rng rng(spec.seed);
  std::unordered_set<std::uint64_t> seen;
  const std::size_t holdout =
      std::max<std::size_t>(static_cast<std::size_t>(spec.num_examples) / 10, 50);

  SyntheticCorpus corpus;
  struct Target {
    std::vector<RawExample>* out;
    std::size_t size;
    const char* tag;
  };
  const Target targets[] = {
      {&corpus.train, static_cast<std::size_t>(spec.num_examples), "train"},
      {&corpus.valid, holdout, "valid"},
      {&corpus.test, holdout, "test"},
  };
  for (const Target& target : targets) {
    while (target.out->size() < target.size) {
      std::size_t attempts = 0;
      RawExample ex;
      while (true) {
        ex = locate ? make_locate(pools, num_sentences, rng)
                    : make_alternation(pools, num_sentences, rng);
        if (seen.insert(content_hash(ex)).second) break;
        if (++attempts > 10000) {
          throw ConfigError(
              "synthetic generator: template space exhausted, lower "
              "num_examples or raise num_entities/vocab_size");
        }
      }
      ex.source_id = std::string(locate ? "locate" : "alternation") + "-" +
                     target.tag + "-" + std::to_string(target.out->size());
      target.out->push_back(std::move(ex));
    }
  }
  return corpus;
}

}  // namespace epi
