#pragma once

#include <cstdint>
#include <vector>

#include "epireader/data.hpp"

namespace epi {

// Deterministic template-generated Cloze corpora for desk-scale training.
//
// locate:      the answer is the entity named after a fixed marker phrase;
//              solvable by pointer attention alone.
// alternation: two entities trade places as subject and object of an
//              exchange sentence; the question asks for the object of the
//              final exchange while trailing sentences keep mentioning the
//              other entity, so recency pointing is misleading and the
//              sentence-sequential second stage has the advantage.
struct SyntheticSpec {
  enum class Task { locate, alternation };
  Task task = Task::locate;
  int num_entities = 8;    // entity name pool, >= 2
  int num_sentences = 0;   // per passage; 0 = task default (6 / 10)
  int vocab_size = 40;     // filler word budget, >= 12
  int num_examples = 1000; // training examples; valid/test get a tenth each
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<RawExample> train, valid, test;
};

// Byte-identical output for identical specs. Every example's gold answer
// occurs in its passage, candidate lines carry exactly 10 distinct words all
// occurring in the passage, and no entity assignment repeats across splits.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace epi
