#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "epireader/rng.hpp"
#include "epireader/tensor.hpp"

namespace epi {

// Trainable word embeddings, one column per vocabulary entry. The padding
// column stays all-zero and never receives gradient.
struct EmbeddingTable {
  Tensor weights;  // [dim x vocab_size]
  int dim = 0;
  int vocab_size = 0;
  int padding_id = 0;

  static EmbeddingTable init(int dim, int vocab_size, int padding_id,
                             Rng& rng);

  // Column j of the result is weights[:, ids[j]].
  Tensor lookup(const std::vector<int>& ids) const;
  // Single column as a vector [dim].
  Tensor lookup_one(int id) const;
};

// One GRU direction: update gate z, reset gate r, candidate state.
struct GruParams {
  Tensor w_update, u_update, b_update;  // [hidden x input], [hidden x hidden], [hidden]
  Tensor w_reset, u_reset, b_reset;
  Tensor w_cand, u_cand, b_cand;
  int input_dim = 0;
  int hidden_dim = 0;

  static GruParams init(int input_dim, int hidden_dim, Rng& rng);
  std::vector<std::pair<std::string, Tensor>> named(
      const std::string& prefix) const;
};

// z = sig(Wz x + Uz h + bz); r = sig(Wr x + Ur h + br);
// cand = tanh(Wh x + Uh (r*h) + bh); h' = (1-z)*h + z*cand.
Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h);

// Per-position biGRU states over a [D x N] embedded sequence.
struct BiGruEncoding {
  Tensor states;  // [2d x N]; masked columns are zero
  std::vector<std::uint8_t> mask;
  std::size_t valid_length = 0;
};

// Forward states over tokens 1..i concatenated with backward states over
// tokens N..i. The mask must be a contiguous prefix of ones (right padding);
// masked positions yield zero columns.
BiGruEncoding encode_text(const GruParams& forward, const GruParams& backward,
                          const Tensor& embedded,
                          const std::vector<std::uint8_t>& mask);

// Single question vector: final forward state concatenated with the backward
// state after it has consumed the whole sequence (aligned at position 1).
Tensor encode_question(const GruParams& forward, const GruParams& backward,
                       const Tensor& embedded,
                       const std::vector<std::uint8_t>* mask = nullptr);

}  // namespace epi
