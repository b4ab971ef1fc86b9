#include "epireader/encoders.hpp"

#include <string>

#include "epireader/errors.hpp"
#include "epireader/ops.hpp"

namespace epi {

namespace {

// Uniform over [-0.05, 0.05), quantized to f32 so checkpoints round-trip
// bit-exactly.
Tensor init_uniform(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.at(i) = static_cast<double>(static_cast<float>(rng.uniform(-0.05, 0.05)));
  }
  return t;
}

std::size_t prefix_length(const std::vector<std::uint8_t>& mask,
                          const char* op) {
  std::size_t n = 0;
  while (n < mask.size() && mask[n]) ++n;
  for (std::size_t i = n; i < mask.size(); ++i) {
    if (mask[i]) {
      throw DegenerateInputError(std::string(op) +
                                 ": mask is not a contiguous prefix");
    }
  }
  return n;
}

}  // namespace

EmbeddingTable EmbeddingTable::init(int dim, int vocab_size, int padding_id,
                                    Rng& rng) {
  EmbeddingTable table;
  table.dim = dim;
  table.vocab_size = vocab_size;
  table.padding_id = padding_id;
  table.weights = init_uniform(
      {static_cast<std::size_t>(dim), static_cast<std::size_t>(vocab_size)},
      rng);
  for (int r = 0; r < dim; ++r) {
    table.weights.at2(static_cast<std::size_t>(r),
                      static_cast<std::size_t>(padding_id)) = 0.0;
  }
  return table;
}

Tensor EmbeddingTable::lookup(const std::vector<int>& ids) const {
  return ops::gather_columns(weights, ids, padding_id);
}

Tensor EmbeddingTable::lookup_one(int id) const {
  return ops::select_col(ops::gather_columns(weights, {id}, padding_id), 0);
}

GruParams GruParams::init(int input_dim, int hidden_dim, Rng& rng) {
  const auto h = static_cast<std::size_t>(hidden_dim);
  const auto in = static_cast<std::size_t>(input_dim);
  GruParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_update = init_uniform({h, in}, rng);
  p.u_update = init_uniform({h, h}, rng);
  p.b_update = init_uniform({h}, rng);
  p.w_reset = init_uniform({h, in}, rng);
  p.u_reset = init_uniform({h, h}, rng);
  p.b_reset = init_uniform({h}, rng);
  p.w_cand = init_uniform({h, in}, rng);
  p.u_cand = init_uniform({h, h}, rng);
  p.b_cand = init_uniform({h}, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor>> GruParams::named(
    const std::string& prefix) const {
  return {
      {prefix + ".w_update", w_update}, {prefix + ".u_update", u_update},
      {prefix + ".b_update", b_update}, {prefix + ".w_reset", w_reset},
      {prefix + ".u_reset", u_reset},   {prefix + ".b_reset", b_reset},
      {prefix + ".w_cand", w_cand},     {prefix + ".u_cand", u_cand},
      {prefix + ".b_cand", b_cand},
  };
}

Tensor gru_step(const GruParams& p, const Tensor& x, const Tensor& h) {
  using namespace ops;
  if (x.rank() != 1 || x.dim(0) != static_cast<std::size_t>(p.input_dim) ||
      h.rank() != 1 || h.dim(0) != static_cast<std::size_t>(p.hidden_dim)) {
    throw DimensionError("gru_step: x " + shape_string(x.shape()) + ", h " +
                         shape_string(h.shape()) + " vs input_dim " +
                         std::to_string(p.input_dim) + ", hidden_dim " +
                         std::to_string(p.hidden_dim));
  }
  Tensor z = sigmoid(add(add(matvec(p.w_update, x), matvec(p.u_update, h)),
                         p.b_update));
  Tensor r =
      sigmoid(add(add(matvec(p.w_reset, x), matvec(p.u_reset, h)), p.b_reset));
  Tensor cand = tanh_op(
      add(add(matvec(p.w_cand, x), matvec(p.u_cand, mul(r, h))), p.b_cand));
  // (1-z)*h + z*cand, written as h + z*(cand - h).
  return add(h, mul(z, sub(cand, h)));
}

BiGruEncoding encode_text(const GruParams& forward, const GruParams& backward,
                          const Tensor& embedded,
                          const std::vector<std::uint8_t>& mask) {
  if (embedded.rank() != 2) {
    throw DimensionError("encode_text: expected [D x N] embeddings, got " +
                         shape_string(embedded.shape()));
  }
  const std::size_t n = embedded.dim(1);
  if (mask.size() != n) {
    throw DimensionError("encode_text: mask length " +
                         std::to_string(mask.size()) + " vs sequence length " +
                         std::to_string(n));
  }
  const std::size_t valid = prefix_length(mask, "encode_text");
  if (valid == 0) {
    throw DegenerateInputError("encode_text: empty sequence");
  }
  const auto d = static_cast<std::size_t>(forward.hidden_dim);

  std::vector<Tensor> columns(valid);
  for (std::size_t i = 0; i < valid; ++i) {
    columns[i] = ops::select_col(embedded, i);
  }

  std::vector<Tensor> fwd_states(valid), bwd_states(valid);
  Tensor h = Tensor::zeros({d});
  for (std::size_t i = 0; i < valid; ++i) {
    h = gru_step(forward, columns[i], h);
    fwd_states[i] = h;
  }
  h = Tensor::zeros({d});
  for (std::size_t i = valid; i-- > 0;) {
    h = gru_step(backward, columns[i], h);
    bwd_states[i] = h;
  }

  std::vector<Tensor> per_position(n);
  Tensor zero_col = Tensor::zeros({2 * d});
  for (std::size_t i = 0; i < n; ++i) {
    per_position[i] = i < valid
                          ? ops::concat({fwd_states[i], bwd_states[i]})
                          : zero_col;
  }
  // Assemble [2d x N] column by column; backward slices the gradient back.
  Tensor states = Tensor::zeros({2 * d, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t r = 0; r < 2 * d; ++r)
      states.at2(r, i) = per_position[i].at(r);
  if (Tape::active() &&
      (forward.w_update.requires_grad() || embedded.requires_grad())) {
    states.set_requires_grad(true);
    Tape::active()->record([per_position, states, d, n]() mutable {
      if (!states.has_grad()) return;
      const auto& g = states.grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < 2 * d; ++r)
          per_position[i].accumulate(r, g[r * n + i]);
    });
  }

  BiGruEncoding enc;
  enc.states = states;
  enc.mask = mask;
  enc.valid_length = valid;
  return enc;
}

Tensor encode_question(const GruParams& forward, const GruParams& backward,
                       const Tensor& embedded,
                       const std::vector<std::uint8_t>* mask) {
  if (embedded.rank() != 2) {
    throw DimensionError("encode_question: expected [D x N] embeddings, got " +
                         shape_string(embedded.shape()));
  }
  const std::size_t n = embedded.dim(1);
  std::size_t valid = n;
  if (mask) {
    if (mask->size() != n) {
      throw DimensionError("encode_question: mask length mismatch");
    }
    valid = prefix_length(*mask, "encode_question");
  }
  if (valid == 0) {
    throw DegenerateInputError("encode_question: empty question");
  }
  const auto d = static_cast<std::size_t>(forward.hidden_dim);

  std::vector<Tensor> columns(valid);
  for (std::size_t i = 0; i < valid; ++i) {
    columns[i] = ops::select_col(embedded, i);
  }

  Tensor h = Tensor::zeros({d});
  for (std::size_t i = 0; i < valid; ++i) h = gru_step(forward, columns[i], h);
  Tensor final_forward = h;

  h = Tensor::zeros({d});
  for (std::size_t i = valid; i-- > 0;) h = gru_step(backward, columns[i], h);
  Tensor initial_backward = h;

  return ops::concat({final_forward, initial_backward});
}

}  // namespace epi
