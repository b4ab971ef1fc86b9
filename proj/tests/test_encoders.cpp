#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "epireader/encoders.hpp"
#include "epireader/grad_check.hpp"
#include "epireader/ops.hpp"
#include "epireader/rng.hpp"

using namespace epi;

namespace {

GruParams zero_gru(int input_dim, int hidden_dim) {
  Rng rng(0);
  GruParams p = GruParams::init(input_dim, hidden_dim, rng);
  for (auto& [name, t] : p.named("p")) {
    for (std::size_t i = 0; i < t.size(); ++i) t.at(i) = 0.0;
  }
  return p;
}

}  // namespace

TEST_CASE("embed_lookup repeats columns for repeated ids") {
  Rng rng(1);
  EmbeddingTable table = EmbeddingTable::init(4, 6, 0, rng);
  Tensor out = table.lookup({3, 3});
  for (std::size_t r = 0; r < 4; ++r) CHECK(out.at2(r, 0) == out.at2(r, 1));
}

TEST_CASE("embed_lookup padding column is zero and gets no gradient") {
  Rng rng(2);
  EmbeddingTable table = EmbeddingTable::init(4, 6, 0, rng);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor out = table.lookup({0, 3});
    for (std::size_t r = 0; r < 4; ++r) CHECK(out.at2(r, 0) == 0.0);
    tape.backward(ops::sum(out));
  }
  const auto& g = table.weights.grad();
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(g[r * 6 + 0] == 0.0);  // padding column untouched
    CHECK(g[r * 6 + 3] == 1.0);
  }
}

TEST_CASE("embed_lookup rejects out-of-range ids naming the id") {
  Rng rng(3);
  EmbeddingTable table = EmbeddingTable::init(4, 6, 0, rng);
  CHECK_THROWS_WITH_AS(table.lookup({6}), doctest::Contains("6"), VocabError);
}

TEST_CASE("embed_lookup repeated id accumulates two contributions") {
  Rng rng(4);
  EmbeddingTable table = EmbeddingTable::init(3, 8, 0, rng);
  auto report = grad_check(
      [&]() { return ops::sum_squares(table.lookup({2, 5, 2})); },
      {{"weights", table.weights}}, 1e-5, 1e-5);
  CHECK(report.all_pass());
  // Column 2 feeds two positions: its gradient is the sum of both.
  table.weights.zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(ops::sum(table.lookup({2, 5, 2})));
  }
  CHECK(table.weights.grad()[0 * 8 + 2] == doctest::Approx(2.0));
  CHECK(table.weights.grad()[0 * 8 + 5] == doctest::Approx(1.0));
}

TEST_CASE("gru_step with all-zero parameters and inputs stays at zero") {
  GruParams p = zero_gru(3, 4);
  Tensor x = Tensor::zeros({3});
  Tensor h = Tensor::zeros({4});
  Tensor next = gru_step(p, x, h);
  for (std::size_t i = 0; i < 4; ++i) CHECK(next.at(i) == 0.0);
}

TEST_CASE("gru_step saturated update gate follows the candidate state") {
  Rng rng(5);
  GruParams p = GruParams::init(3, 4, rng);
  for (std::size_t i = 0; i < 4; ++i) p.b_update.at(i) = 1e3;
  Tensor x = Tensor::from({3}, {0.3, -0.2, 0.5});
  Tensor h = Tensor::from({4}, {0.1, -0.4, 0.2, 0.7});
  Tensor next = gru_step(p, x, h);
  // With z ~= 1, h' ~= tanh(W_h x + U_h (r*h) + b_h).
  using namespace ops;
  Tensor r = sigmoid(add(add(matvec(p.w_reset, x), matvec(p.u_reset, h)),
                         p.b_reset));
  Tensor cand = tanh_op(
      add(add(matvec(p.w_cand, x), matvec(p.u_cand, mul(r, h))), p.b_cand));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(next.at(i) == doctest::Approx(cand.at(i)).epsilon(1e-9));
  }
}

TEST_CASE("gru_step rejects mismatched shapes") {
  Rng rng(6);
  GruParams p = GruParams::init(3, 4, rng);
  CHECK_THROWS_AS(gru_step(p, Tensor::zeros({5}), Tensor::zeros({4})),
                  DimensionError);
}

TEST_CASE("gru_step gradients match finite differences") {
  Rng rng(7);
  GruParams p = GruParams::init(4, 4, rng);
  Tensor x = Tensor::zeros({4}, true);
  Tensor h = Tensor::zeros({4}, true);
  for (std::size_t i = 0; i < 4; ++i) {
    x.at(i) = rng.uniform(-1, 1);
    h.at(i) = rng.uniform(-1, 1);
  }
  std::vector<std::pair<std::string, Tensor>> inputs = p.named("gru");
  inputs.emplace_back("x", x);
  inputs.emplace_back("h", h);
  auto report = grad_check(
      [&]() { return ops::sum_squares(gru_step(p, x, h)); }, inputs, 1e-5,
      1e-5);
  CHECK(report.all_pass());
}

TEST_CASE("encode_text single token has dimension 2d") {
  Rng rng(8);
  GruParams fwd = GruParams::init(3, 5, rng);
  GruParams bwd = GruParams::init(3, 5, rng);
  Tensor emb = Tensor::from({3, 1}, {0.1, 0.2, 0.3});
  BiGruEncoding enc = encode_text(fwd, bwd, emb, {1});
  CHECK(enc.states.shape() == Shape{10, 1});
  CHECK(enc.valid_length == 1);
}

TEST_CASE("encode_text on a palindrome with shared parameters is symmetric") {
  Rng rng(9);
  GruParams shared = GruParams::init(3, 4, rng);
  Rng data_rng(10);
  Tensor col_a = Tensor::zeros({3});
  Tensor col_b = Tensor::zeros({3});
  for (std::size_t i = 0; i < 3; ++i) {
    col_a.at(i) = data_rng.uniform(-1, 1);
    col_b.at(i) = data_rng.uniform(-1, 1);
  }
  // Tokens [a, b, a].
  Tensor emb = Tensor::zeros({3, 3});
  for (std::size_t r = 0; r < 3; ++r) {
    emb.at2(r, 0) = col_a.at(r);
    emb.at2(r, 1) = col_b.at(r);
    emb.at2(r, 2) = col_a.at(r);
  }
  BiGruEncoding enc = encode_text(shared, shared, emb, {1, 1, 1});
  // Forward state at i equals backward state at N-1-i.
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 0; r < 4; ++r) {
      CHECK(enc.states.at2(r, i) ==
            doctest::Approx(enc.states.at2(4 + r, 2 - i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("encode_text masked tail positions are zero vectors") {
  Rng rng(11);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  Tensor emb = Tensor::zeros({3, 5});
  for (std::size_t i = 0; i < emb.size(); ++i) emb.at(i) = rng.uniform(-1, 1);
  BiGruEncoding enc = encode_text(fwd, bwd, emb, {1, 1, 1, 0, 0});
  for (std::size_t i = 3; i < 5; ++i) {
    for (std::size_t r = 0; r < 8; ++r) CHECK(enc.states.at2(r, i) == 0.0);
  }
}

TEST_CASE("encode_text output is invariant to padding length") {
  Rng rng(12);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t pad = rng.below(4);
    Tensor emb = Tensor::zeros({3, n});
    for (std::size_t i = 0; i < emb.size(); ++i)
      emb.at(i) = rng.uniform(-1, 1);
    Tensor padded = ops::pad_cols(emb, n + pad);
    std::vector<std::uint8_t> mask(n + pad, 0);
    for (std::size_t i = 0; i < n; ++i) mask[i] = 1;
    BiGruEncoding trimmed =
        encode_text(fwd, bwd, emb, std::vector<std::uint8_t>(n, 1));
    BiGruEncoding wide = encode_text(fwd, bwd, padded, mask);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < 8; ++r) {
        CHECK(trimmed.states.at2(r, i) == wide.states.at2(r, i));
      }
    }
  }
}

TEST_CASE("encode_text rejects an empty sequence") {
  Rng rng(13);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  CHECK_THROWS_AS(encode_text(fwd, bwd, Tensor::zeros({3, 2}), {0, 0}),
                  DegenerateInputError);
}

TEST_CASE("encode_question of a single token is a one-step state pair") {
  Rng rng(14);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  Tensor emb = Tensor::from({3, 1}, {0.4, -0.1, 0.2});
  Tensor q = encode_question(fwd, bwd, emb);
  REQUIRE(q.shape() == Shape{8});
  Tensor x = ops::select_col(emb, 0);
  Tensor f1 = gru_step(fwd, x, Tensor::zeros({4}));
  Tensor b1 = gru_step(bwd, x, Tensor::zeros({4}));
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(q.at(i) == f1.at(i));
    CHECK(q.at(4 + i) == b1.at(i));
  }
}

TEST_CASE("encode_question yields 2d = 256 for d = 128") {
  Rng rng(15);
  GruParams fwd = GruParams::init(4, 128, rng);
  GruParams bwd = GruParams::init(4, 128, rng);
  Tensor emb = Tensor::from({4, 1}, {0.1, 0.2, 0.3, 0.4});
  CHECK(encode_question(fwd, bwd, emb).dim(0) == 256);
}

TEST_CASE("encode_question is padding-invariant under masking") {
  Rng rng(16);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  Tensor emb = Tensor::zeros({3, 4});
  for (std::size_t i = 0; i < emb.size(); ++i) emb.at(i) = rng.uniform(-1, 1);
  Tensor padded = ops::pad_cols(emb, 7);
  std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0, 0, 0};
  Tensor plain = encode_question(fwd, bwd, emb);
  Tensor masked = encode_question(fwd, bwd, padded, &mask);
  for (std::size_t i = 0; i < 8; ++i) CHECK(plain.at(i) == masked.at(i));
}

TEST_CASE("encode_question rejects an empty question") {
  Rng rng(17);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  Tensor emb = Tensor::zeros({3, 2});
  std::vector<std::uint8_t> mask = {0, 0};
  CHECK_THROWS_AS(encode_question(fwd, bwd, emb, &mask),
                  DegenerateInputError);
}

TEST_CASE("GRU states stay inside (-1, 1) from a zero start") {
  Rng rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    GruParams p = GruParams::init(3, 4, rng);
    Tensor h = Tensor::zeros({4});
    for (int step = 0; step < 8; ++step) {
      Tensor x = Tensor::zeros({3});
      for (std::size_t i = 0; i < 3; ++i) x.at(i) = rng.uniform(-10, 10);
      h = gru_step(p, x, h);
      for (std::size_t i = 0; i < 4; ++i) {
        CHECK(h.at(i) > -1.0);
        CHECK(h.at(i) < 1.0);
      }
    }
  }
}

TEST_CASE("every GRU parameter tensor receives gradient on a nontrivial loss") {
  Rng rng(19);
  GruParams fwd = GruParams::init(3, 4, rng);
  GruParams bwd = GruParams::init(3, 4, rng);
  Tensor emb = Tensor::zeros({3, 4}, true);
  for (std::size_t i = 0; i < emb.size(); ++i) emb.at(i) = rng.uniform(-1, 1);
  Tape tape;
  {
    TapeScope scope(tape);
    BiGruEncoding enc = encode_text(fwd, bwd, emb, {1, 1, 1, 1});
    tape.backward(ops::sum_squares(enc.states));
  }
  auto all = fwd.named("fwd");
  for (auto& nt : bwd.named("bwd")) all.push_back(nt);
  for (auto& [name, t] : all) {
    REQUIRE_MESSAGE(t.has_grad(), name);
    Scalar norm = 0;
    for (Scalar g : t.grad()) norm += std::abs(g);
    CHECK_MESSAGE(norm > 0.0, name);
  }
}
