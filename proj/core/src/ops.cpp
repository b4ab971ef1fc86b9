#include "epireader/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace epi::ops {

namespace {

std::string g_backward_fault;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got shape " +
                         shape_string(t.shape()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

// Elementwise op with d(out)/d(in) computed from (in, out) per element.
template <typename Fwd, typename Dfn>
Tensor unary_elementwise(const char* op, const Tensor& a, Fwd fwd, Dfn dfn) {
  Tensor out = Tensor::zeros(a.shape());
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) out.at(i) = fwd(a.at(i));
  check_finite(op, out);
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor in = a;
    Tape::active()->record([in, out, dfn]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        in.accumulate(i, g[i] * dfn(in.at(i), out.at(i)));
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  Scalar* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const Scalar aik = pa[i * k + kk];
      const Scalar* brow = pb + kk * n;
      Scalar* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  check_finite("matmul", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out, m, k, n]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (ta.requires_grad()) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            Scalar acc = 0;
            for (std::size_t j = 0; j < n; ++j)
              acc += g[i * n + j] * tb.at(kk * n + j);
            ta.accumulate(i * k + kk, acc);
          }
      }
      if (tb.requires_grad()) {
        for (std::size_t kk = 0; kk < k; ++kk)
          for (std::size_t j = 0; j < n; ++j) {
            Scalar acc = 0;
            for (std::size_t i = 0; i < m; ++i)
              acc += ta.at(i * k + kk) * g[i * n + j];
            tb.accumulate(kk * n + j, acc);
          }
      }
    });
  }
  return out;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  require_rank("matvec", a, 2);
  require_rank("matvec", x, 1);
  if (a.dim(1) != x.dim(0)) {
    throw DimensionError("matvec: " + shape_string(a.shape()) + " vs " +
                         shape_string(x.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({m});
  const Scalar* pa = a.data();
  const Scalar* px = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    Scalar acc = 0;
    const Scalar* row = pa + i * n;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * px[j];
    out.at(i) = acc;
  }
  check_finite("matvec", out);
  if (recording({&a, &x})) {
    out.set_requires_grad(true);
    Tensor ta = a, tx = x;
    Tape::active()->record([ta, tx, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (ta.requires_grad()) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            ta.accumulate(i * n + j, g[i] * tx.at(j));
      }
      if (tx.requires_grad()) {
        for (std::size_t j = 0; j < n; ++j) {
          Scalar acc = 0;
          for (std::size_t i = 0; i < m; ++i) acc += g[i] * ta.at(i * n + j);
          tx.accumulate(j, acc);
        }
      }
    });
  }
  return out;
}

Tensor vecmat(const Tensor& x, const Tensor& a) {
  require_rank("vecmat", x, 1);
  require_rank("vecmat", a, 2);
  if (x.dim(0) != a.dim(0)) {
    throw DimensionError("vecmat: " + shape_string(x.shape()) + " vs " +
                         shape_string(a.shape()));
  }
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = Tensor::zeros({n});
  const Scalar* pa = a.data();
  const Scalar* px = x.data();
  Scalar* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar xi = px[i];
    const Scalar* row = pa + i * n;
    for (std::size_t j = 0; j < n; ++j) po[j] += xi * row[j];
  }
  check_finite("vecmat", out);
  if (recording({&x, &a})) {
    out.set_requires_grad(true);
    Tensor tx = x, ta = a;
    Tape::active()->record([tx, ta, out, m, n]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      if (tx.requires_grad()) {
        for (std::size_t i = 0; i < m; ++i) {
          Scalar acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[j] * ta.at(i * n + j);
          tx.accumulate(i, acc);
        }
      }
      if (ta.requires_grad()) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            ta.accumulate(i * n + j, tx.at(i) * g[j]);
      }
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) + b.at(i);
  check_finite("add", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ta.accumulate(i, g[i]);
        tb.accumulate(i, g[i]);
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) - b.at(i);
  check_finite("sub", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ta.accumulate(i, g[i]);
        tb.accumulate(i, -g[i]);
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out.at(i) = a.at(i) * b.at(i);
  check_finite("mul", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        ta.accumulate(i, g[i] * tb.at(i));
        tb.accumulate(i, g[i] * ta.at(i));
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, Scalar c) {
  return unary_elementwise(
      "scale", a, [c](Scalar v) { return c * v; },
      [c](Scalar, Scalar) { return c; });
}

Tensor add_const(const Tensor& a, Scalar c) {
  return unary_elementwise(
      "add_const", a, [c](Scalar v) { return v + c; },
      [](Scalar, Scalar) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_elementwise(
      "sigmoid", a,
      [](Scalar v) {
        return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                      : std::exp(v) / (1.0 + std::exp(v));
      },
      [](Scalar, Scalar o) { return o * (1.0 - o); });
}

Tensor tanh_op(const Tensor& a) {
  return unary_elementwise(
      "tanh", a, [](Scalar v) { return std::tanh(v); },
      [](Scalar, Scalar o) { return 1.0 - o * o; });
}

Tensor relu(const Tensor& a) {
  return unary_elementwise(
      "relu", a, [](Scalar v) { return v > 0 ? v : 0.0; },
      [](Scalar in, Scalar) { return in > 0 ? 1.0 : 0.0; });
}

Tensor log_op(const Tensor& a) {
  return unary_elementwise(
      "log", a, [](Scalar v) { return std::log(v); },
      [](Scalar in, Scalar) { return 1.0 / in; });
}

Tensor softmax_stable(const Tensor& x, const Mask* mask) {
  require_rank("softmax", x, 1);
  const std::size_t n = x.dim(0);
  if (mask && mask->size() != n) {
    throw DimensionError("softmax: mask length " +
                         std::to_string(mask->size()) + " vs input length " +
                         std::to_string(n));
  }
  Scalar max_v = -std::numeric_limits<Scalar>::infinity();
  std::size_t live = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !(*mask)[i]) continue;
    ++live;
    max_v = std::max(max_v, x.at(i));
  }
  if (live == 0) {
    throw DegenerateInputError("softmax: every position is masked");
  }
  Tensor out = Tensor::zeros({n});
  Scalar total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask && !(*mask)[i]) continue;
    const Scalar e = std::exp(x.at(i) - max_v);
    out.at(i) = e;
    total += e;
  }
  for (std::size_t i = 0; i < n; ++i) out.at(i) /= total;
  check_finite("softmax", out);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    const Mask live_mask = mask ? *mask : Mask();
    Tape::active()->record([tx, out, live_mask]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      Scalar dotg = 0;
      for (std::size_t i = 0; i < g.size(); ++i) dotg += g[i] * out.at(i);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (!live_mask.empty() && !live_mask[i]) continue;
        tx.accumulate(i, out.at(i) * (g[i] - dotg));
      }
    });
  }
  return out;
}

Tensor conv1d_valid(const Tensor& seq, const Tensor& filters,
                    const Tensor& bias) {
  require_rank("conv1d", seq, 2);
  require_rank("conv1d", filters, 3);
  require_rank("conv1d", bias, 1);
  const std::size_t channels = seq.dim(0), length = seq.dim(1);
  const std::size_t width = filters.dim(1), nf = filters.dim(2);
  if (filters.dim(0) != channels || bias.dim(0) != nf) {
    throw DimensionError("conv1d: seq " + shape_string(seq.shape()) +
                         ", filters " + shape_string(filters.shape()) +
                         ", bias " + shape_string(bias.shape()));
  }
  if (length < width) {
    throw DegenerateInputError(
        "conv1d: sequence too short, length " + std::to_string(length) +
        " < filter width " + std::to_string(width));
  }
  const std::size_t steps = length - width + 1;
  Tensor out = Tensor::zeros({nf, steps});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t f = 0; f < nf; ++f) out.at2(f, t) = bias.at(f);
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t j = 0; j < width; ++j) {
        const Scalar v = seq.at2(c, t + j);
        const Scalar* frow = filters.data() + (c * width + j) * nf;
        for (std::size_t f = 0; f < nf; ++f) out.at2(f, t) += v * frow[f];
      }
    }
  }
  check_finite("conv1d", out);
  if (recording({&seq, &filters, &bias})) {
    out.set_requires_grad(true);
    Tensor ts = seq, tf = filters, tb = bias;
    const bool fault = g_backward_fault == "conv";
    Tape::active()->record(
        [ts, tf, tb, out, channels, width, nf, steps, fault]() mutable {
          if (!out.has_grad()) return;
          const auto& g = out.grad();
          if (tb.requires_grad()) {
            for (std::size_t f = 0; f < nf; ++f) {
              Scalar acc = 0;
              for (std::size_t t = 0; t < steps; ++t) acc += g[f * steps + t];
              tb.accumulate(f, acc);
            }
          }
          const Scalar filter_gain = fault ? 2.0 : 1.0;
          for (std::size_t t = 0; t < steps; ++t) {
            for (std::size_t c = 0; c < channels; ++c) {
              for (std::size_t j = 0; j < width; ++j) {
                const std::size_t base = (c * width + j) * nf;
                if (ts.requires_grad()) {
                  Scalar acc = 0;
                  for (std::size_t f = 0; f < nf; ++f)
                    acc += g[f * steps + t] * tf.at(base + f);
                  ts.accumulate(c * (steps + width - 1) + t + j, acc);
                }
                if (tf.requires_grad()) {
                  const Scalar v = ts.at2(c, t + j) * filter_gain;
                  for (std::size_t f = 0; f < nf; ++f)
                    tf.accumulate(base + f, g[f * steps + t] * v);
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor maxpool_over_time(const Tensor& x) {
  require_rank("maxpool", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (cols == 0) {
    throw DegenerateInputError("maxpool: empty time axis");
  }
  Tensor out = Tensor::zeros({rows});
  std::vector<std::size_t> argmax(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    Scalar best = x.at2(r, 0);
    std::size_t best_t = 0;
    for (std::size_t t = 1; t < cols; ++t) {
      if (x.at2(r, t) > best) {
        best = x.at2(r, t);
        best_t = t;
      }
    }
    out.at(r) = best;
    argmax[r] = best_t;
  }
  check_finite("maxpool", out);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    Tape::active()->record([tx, out, argmax, cols]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t r = 0; r < g.size(); ++r) {
        tx.accumulate(r * cols + argmax[r], g[r]);
      }
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw DegenerateInputError("concat: no parts");
  }
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    require_rank("concat", p, 1);
    total += p.dim(0);
  }
  Tensor out = Tensor::zeros({total});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < p.dim(0); ++i) out.at(offset + i) = p.at(i);
    offset += p.dim(0);
  }
  check_finite("concat", out);
  bool rec = false;
  if (Tape::active()) {
    for (const Tensor& p : parts) rec = rec || p.requires_grad();
  }
  if (rec) {
    out.set_requires_grad(true);
    std::vector<Tensor> ins = parts;
    Tape::active()->record([ins, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      std::size_t offset = 0;
      for (Tensor& p : ins) {
        for (std::size_t i = 0; i < p.dim(0); ++i)
          p.accumulate(i, g[offset + i]);
        offset += p.dim(0);
      }
    });
  }
  return out;
}

Tensor vconcat(const Tensor& a, const Tensor& b) {
  require_rank("vconcat", a, 2);
  require_rank("vconcat", b, 2);
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("vconcat: column mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  const std::size_t ra = a.dim(0), rb = b.dim(0), cols = a.dim(1);
  Tensor out = Tensor::zeros({ra + rb, cols});
  std::copy(a.data(), a.data() + ra * cols, out.data());
  std::copy(b.data(), b.data() + rb * cols, out.data() + ra * cols);
  check_finite("vconcat", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out, ra, rb, cols]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < ra * cols; ++i) ta.accumulate(i, g[i]);
      for (std::size_t i = 0; i < rb * cols; ++i)
        tb.accumulate(i, g[ra * cols + i]);
    });
  }
  return out;
}

Tensor pad_cols(const Tensor& a, std::size_t new_cols) {
  require_rank("pad_cols", a, 2);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (new_cols < cols) {
    throw DimensionError("pad_cols: target " + std::to_string(new_cols) +
                         " below current " + std::to_string(cols));
  }
  if (new_cols == cols) return a;
  Tensor out = Tensor::zeros({rows, new_cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at2(r, c) = a.at2(r, c);
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor ta = a;
    Tape::active()->record([ta, out, rows, cols, new_cols]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
          ta.accumulate(r * cols + c, g[r * new_cols + c]);
    });
  }
  return out;
}

Tensor gather_columns(const Tensor& table, const std::vector<int>& ids,
                      int skip_grad_id) {
  require_rank("gather_columns", table, 2);
  const std::size_t rows = table.dim(0), vocab = table.dim(1);
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw VocabError("token id " + std::to_string(id) +
                       " outside table of " + std::to_string(vocab) +
                       " columns");
    }
  }
  const std::size_t n = ids.size();
  Tensor out = Tensor::zeros({rows, n});
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = static_cast<std::size_t>(ids[j]);
    for (std::size_t r = 0; r < rows; ++r) out.at2(r, j) = table.at2(r, src);
  }
  check_finite("gather_columns", out);
  if (recording({&table})) {
    out.set_requires_grad(true);
    Tensor tt = table;
    Tape::active()->record([tt, out, ids, skip_grad_id, rows, vocab,
                            n]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t j = 0; j < n; ++j) {
        if (ids[j] == skip_grad_id) continue;
        const std::size_t dst = static_cast<std::size_t>(ids[j]);
        for (std::size_t r = 0; r < rows; ++r)
          tt.accumulate(r * vocab + dst, g[r * n + j]);
      }
    });
  }
  return out;
}

Tensor select_col(const Tensor& x, std::size_t j) {
  require_rank("select_col", x, 2);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (j >= cols) {
    throw DimensionError("select_col: column " + std::to_string(j) +
                         " out of range " + std::to_string(cols));
  }
  Tensor out = Tensor::zeros({rows});
  for (std::size_t r = 0; r < rows; ++r) out.at(r) = x.at2(r, j);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    Tape::active()->record([tx, out, j, cols]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t r = 0; r < g.size(); ++r)
        tx.accumulate(r * cols + j, g[r]);
    });
  }
  return out;
}

Tensor gather(const Tensor& x, const std::vector<std::size_t>& idx) {
  require_rank("gather", x, 1);
  for (std::size_t i : idx) {
    if (i >= x.dim(0)) {
      throw DimensionError("gather: index " + std::to_string(i) +
                           " out of range " + std::to_string(x.dim(0)));
    }
  }
  Tensor out = Tensor::zeros({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out.at(i) = x.at(idx[i]);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    Tape::active()->record([tx, out, idx]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < idx.size(); ++i) tx.accumulate(idx[i], g[i]);
    });
  }
  return out;
}

Tensor segment_sum(const Tensor& x, const std::vector<int>& slot,
                   std::size_t num_slots) {
  require_rank("segment_sum", x, 1);
  if (slot.size() != x.dim(0)) {
    throw DimensionError("segment_sum: slot list length " +
                         std::to_string(slot.size()) + " vs input length " +
                         std::to_string(x.dim(0)));
  }
  Tensor out = Tensor::zeros({num_slots});
  for (std::size_t i = 0; i < slot.size(); ++i) {
    if (slot[i] < 0) continue;
    if (static_cast<std::size_t>(slot[i]) >= num_slots) {
      throw DimensionError("segment_sum: slot " + std::to_string(slot[i]) +
                           " out of range " + std::to_string(num_slots));
    }
    out.at(static_cast<std::size_t>(slot[i])) += x.at(i);
  }
  check_finite("segment_sum", out);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    Tape::active()->record([tx, out, slot]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      for (std::size_t i = 0; i < slot.size(); ++i) {
        if (slot[i] >= 0)
          tx.accumulate(i, g[static_cast<std::size_t>(slot[i])]);
      }
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  require_rank("dot", a, 1);
  require_rank("dot", b, 1);
  require_same_shape("dot", a, b);
  Scalar acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
  Tensor out = Tensor::scalar(0);
  out.at(0) = acc;
  check_finite("dot", out);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ta = a, tb = b;
    Tape::active()->record([ta, tb, out]() mutable {
      if (!out.has_grad()) return;
      const Scalar g = out.grad()[0];
      for (std::size_t i = 0; i < ta.size(); ++i) {
        ta.accumulate(i, g * tb.at(i));
        tb.accumulate(i, g * ta.at(i));
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  Scalar acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
  Tensor out = Tensor::scalar(0);
  out.at(0) = acc;
  check_finite("sum", out);
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor ta = a;
    Tape::active()->record([ta, out]() mutable {
      if (!out.has_grad()) return;
      const Scalar g = out.grad()[0];
      for (std::size_t i = 0; i < ta.size(); ++i) ta.accumulate(i, g);
    });
  }
  return out;
}

Tensor sum_squares(const Tensor& a) {
  Scalar acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * a.at(i);
  Tensor out = Tensor::scalar(0);
  out.at(0) = acc;
  check_finite("sum_squares", out);
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor ta = a;
    Tape::active()->record([ta, out]() mutable {
      if (!out.has_grad()) return;
      const Scalar g = out.grad()[0];
      for (std::size_t i = 0; i < ta.size(); ++i)
        ta.accumulate(i, 2.0 * g * ta.at(i));
    });
  }
  return out;
}

Tensor pick(const Tensor& x, std::size_t i) {
  require_rank("pick", x, 1);
  if (i >= x.dim(0)) {
    throw DimensionError("pick: index " + std::to_string(i) +
                         " out of range " + std::to_string(x.dim(0)));
  }
  Tensor out = Tensor::scalar(x.at(i));
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor tx = x;
    Tape::active()->record([tx, out, i]() mutable {
      if (!out.has_grad()) return;
      tx.accumulate(i, out.grad()[0]);
    });
  }
  return out;
}

Tensor div_scalar(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) {
    throw DimensionError("div_scalar: divisor must be scalar, got " +
                         shape_string(s.shape()));
  }
  const Scalar denom = s.at(0);
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = x.at(i) / denom;
  check_finite("div_scalar", out);
  if (recording({&x, &s})) {
    out.set_requires_grad(true);
    Tensor tx = x, ts = s;
    Tape::active()->record([tx, ts, out]() mutable {
      if (!out.has_grad()) return;
      const auto& g = out.grad();
      const Scalar denom = ts.at(0);
      Scalar s_acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        tx.accumulate(i, g[i] / denom);
        s_acc += g[i] * tx.at(i);
      }
      ts.accumulate(0, -s_acc / (denom * denom));
    });
  }
  return out;
}

void set_backward_fault(const std::string& op) { g_backward_fault = op; }

}  // namespace epi::ops
