#pragma once

#include <cstdint>
#include <vector>

#include "epireader/tensor.hpp"

// Differentiable primitives. Every op validates shapes, checks its output for
// NaN/Inf, and, when a tape is active and any input requires grad, records a
// backward rule on the tape. Ops run outside a TapeScope are pure forward.
namespace epi::ops {

using Mask = std::vector<std::uint8_t>;

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m x n] . [n] -> [m]
Tensor matvec(const Tensor& a, const Tensor& x);
// [m]^T . [m x n] -> [n]
Tensor vecmat(const Tensor& x, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, Scalar c);
Tensor add_const(const Tensor& a, Scalar c);

Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log_op(const Tensor& a);

// Max-subtracted softmax over a 1-D tensor. Masked positions are exactly 0
// and take no part in the normalization. Throws DegenerateInputError when
// every position is masked.
Tensor softmax_stable(const Tensor& x, const Mask* mask = nullptr);

// Narrow (valid) 1-D convolution: seq [C x L], filters [C x m x F] (row-major,
// filter index fastest), bias [F] -> [F x (L-m+1)]. L < m is an error; the
// caller pads short sequences.
Tensor conv1d_valid(const Tensor& seq, const Tensor& filters,
                    const Tensor& bias);

// Per-row maximum of [F x L] -> [F]. Gradient goes to the first argmax.
Tensor maxpool_over_time(const Tensor& x);

// 1-D concatenation, at least one part.
Tensor concat(const std::vector<Tensor>& parts);
// Stack rows: [r1 x L] over [r2 x L] -> [(r1+r2) x L].
Tensor vconcat(const Tensor& a, const Tensor& b);
// Right-pad columns with zeros: [C x L] -> [C x new_cols], new_cols >= L.
Tensor pad_cols(const Tensor& a, std::size_t new_cols);

// Columns of `table` [D x V] selected by id -> [D x L]. Gradient scatters
// back into the table, except for columns equal to skip_grad_id.
Tensor gather_columns(const Tensor& table, const std::vector<int>& ids,
                      int skip_grad_id = -1);
// Column j of [D x N] as a vector [D].
Tensor select_col(const Tensor& x, std::size_t j);
// 1-D gather: out[i] = x[idx[i]].
Tensor gather(const Tensor& x, const std::vector<std::size_t>& idx);
// out[slot[i]] += x[i] in ascending i; slot -1 drops the element.
Tensor segment_sum(const Tensor& x, const std::vector<int>& slot,
                   std::size_t num_slots);

Tensor dot(const Tensor& a, const Tensor& b);   // 1-D -> scalar
Tensor sum(const Tensor& a);                    // -> scalar
Tensor sum_squares(const Tensor& a);            // -> scalar
Tensor pick(const Tensor& x, std::size_t i);    // 1-D element -> scalar
// x / s for scalar tensor s (broadcast).
Tensor div_scalar(const Tensor& x, const Tensor& s);

// Test hook: makes the named op apply a deliberately wrong backward rule
// ("conv" doubles the filter gradient). Empty string restores correctness.
void set_backward_fault(const std::string& op);

}  // namespace epi::ops
