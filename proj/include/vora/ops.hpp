#pragma once

#include "vora/real.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "vora/tensor.hpp"

VORA_BEGIN_NAMESPACE

using TokenId = std::int32_t;

/// Additive mask sentinel standing in for -inf. Softmax outputs at masked
/// positions are written as exact zeros.
inline constexpr real kMasked = std::numeric_limits<real>::lowest();

// Linear algebra. All matrices are 2-D row-major.
Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor linear(const Tensor& x, const Tensor& w);  // x * w^T : [m,k] x [n,k] -> [m,n]
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, const Shape& shape);

// Elementwise; operands must share a shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);
/// x[m,n] + bias[n] broadcast over rows.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);
Tensor silu(const Tensor& x);

/// y = x / sqrt(mean(x^2) + eps) * gain over each trailing vector.
Tensor rms_norm(const Tensor& x, const Tensor& gain, real eps);

/// Row softmax of x + mask. Mask entries must be 0 or kMasked; masked
/// outputs are exactly 0. Throws when a row has no unmasked entry.
Tensor softmax_rows(const Tensor& x, const Tensor& additive_mask);
Tensor softmax_rows(const Tensor& x);

/// Mean negative log-softmax probability of `targets` over rows whose
/// ignore flag is false. Returns shape [1].
Tensor cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                     const std::vector<bool>& ignore);

/// Rows of table[V,d] gathered by id.
Tensor embedding(const Tensor& table, std::span<const TokenId> ids);

/// Concatenate 2-D tensors along axis 0 (rows) or 1 (columns).
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Rotary position embedding on x[seq, n_heads*head_dim], rotating the two
/// halves of each head. Row r is at position r + offset.
Tensor rope(const Tensor& x, std::size_t n_heads, real base, std::size_t offset = 0);

/// Cosine similarity of matching rows, shape [rows]. Zero-norm rows throw.
Tensor cosine_rows(const Tensor& a, const Tensor& b);

VORA_END_NAMESPACE
