#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "common/rng.hpp"
#include "numerics/tensor.hpp"

namespace elcorec::nn {

// Differentiable ops. Rank-2 tensors are [rows x cols]; where noted a rank-1
// tensor is accepted and read as one row.

/// op(a) * op(b), optionally transposing either operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// a[m x n] + bias[n], broadcast over rows.
Tensor add_row(const Tensor& a, const Tensor& bias);
/// Sum of several same-shape tensors.
Tensor add_n(const std::vector<Tensor>& terms);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);

/// Embedding lookup: out[i] = table[index[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
/// out[segment[i]] += src[i]; out has num_segments rows.
Tensor segment_sum(const Tensor& src, std::span<const std::size_t> segment, std::size_t num_segments);
/// Column-wise softmax of scores[E x H] within each group of rows sharing a
/// segment id.
Tensor segment_softmax(const Tensor& scores, std::span<const std::size_t> segment, std::size_t num_segments);
/// Per-head dot product: x[N x H*dh], a[H x dh] -> [N x H].
Tensor head_dot(const Tensor& x, const Tensor& a);
/// Per-head scaling: x[E x H*dh] * w[E x H] broadcast over each head block.
Tensor head_scale(const Tensor& x, const Tensor& w);
/// Copy of x[L x d] with row `row` replaced by v (d values).
Tensor replace_row(const Tensor& x, std::size_t row, const Tensor& v);

Tensor leaky_relu(const Tensor& a, double slope);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// Row-wise softmax with max subtraction. A rank-1 input is one row.
Tensor softmax(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Cosine similarity of matching rows: [m x d], [m x d] -> [m].
Tensor row_cosine(const Tensor& a, const Tensor& b);
/// Mean binary cross-entropy of probabilities p[m] against 0/1 labels.
Tensor binary_cross_entropy(const Tensor& p, std::span<const double> labels);
/// Mean softmax cross-entropy of logits[m x V] against class ids.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
/// Multi-head causal self-attention on already projected q, k, v [L x d].
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);
/// Inverted dropout. Identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

double sigmoid(double x);
/// Plain softmax of a vector; throws DomainError on empty input.
std::vector<double> softmax(std::span<const double> v);

}  // namespace elcorec::nn
