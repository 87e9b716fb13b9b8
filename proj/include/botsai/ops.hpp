#pragma once

#include "botsai/kernels.hpp"
#include "botsai/matrix.hpp"
#include "botsai/segment_index.hpp"
#include "botsai/tape.hpp"

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

// Differentiable ops over Tape values. Every op records its output and a
// backward closure; shape errors throw DimensionError naming both shapes.
namespace botsai {

enum class Activation { relu, leaky_relu, tanh, identity };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

Var matmul(Var a, Var b);
Var transpose(Var a);

// x W + b with b broadcast over rows. Pass an invalid Var to skip the bias.
Var affine(Var x, Var w, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// a * s for a 1x1 s.
Var scale_by(Var a, Var s);
Var reciprocal(Var a);
Var pow_int(Var a, int k);

// Row broadcast: x (n x c) op row (1 x c).
Var add_row(Var x, Var row);
Var sub_row(Var x, Var row);

Var relu(Var x);
Var leaky_relu(Var x, double slope = 0.01);
Var tanh(Var x);
Var sigmoid(Var x);
Var activate(Var x, Activation a);

Var softmax_rows(Var x);

// Inverted dropout: survivors scaled by 1/(1-rate). Identity when !training or rate==0.
Var dropout(Var x, double rate, bool training, std::mt19937_64& rng);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var x, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var gather_rows(Var x, std::span<const std::size_t> rows);

// Row k of the output is weight_a * x[a] + weight_b * x[b].
struct RowMix {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight_a = 1.0;
    double weight_b = 0.0;
};
Var mix_rows(Var x, std::span<const RowMix> mixes);

// parts[s] is B x d; output row b*S + s is parts[s] row b.
Var interleave_rows(const std::vector<Var>& parts);
Var reshape(Var x, std::size_t rows, std::size_t cols);

Var col_mean(Var x);
Var sum_all(Var x);
Var sum_squares(Var x);
// Euclidean norm of all entries; the subgradient at zero is zero.
Var l2_norm(Var x);
Var max_all(Var x);
Var min_all(Var x);

// Each row divided by its L2 norm; zero rows stay zero.
Var row_l2_normalize(Var x);

// -sum[y log p + (1-y) log(1-p)] with p clipped to [1e-12, 1-1e-12].
// probs is n x 1; labels must be 0 or 1.
Var bce_sum(Var probs, std::span<const double> labels);

// See kernels::segment_attention_forward. If alpha_out is non-null the
// normalised attention weights are copied there.
Var segment_attention(Var q, Var k, Var v, std::shared_ptr<const SegmentIndex> idx,
                      kernels::AttentionShape shape, Matrix* alpha_out = nullptr);

Var segment_mean(Var x, std::shared_ptr<const SegmentIndex> idx);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double c, Var a) { return scale(a, c); }

// Non-differentiable helper used by tests and oracles.
Matrix softmax_rows(const Matrix& x);

} // namespace botsai
