#pragma once

#include "botsai/kernels.hpp"

namespace botsai::kernels::detail {

// Validates shapes and zeroes/scales the accumulator. Outputs the product
// dimensions m x n with the given inner size.
void prepare_gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c,
                  double beta, std::size_t& m, std::size_t& inner, std::size_t& n);

void check_attention(const Matrix& q, const Matrix& k, const Matrix& v, const SegmentIndex& idx,
                     AttentionShape shape);

void attention_target(const Matrix& q, const Matrix& k, const Matrix& v, const SegmentIndex& idx,
                      AttentionShape shape, std::size_t t, Matrix& out, Matrix& alpha);

void attention_target_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const SegmentIndex& idx, AttentionShape shape,
                               const Matrix& alpha, const Matrix& dout, std::size_t t,
                               Matrix& dscore, Matrix& dq);

} // namespace botsai::kernels::detail
