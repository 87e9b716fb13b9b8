#pragma once

#include "botsai/matrix.hpp"
#include "botsai/segment_index.hpp"

#include <cstddef>

// Hot loops used by the autodiff ops. Each kernel has a serial reference
// version and an OpenMP version; the unprefixed entry points dispatch to the
// OpenMP version, which falls back to one thread below a work threshold.
// Tests check that both agree; bench/ compares their speed.
namespace botsai::kernels {

// Attention over index segments. For target t and head h (columns
// [h*dk, (h+1)*dk)), scores are scale * <q_t, k_s> over the sources s of t,
// softmax-normalised per (t, h); out_t = sum alpha * v_s. Targets with no
// sources produce zero rows. alpha is num_entries x heads.
struct AttentionShape {
    std::size_t heads = 1;
    double scale = 1.0;
};

namespace serial {

// c = op(a) * op(b) + beta * c
void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c, double beta);

void segment_attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const SegmentIndex& idx, AttentionShape shape, Matrix& out,
                               Matrix& alpha);

// Accumulates into dq, dk, dv.
void segment_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                const SegmentIndex& idx, AttentionShape shape,
                                const Matrix& alpha, const Matrix& dout, Matrix& dq, Matrix& dk,
                                Matrix& dv);

void segment_mean_forward(const Matrix& x, const SegmentIndex& idx, Matrix& out);
void segment_mean_backward(const SegmentIndex& idx, const Matrix& dout, Matrix& dx);

} // namespace serial

namespace omp {

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c, double beta);

void segment_attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const SegmentIndex& idx, AttentionShape shape, Matrix& out,
                               Matrix& alpha);

void segment_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                const SegmentIndex& idx, AttentionShape shape,
                                const Matrix& alpha, const Matrix& dout, Matrix& dq, Matrix& dk,
                                Matrix& dv);

void segment_mean_forward(const Matrix& x, const SegmentIndex& idx, Matrix& out);
void segment_mean_backward(const SegmentIndex& idx, const Matrix& dout, Matrix& dx);

} // namespace omp

inline void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c,
                 double beta) {
    omp::gemm(a, trans_a, b, trans_b, c, beta);
}

inline void segment_attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                      const SegmentIndex& idx, AttentionShape shape,
                                      Matrix& out, Matrix& alpha) {
    omp::segment_attention_forward(q, k, v, idx, shape, out, alpha);
}

inline void segment_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                       const SegmentIndex& idx, AttentionShape shape,
                                       const Matrix& alpha, const Matrix& dout, Matrix& dq,
                                       Matrix& dk, Matrix& dv) {
    omp::segment_attention_backward(q, k, v, idx, shape, alpha, dout, dq, dk, dv);
}

inline void segment_mean_forward(const Matrix& x, const SegmentIndex& idx, Matrix& out) {
    omp::segment_mean_forward(x, idx, out);
}

inline void segment_mean_backward(const SegmentIndex& idx, const Matrix& dout, Matrix& dx) {
    omp::segment_mean_backward(idx, dout, dx);
}

} // namespace botsai::kernels
