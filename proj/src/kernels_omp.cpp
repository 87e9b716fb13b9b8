#include "botsai/errors.hpp"
#include "botsai/kernels.hpp"
#include "kernels_detail.hpp"

#include <cstdint>

namespace botsai::kernels::omp {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

using Index = std::int64_t;

} // namespace

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c, double beta) {
    std::size_t m = 0, inner = 0, n = 0;
    detail::prepare_gemm(a, trans_a, b, trans_b, c, beta, m, inner, n);
    const bool big = m * inner * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (Index ii = 0; ii < static_cast<Index>(m); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        auto c_row = c.row(i);
        if (!trans_b) {
            for (std::size_t p = 0; p < inner; ++p) {
                const double aip = trans_a ? a(p, i) : a(i, p);
                if (aip == 0.0) {
                    continue;
                }
                const auto b_row = b.row(p);
                for (std::size_t j = 0; j < n; ++j) {
                    c_row[j] += aip * b_row[j];
                }
            }
        } else {
            for (std::size_t j = 0; j < n; ++j) {
                const auto b_row = b.row(j);
                double s = 0.0;
                for (std::size_t p = 0; p < inner; ++p) {
                    s += (trans_a ? a(p, i) : a(i, p)) * b_row[p];
                }
                c_row[j] += s;
            }
        }
    }
}

void segment_attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const SegmentIndex& idx, AttentionShape shape, Matrix& out,
                               Matrix& alpha) {
    detail::check_attention(q, k, v, idx, shape);
    out = Matrix(q.rows(), v.cols());
    alpha = Matrix(idx.num_entries(), shape.heads);
    const bool big = idx.num_entries() * q.cols() >= kParallelWork;
#pragma omp parallel for schedule(dynamic, 64) if (big)
    for (Index t = 0; t < static_cast<Index>(idx.num_targets); ++t) {
        detail::attention_target(q, k, v, idx, shape, static_cast<std::size_t>(t), out, alpha);
    }
}

void segment_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                const SegmentIndex& idx, AttentionShape shape,
                                const Matrix& alpha, const Matrix& dout, Matrix& dq, Matrix& dk,
                                Matrix& dv) {
    const std::size_t width = q.cols() / shape.heads;
    Matrix dscore(idx.num_entries(), shape.heads);
    const bool big = idx.num_entries() * q.cols() >= kParallelWork;
#pragma omp parallel if (big)
    {
#pragma omp for schedule(dynamic, 64)
        for (Index t = 0; t < static_cast<Index>(idx.num_targets); ++t) {
            detail::attention_target_backward(q, k, v, idx, shape, alpha, dout,
                                              static_cast<std::size_t>(t), dscore, dq);
        }
        // Gather per source through the transposed index: no write conflicts.
#pragma omp for schedule(dynamic, 64)
        for (Index si = 0; si < static_cast<Index>(idx.num_sources); ++si) {
            const auto s = static_cast<std::size_t>(si);
            auto dk_row = dk.row(s);
            auto dv_row = dv.row(s);
            for (std::size_t p = idx.source_offsets[s]; p < idx.source_offsets[s + 1]; ++p) {
                const std::size_t e = idx.source_entries[p];
                const std::size_t t = idx.entry_target[e];
                const auto q_row = q.row(t);
                const auto g = dout.row(t);
                for (std::size_t h = 0; h < shape.heads; ++h) {
                    const double ds = dscore(e, h);
                    const double a = alpha(e, h);
                    for (std::size_t c = h * width; c < (h + 1) * width; ++c) {
                        dk_row[c] += ds * q_row[c];
                        dv_row[c] += a * g[c];
                    }
                }
            }
        }
    }
}

void segment_mean_forward(const Matrix& x, const SegmentIndex& idx, Matrix& out) {
    if (x.rows() != idx.num_sources) {
        throw DimensionError("segment_mean: source rows " + std::to_string(x.rows()) +
                             " vs index " + std::to_string(idx.num_sources));
    }
    out = Matrix(idx.num_targets, x.cols());
    const bool big = idx.num_entries() * x.cols() >= kParallelWork;
#pragma omp parallel for schedule(dynamic, 64) if (big)
    for (Index ti = 0; ti < static_cast<Index>(idx.num_targets); ++ti) {
        const auto t = static_cast<std::size_t>(ti);
        const std::size_t deg = idx.degree(t);
        if (deg == 0) {
            continue;
        }
        auto o = out.row(t);
        for (std::size_t e = idx.offsets[t]; e < idx.offsets[t + 1]; ++e) {
            const auto xr = x.row(idx.sources[e]);
            for (std::size_t c = 0; c < x.cols(); ++c) {
                o[c] += xr[c];
            }
        }
        for (double& val : o) {
            val /= static_cast<double>(deg);
        }
    }
}

void segment_mean_backward(const SegmentIndex& idx, const Matrix& dout, Matrix& dx) {
    const bool big = idx.num_entries() * dout.cols() >= kParallelWork;
#pragma omp parallel for schedule(dynamic, 64) if (big)
    for (Index si = 0; si < static_cast<Index>(idx.num_sources); ++si) {
        const auto s = static_cast<std::size_t>(si);
        auto d = dx.row(s);
        for (std::size_t p = idx.source_offsets[s]; p < idx.source_offsets[s + 1]; ++p) {
            const std::size_t t = idx.entry_target[idx.source_entries[p]];
            const double w = 1.0 / static_cast<double>(idx.degree(t));
            const auto g = dout.row(t);
            for (std::size_t c = 0; c < dout.cols(); ++c) {
                d[c] += w * g[c];
            }
        }
    }
}

} // namespace botsai::kernels::omp
