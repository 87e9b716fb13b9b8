#include "botsai/errors.hpp"
#include "botsai/kernels.hpp"
#include "kernels_detail.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace botsai::kernels {

namespace detail {

void prepare_gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c,
                  double beta, std::size_t& m, std::size_t& inner, std::size_t& n) {
    m = trans_a ? a.cols() : a.rows();
    inner = trans_a ? a.rows() : a.cols();
    const std::size_t inner_b = trans_b ? b.cols() : b.rows();
    n = trans_b ? b.rows() : b.cols();
    require_shape(inner == inner_b, "gemm", a, b);
    if (c.rows() != m || c.cols() != n) {
        if (beta != 0.0) {
            throw DimensionError("gemm: accumulator shape " + shape_str(c) +
                                 " does not match product");
        }
        c = Matrix(m, n);
    } else if (beta == 0.0) {
        c.fill(0.0);
    } else if (beta != 1.0) {
        for (double& x : c.values()) {
            x *= beta;
        }
    }
}

void check_attention(const Matrix& q, const Matrix& k, const Matrix& v, const SegmentIndex& idx,
                     AttentionShape shape) {
    require_shape(q.cols() == k.cols() && k.same_shape(v), "segment_attention", q, k);
    if (shape.heads == 0 || q.cols() % shape.heads != 0) {
        throw DimensionError("segment_attention: heads " + std::to_string(shape.heads) +
                             " do not divide width " + std::to_string(q.cols()));
    }
    if (q.rows() != idx.num_targets || k.rows() != idx.num_sources) {
        throw DimensionError("segment_attention: index " + std::to_string(idx.num_targets) +
                             "->" + std::to_string(idx.num_sources) + " vs q " + shape_str(q) +
                             " k " + shape_str(k));
    }
}

// Forward for one target row; shared by the serial and OpenMP drivers.
void attention_target(const Matrix& q, const Matrix& k, const Matrix& v, const SegmentIndex& idx,
                      AttentionShape shape, std::size_t t, Matrix& out, Matrix& alpha) {
    const std::size_t begin = idx.offsets[t];
    const std::size_t end = idx.offsets[t + 1];
    const std::size_t dk = q.cols() / shape.heads;
    auto out_row = out.row(t);
    std::fill(out_row.begin(), out_row.end(), 0.0);
    if (begin == end) {
        return;
    }
    const auto q_row = q.row(t);
    for (std::size_t h = 0; h < shape.heads; ++h) {
        const std::size_t c0 = h * dk;
        double peak = -INFINITY;
        for (std::size_t e = begin; e < end; ++e) {
            const auto k_row = k.row(idx.sources[e]);
            double s = 0.0;
            for (std::size_t c = c0; c < c0 + dk; ++c) {
                s += q_row[c] * k_row[c];
            }
            s *= shape.scale;
            alpha(e, h) = s;
            peak = std::max(peak, s);
        }
        double total = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
            alpha(e, h) = std::exp(alpha(e, h) - peak);
            total += alpha(e, h);
        }
        for (std::size_t e = begin; e < end; ++e) {
            alpha(e, h) /= total;
            const double a = alpha(e, h);
            const auto v_row = v.row(idx.sources[e]);
            for (std::size_t c = c0; c < c0 + dk; ++c) {
                out_row[c] += a * v_row[c];
            }
        }
    }
}

// Score gradients and dq for one target. dscore is num_entries x heads.
void attention_target_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                               const SegmentIndex& idx, AttentionShape shape,
                               const Matrix& alpha, const Matrix& dout, std::size_t t,
                               Matrix& dscore, Matrix& dq) {
    const std::size_t begin = idx.offsets[t];
    const std::size_t end = idx.offsets[t + 1];
    const std::size_t dk = q.cols() / shape.heads;
    const auto g = dout.row(t);
    auto dq_row = dq.row(t);
    (void)q;
    for (std::size_t h = 0; h < shape.heads; ++h) {
        const std::size_t c0 = h * dk;
        double weighted = 0.0;
        for (std::size_t e = begin; e < end; ++e) {
            const auto v_row = v.row(idx.sources[e]);
            double da = 0.0;
            for (std::size_t c = c0; c < c0 + dk; ++c) {
                da += g[c] * v_row[c];
            }
            dscore(e, h) = da;
            weighted += alpha(e, h) * da;
        }
        for (std::size_t e = begin; e < end; ++e) {
            const double ds = alpha(e, h) * (dscore(e, h) - weighted) * shape.scale;
            dscore(e, h) = ds;
            const auto k_row = k.row(idx.sources[e]);
            for (std::size_t c = c0; c < c0 + dk; ++c) {
                dq_row[c] += ds * k_row[c];
            }
        }
    }
}

} // namespace detail

namespace serial {

void gemm(const Matrix& a, bool trans_a, const Matrix& b, bool trans_b, Matrix& c, double beta) {
    std::size_t m = 0, inner = 0, n = 0;
    detail::prepare_gemm(a, trans_a, b, trans_b, c, beta, m, inner, n);
    for (std::size_t i = 0; i < m; ++i) {
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
    for (std::size_t t = 0; t < idx.num_targets; ++t) {
        detail::attention_target(q, k, v, idx, shape, t, out, alpha);
    }
}

void segment_attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                                const SegmentIndex& idx, AttentionShape shape,
                                const Matrix& alpha, const Matrix& dout, Matrix& dq, Matrix& dk,
                                Matrix& dv) {
    const std::size_t dk_width = q.cols() / shape.heads;
    Matrix dscore(idx.num_entries(), shape.heads);
    for (std::size_t t = 0; t < idx.num_targets; ++t) {
        detail::attention_target_backward(q, k, v, idx, shape, alpha, dout, t, dscore, dq);
    }
    for (std::size_t e = 0; e < idx.num_entries(); ++e) {
        const std::size_t t = idx.entry_target[e];
        const std::size_t s = idx.sources[e];
        const auto q_row = q.row(t);
        const auto g = dout.row(t);
        auto dk_row = dk.row(s);
        auto dv_row = dv.row(s);
        for (std::size_t h = 0; h < shape.heads; ++h) {
            const double ds = dscore(e, h);
            const double a = alpha(e, h);
            for (std::size_t c = h * dk_width; c < (h + 1) * dk_width; ++c) {
                dk_row[c] += ds * q_row[c];
                dv_row[c] += a * g[c];
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
    for (std::size_t t = 0; t < idx.num_targets; ++t) {
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
    for (std::size_t t = 0; t < idx.num_targets; ++t) {
        const std::size_t deg = idx.degree(t);
        if (deg == 0) {
            continue;
        }
        const double w = 1.0 / static_cast<double>(deg);
        const auto g = dout.row(t);
        for (std::size_t e = idx.offsets[t]; e < idx.offsets[t + 1]; ++e) {
            auto d = dx.row(idx.sources[e]);
            for (std::size_t c = 0; c < dout.cols(); ++c) {
                d[c] += w * g[c];
            }
        }
    }
}

} // namespace serial

} // namespace botsai::kernels
