#include "botsai/ops.hpp"

#include "botsai/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace botsai {

namespace {

Tape& tape_of(Var v) {
    if (!v.valid()) {
        throw ConsistencyError("op on an unbound Var");
    }
    return *v.tape();
}

void add_into(Matrix& dst, const Matrix& src, double w = 1.0) {
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst.data()[i] += w * src.data()[i];
    }
}

template <class F>
Matrix map(const Matrix& x, F f) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.data()[i] = f(x.data()[i]);
    }
    return out;
}

void require_scalar(const Var& s, const char* op) {
    if (s.rows() != 1 || s.cols() != 1) {
        throw DimensionError(std::string(op) + ": expected 1x1 operand, got " +
                             shape_str(s.value()));
    }
}

} // namespace

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::relu;
    if (name == "leaky_relu") return Activation::leaky_relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
    }
    return "relu";
}

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a);
    require_shape(a.cols() == b.rows(), "matmul", a.value(), b.value());
    Matrix out;
    kernels::gemm(a.value(), false, b.value(), false, out, 0.0);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (Matrix* da = tp.grad_target(a)) {
            kernels::gemm(g, false, b.value(), true, *da, 1.0);
        }
        if (Matrix* db = tp.grad_target(b)) {
            kernels::gemm(a.value(), true, g, false, *db, 1.0);
        }
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    const Matrix& x = a.value();
    Matrix out(x.cols(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            out(j, i) = x(i, j);
        }
    }
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        Matrix* da = tp.grad_target(a);
        for (std::size_t i = 0; i < da->rows(); ++i) {
            for (std::size_t j = 0; j < da->cols(); ++j) {
                (*da)(i, j) += g(j, i);
            }
        }
    });
}

Var affine(Var x, Var w, Var b) {
    Tape& t = tape_of(x);
    require_shape(x.cols() == w.rows(), "affine", x.value(), w.value());
    if (b.valid()) {
        require_shape(b.rows() == 1 && b.cols() == w.cols(), "affine(bias)", w.value(),
                      b.value());
    }
    Matrix out;
    kernels::gemm(x.value(), false, w.value(), false, out, 0.0);
    std::vector<Var> inputs{x, w};
    if (b.valid()) {
        const auto bias = b.value().row(0);
        for (std::size_t i = 0; i < out.rows(); ++i) {
            auto r = out.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                r[j] += bias[j];
            }
        }
        inputs.push_back(b);
    }
    return t.record(std::move(out), inputs, [x, w, b](Tape& tp, const Matrix& g) {
        if (Matrix* dx = tp.grad_target(x)) {
            kernels::gemm(g, false, w.value(), true, *dx, 1.0);
        }
        if (Matrix* dw = tp.grad_target(w)) {
            kernels::gemm(x.value(), true, g, false, *dw, 1.0);
        }
        if (b.valid()) {
            if (Matrix* db = tp.grad_target(b)) {
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    for (std::size_t j = 0; j < g.cols(); ++j) {
                        (*db)(0, j) += g(i, j);
                    }
                }
            }
        }
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a);
    require_shape(a.value().same_shape(b.value()), "add", a.value(), b.value());
    Matrix out = a.value();
    add_into(out, b.value());
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (Matrix* da = tp.grad_target(a)) add_into(*da, g);
        if (Matrix* db = tp.grad_target(b)) add_into(*db, g);
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a);
    require_shape(a.value().same_shape(b.value()), "sub", a.value(), b.value());
    Matrix out = a.value();
    add_into(out, b.value(), -1.0);
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (Matrix* da = tp.grad_target(a)) add_into(*da, g);
        if (Matrix* db = tp.grad_target(b)) add_into(*db, g, -1.0);
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a);
    require_shape(a.value().same_shape(b.value()), "mul", a.value(), b.value());
    Matrix out = a.value();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] *= b.value().data()[i];
    }
    return t.record(std::move(out), {a, b}, [a, b](Tape& tp, const Matrix& g) {
        if (Matrix* da = tp.grad_target(a)) {
            for (std::size_t i = 0; i < g.size(); ++i) da->data()[i] += g.data()[i] * b.value().data()[i];
        }
        if (Matrix* db = tp.grad_target(b)) {
            for (std::size_t i = 0; i < g.size(); ++i) db->data()[i] += g.data()[i] * a.value().data()[i];
        }
    });
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    Matrix out = map(a.value(), [c](double v) { return c * v; });
    return t.record(std::move(out), {a}, [a, c](Tape& tp, const Matrix& g) {
        add_into(*tp.grad_target(a), g, c);
    });
}

Var scale_by(Var a, Var s) {
    Tape& t = tape_of(a);
    require_scalar(s, "scale_by");
    const double c = s.value().scalar();
    Matrix out = map(a.value(), [c](double v) { return c * v; });
    return t.record(std::move(out), {a, s}, [a, s](Tape& tp, const Matrix& g) {
        if (Matrix* da = tp.grad_target(a)) add_into(*da, g, s.value().scalar());
        if (Matrix* ds = tp.grad_target(s)) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * a.value().data()[i];
            (*ds)(0, 0) += acc;
        }
    });
}

Var reciprocal(Var a) {
    Tape& t = tape_of(a);
    Matrix out = map(a.value(), [](double v) { return 1.0 / v; });
    return t.record(std::move(out), {a}, [a](Tape& tp, const Matrix& g) {
        Matrix* da = tp.grad_target(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = a.value().data()[i];
            da->data()[i] -= g.data()[i] / (v * v);
        }
    });
}

Var pow_int(Var a, int k) {
    Tape& t = tape_of(a);
    if (k < 1) {
        throw ConfigError("pow_int: exponent must be >= 1");
    }
    Matrix out = map(a.value(), [k](double v) { return std::pow(v, k); });
    return t.record(std::move(out), {a}, [a, k](Tape& tp, const Matrix& g) {
        Matrix* da = tp.grad_target(a);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double v = a.value().data()[i];
            da->data()[i] += g.data()[i] * k * (k == 1 ? 1.0 : std::pow(v, k - 1));
        }
    });
}

Var add_row(Var x, Var row) {
    Tape& t = tape_of(x);
    require_shape(row.rows() == 1 && row.cols() == x.cols(), "add_row", x.value(), row.value());
    Matrix out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += row.value()(0, j);
    }
    return t.record(std::move(out), {x, row}, [x, row](Tape& tp, const Matrix& g) {
        if (Matrix* dx = tp.grad_target(x)) add_into(*dx, g);
        if (Matrix* dr = tp.grad_target(row)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) (*dr)(0, j) += g(i, j);
            }
        }
    });
}

Var sub_row(Var x, Var row) {
    Tape& t = tape_of(x);
    require_shape(row.rows() == 1 && row.cols() == x.cols(), "sub_row", x.value(), row.value());
    Matrix out = x.value();
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) -= row.value()(0, j);
    }
    return t.record(std::move(out), {x, row}, [x, row](Tape& tp, const Matrix& g) {
        if (Matrix* dx = tp.grad_target(x)) add_into(*dx, g);
        if (Matrix* dr = tp.grad_target(row)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) (*dr)(0, j) -= g(i, j);
            }
        }
    });
}

Var relu(Var x) {
    return leaky_relu(x, 0.0);
}

Var leaky_relu(Var x, double slope) {
    Tape& t = tape_of(x);
    Matrix out = map(x.value(), [slope](double v) { return v > 0.0 ? v : slope * v; });
    return t.record(std::move(out), {x}, [x, slope](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx->data()[i] += x.value().data()[i] > 0.0 ? g.data()[i] : slope * g.data()[i];
        }
    });
}

Var tanh(Var x) {
    Tape& t = tape_of(x);
    Matrix out = map(x.value(), [](double v) { return std::tanh(v); });
    const std::size_t out_id = t.size();
    return t.record(std::move(out), {x}, [x, out_id](Tape& tp, const Matrix& g) {
        const Matrix& y = tp.value(out_id);
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            dx->data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
        }
    });
}

Var sigmoid(Var x) {
    Tape& t = tape_of(x);
    Matrix out = map(x.value(), [](double v) {
        if (v >= 0.0) {
            return 1.0 / (1.0 + std::exp(-v));
        }
        const double e = std::exp(v);
        return e / (1.0 + e);
    });
    const std::size_t out_id = t.size();
    return t.record(std::move(out), {x}, [x, out_id](Tape& tp, const Matrix& g) {
        const Matrix& y = tp.value(out_id);
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double s = y.data()[i];
            dx->data()[i] += g.data()[i] * s * (1.0 - s);
        }
    });
}

Var activate(Var x, Activation a) {
    switch (a) {
    case Activation::relu: return relu(x);
    case Activation::leaky_relu: return leaky_relu(x, 0.01);
    case Activation::tanh: return tanh(x);
    case Activation::identity: return x;
    }
    return x;
}

Matrix softmax_rows(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto r = x.row(i);
        const double peak = r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
        double total = 0.0;
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(i, j) = std::exp(r[j] - peak);
            total += out(i, j);
        }
        for (std::size_t j = 0; j < r.size(); ++j) {
            out(i, j) /= total;
        }
    }
    return out;
}

Var softmax_rows(Var x) {
    Tape& t = tape_of(x);
    Matrix out = softmax_rows(x.value());
    const std::size_t out_id = t.size();
    return t.record(std::move(out), {x}, [x, out_id](Tape& tp, const Matrix& g) {
        const Matrix& y = tp.value(out_id);
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j) (*dx)(i, j) += y(i, j) * (g(i, j) - dot);
        }
    });
}

Var dropout(Var x, double rate, bool training, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    Tape& t = tape_of(x);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    Matrix mask(x.rows(), x.cols());
    for (double& m : mask.values()) {
        m = unit(rng) < rate ? 0.0 : keep_scale;
    }
    Matrix out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
    return t.record(std::move(out), {x}, [x, mask = std::move(mask)](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx->data()[i] += g.data()[i] * mask.data()[i];
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no inputs");
    }
    Tape& t = tape_of(parts.front());
    const std::size_t rows = parts.front().rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        require_shape(p.rows() == rows, "concat_cols", parts.front().value(), p.value());
        cols += p.cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const Var& p : parts) {
        for (std::size_t i = 0; i < rows; ++i) {
            std::copy(p.value().row(i).begin(), p.value().row(i).end(),
                      out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
        }
        offset += p.cols();
    }
    return t.record(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            if (Matrix* dp = tp.grad_target(p)) {
                for (std::size_t i = 0; i < dp->rows(); ++i) {
                    for (std::size_t j = 0; j < dp->cols(); ++j) (*dp)(i, j) += g(i, off + j);
                }
            }
            off += p.cols();
        }
    });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
    Tape& t = tape_of(x);
    if (start + count > x.cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") out of " + shape_str(x.value()));
    }
    Matrix out(x.rows(), count);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < count; ++j) out(i, j) = x.value()(i, start + j);
    }
    return t.record(std::move(out), {x}, [x, start](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.rows(); ++i) {
            for (std::size_t j = 0; j < g.cols(); ++j) (*dx)(i, start + j) += g(i, j);
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("concat_rows: no inputs");
    }
    Tape& t = tape_of(parts.front());
    const std::size_t cols = parts.front().cols();
    std::vector<double> data;
    std::size_t rows = 0;
    for (const Var& p : parts) {
        require_shape(p.cols() == cols, "concat_rows", parts.front().value(), p.value());
        data.insert(data.end(), p.value().values().begin(), p.value().values().end());
        rows += p.rows();
    }
    Matrix out(rows, cols, std::move(data));
    return t.record(std::move(out), parts, [parts](Tape& tp, const Matrix& g) {
        std::size_t off = 0;
        for (const Var& p : parts) {
            if (Matrix* dp = tp.grad_target(p)) {
                for (std::size_t i = 0; i < dp->size(); ++i) dp->data()[i] += g.data()[off + i];
            }
            off += p.value().size();
        }
    });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
    Tape& t = tape_of(x);
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    Matrix out(idx.size(), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= x.rows()) {
            throw DimensionError("gather_rows: row " + std::to_string(idx[i]) + " out of " +
                                 shape_str(x.value()));
        }
        std::copy(x.value().row(idx[i]).begin(), x.value().row(idx[i]).end(), out.row(i).begin());
    }
    return t.record(std::move(out), {x}, [x, idx = std::move(idx)](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto d = dx->row(idx[i]);
            const auto gi = g.row(i);
            for (std::size_t j = 0; j < d.size(); ++j) d[j] += gi[j];
        }
    });
}

Var mix_rows(Var x, std::span<const RowMix> mixes) {
    Tape& t = tape_of(x);
    std::vector<RowMix> mx(mixes.begin(), mixes.end());
    Matrix out(mx.size(), x.cols());
    for (std::size_t k = 0; k < mx.size(); ++k) {
        if (mx[k].a >= x.rows() || mx[k].b >= x.rows()) {
            throw DimensionError("mix_rows: parent index out of " + shape_str(x.value()));
        }
        const auto ra = x.value().row(mx[k].a);
        const auto rb = x.value().row(mx[k].b);
        auto o = out.row(k);
        for (std::size_t j = 0; j < o.size(); ++j) {
            o[j] = mx[k].weight_a * ra[j] + mx[k].weight_b * rb[j];
        }
    }
    return t.record(std::move(out), {x}, [x, mx = std::move(mx)](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t k = 0; k < mx.size(); ++k) {
            const auto gk = g.row(k);
            auto da = dx->row(mx[k].a);
            for (std::size_t j = 0; j < gk.size(); ++j) da[j] += mx[k].weight_a * gk[j];
            auto db = dx->row(mx[k].b);
            for (std::size_t j = 0; j < gk.size(); ++j) db[j] += mx[k].weight_b * gk[j];
        }
    });
}

Var interleave_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw DimensionError("interleave_rows: no inputs");
    }
    Tape& t = tape_of(parts.front());
    const std::size_t b = parts.front().rows();
    const std::size_t d = parts.front().cols();
    const std::size_t s = parts.size();
    for (const Var& p : parts) {
        require_shape(p.value().same_shape(parts.front().value()), "interleave_rows",
                      parts.front().value(), p.value());
    }
    Matrix out(b * s, d);
    for (std::size_t k = 0; k < s; ++k) {
        for (std::size_t i = 0; i < b; ++i) {
            std::copy(parts[k].value().row(i).begin(), parts[k].value().row(i).end(),
                      out.row(i * s + k).begin());
        }
    }
    return t.record(std::move(out), parts, [parts, s](Tape& tp, const Matrix& g) {
        for (std::size_t k = 0; k < s; ++k) {
            if (Matrix* dp = tp.grad_target(parts[k])) {
                for (std::size_t i = 0; i < dp->rows(); ++i) {
                    const auto gi = g.row(i * s + k);
                    auto di = dp->row(i);
                    for (std::size_t j = 0; j < di.size(); ++j) di[j] += gi[j];
                }
            }
        }
    });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
    Tape& t = tape_of(x);
    if (rows * cols != x.value().size()) {
        throw DimensionError("reshape: " + shape_str(x.value()) + " to " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    }
    Matrix out(rows, cols, std::vector<double>(x.value().values().begin(), x.value().values().end()));
    return t.record(std::move(out), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < g.size(); ++i) dx->data()[i] += g.data()[i];
    });
}

Var col_mean(Var x) {
    Tape& t = tape_of(x);
    if (x.rows() == 0) {
        throw DimensionError("col_mean: empty input");
    }
    const double n = static_cast<double>(x.rows());
    Matrix out(1, x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) out(0, j) += x.value()(i, j);
    }
    for (double& v : out.values()) v /= n;
    return t.record(std::move(out), {x}, [x, n](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < dx->rows(); ++i) {
            for (std::size_t j = 0; j < dx->cols(); ++j) (*dx)(i, j) += g(0, j) / n;
        }
    });
}

Var sum_all(Var x) {
    Tape& t = tape_of(x);
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return t.record(Matrix(1, 1, s), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (double& d : dx->values()) d += g(0, 0);
    });
}

Var sum_squares(Var x) {
    Tape& t = tape_of(x);
    double s = 0.0;
    for (double v : x.value().values()) s += v * v;
    return t.record(Matrix(1, 1, s), {x}, [x](Tape& tp, const Matrix& g) {
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < dx->size(); ++i) dx->data()[i] += 2.0 * g(0, 0) * x.value().data()[i];
    });
}

Var l2_norm(Var x) {
    Tape& t = tape_of(x);
    double s = 0.0;
    for (double v : x.value().values()) s += v * v;
    const double norm = std::sqrt(s);
    return t.record(Matrix(1, 1, norm), {x}, [x, norm](Tape& tp, const Matrix& g) {
        if (norm == 0.0) {
            return;
        }
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < dx->size(); ++i) dx->data()[i] += g(0, 0) * x.value().data()[i] / norm;
    });
}

namespace {

Var extreme(Var x, bool want_max) {
    Tape& t = tape_of(x);
    if (x.value().empty()) {
        throw DimensionError("max/min of an empty matrix");
    }
    const auto vals = x.value().values();
    const auto it = want_max ? std::max_element(vals.begin(), vals.end())
                             : std::min_element(vals.begin(), vals.end());
    const auto pos = static_cast<std::size_t>(it - vals.begin());
    return t.record(Matrix(1, 1, *it), {x}, [x, pos](Tape& tp, const Matrix& g) {
        tp.grad_target(x)->data()[pos] += g(0, 0);
    });
}

} // namespace

Var max_all(Var x) {
    return extreme(x, true);
}

Var min_all(Var x) {
    return extreme(x, false);
}

Var row_l2_normalize(Var x) {
    Tape& t = tape_of(x);
    const Matrix& xv = x.value();
    Matrix out(xv.rows(), xv.cols());
    std::vector<double> norms(xv.rows(), 0.0);
    for (std::size_t i = 0; i < xv.rows(); ++i) {
        double s = 0.0;
        for (double v : xv.row(i)) s += v * v;
        norms[i] = std::sqrt(s);
        if (norms[i] > 0.0) {
            for (std::size_t j = 0; j < xv.cols(); ++j) out(i, j) = xv(i, j) / norms[i];
        }
    }
    const std::size_t out_id = t.size();
    return t.record(std::move(out), {x}, [x, out_id, norms = std::move(norms)](Tape& tp, const Matrix& g) {
        const Matrix& y = tp.value(out_id);
        Matrix* dx = tp.grad_target(x);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            if (norms[i] == 0.0) {
                continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < y.cols(); ++j) dot += y(i, j) * g(i, j);
            for (std::size_t j = 0; j < y.cols(); ++j) {
                (*dx)(i, j) += (g(i, j) - y(i, j) * dot) / norms[i];
            }
        }
    });
}

Var bce_sum(Var probs, std::span<const double> labels) {
    Tape& t = tape_of(probs);
    constexpr double lo = 1e-12;
    constexpr double hi = 1.0 - 1e-12;
    if (probs.cols() != 1 || probs.rows() != labels.size()) {
        throw DimensionError("bce_sum: probabilities " + shape_str(probs.value()) + " vs " +
                             std::to_string(labels.size()) + " labels");
    }
    std::vector<double> y(labels.begin(), labels.end());
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0) {
            throw LabelError("bce_sum: label " + std::to_string(y[i]) + " outside {0,1}");
        }
        const double p = std::clamp(probs.value()(i, 0), lo, hi);
        loss -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
    }
    return t.record(Matrix(1, 1, loss), {probs}, [probs, y = std::move(y)](Tape& tp, const Matrix& g) {
        Matrix* dp = tp.grad_target(probs);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double p = probs.value()(i, 0);
            if (p < lo || p > hi) {
                continue;
            }
            (*dp)(i, 0) += g(0, 0) * (-y[i] / p + (1.0 - y[i]) / (1.0 - p));
        }
    });
}

Var segment_attention(Var q, Var k, Var v, std::shared_ptr<const SegmentIndex> idx,
                      kernels::AttentionShape shape, Matrix* alpha_out) {
    Tape& t = tape_of(q);
    Matrix out;
    Matrix alpha;
    kernels::segment_attention_forward(q.value(), k.value(), v.value(), *idx, shape, out, alpha);
    if (alpha_out != nullptr) {
        *alpha_out = alpha;
    }
    return t.record(std::move(out), {q, k, v},
                    [q, k, v, idx, shape, alpha = std::move(alpha)](Tape& tp, const Matrix& g) {
                        Matrix dq(q.rows(), q.cols());
                        Matrix dk(k.rows(), k.cols());
                        Matrix dv(v.rows(), v.cols());
                        kernels::segment_attention_backward(q.value(), k.value(), v.value(), *idx,
                                                            shape, alpha, g, dq, dk, dv);
                        if (Matrix* d = tp.grad_target(q)) add_into(*d, dq);
                        if (Matrix* d = tp.grad_target(k)) add_into(*d, dk);
                        if (Matrix* d = tp.grad_target(v)) add_into(*d, dv);
                    });
}

Var segment_mean(Var x, std::shared_ptr<const SegmentIndex> idx) {
    Tape& t = tape_of(x);
    Matrix out;
    kernels::segment_mean_forward(x.value(), *idx, out);
    return t.record(std::move(out), {x}, [x, idx](Tape& tp, const Matrix& g) {
        kernels::segment_mean_backward(*idx, g, *tp.grad_target(x));
    });
}

} // namespace botsai
