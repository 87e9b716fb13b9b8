#include "botsai/losses.hpp"

#include "botsai/encoders.hpp"
#include "botsai/errors.hpp"

#include <cmath>
#include <utility>

namespace botsai {

void LossWeights::validate() const {
    auto check = [](double v, const char* name) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError(std::string(name) + " must be a finite value >= 0");
        }
    };
    check(alpha, "alpha");
    check(beta_w, "beta_w");
    check(gamma, "gamma");
    check(lambda, "lambda");
    if (cmd_order < 1) {
        throw ConfigError("cmd_order must be at least 1");
    }
}

Var cmd(Var x, Var y, int order) {
    if (x.rows() == 0 || y.rows() == 0) {
        throw DimensionError("cmd: empty sample " + shape_str(x.value()) + " vs " +
                             shape_str(y.value()));
    }
    if (x.cols() != y.cols()) {
        throw DimensionError("cmd: column mismatch " + shape_str(x.value()) + " vs " +
                             shape_str(y.value()));
    }
    if (order < 1) {
        throw ConfigError("cmd order must be at least 1");
    }
    Tape& t = *x.tape();
    Var lo = min_all(concat_cols({min_all(x), min_all(y)}));
    Var hi = max_all(concat_cols({max_all(x), max_all(y)}));
    Var range = hi - lo;
    if (range.value().scalar() == 0.0) {
        return t.constant(Matrix(1, 1));
    }
    Var inv_range = reciprocal(range);
    Var mx = col_mean(x);
    Var my = col_mean(y);
    Var total = scale_by(l2_norm(mx - my), inv_range);
    Var cx = sub_row(x, mx);
    Var cy = sub_row(y, my);
    for (int k = 2; k <= order; ++k) {
        Var diff = col_mean(pow_int(cx, k)) - col_mean(pow_int(cy, k));
        total = total + scale_by(l2_norm(diff), pow_int(inv_range, k));
    }
    return total;
}

double cmd(const Matrix& x, const Matrix& y, int order) {
    Tape t;
    return cmd(t.constant(x), t.constant(y), order).value().scalar();
}

namespace {

constexpr std::array<std::pair<std::size_t, std::size_t>, 3> kPairs{{{0, 1}, {0, 2}, {1, 2}}};

} // namespace

Var sim_loss(const SubspaceBundle& b, int order) {
    Var total;
    for (auto [m1, m2] : kPairs) {
        Var c = cmd(b.invariant[m1], b.invariant[m2], order);
        total = total.valid() ? total + c : c;
    }
    return scale(total, 1.0 / 3.0);
}

Var center_normalize(Var h) {
    return row_l2_normalize(sub_row(h, col_mean(h)));
}

Var diff_loss(const SubspaceBundle& b) {
    const std::size_t rows = b.invariant[0].rows();
    if (rows < 2) {
        throw DimensionError("diff_loss needs a batch of at least 2 rows, got " +
                             std::to_string(rows));
    }
    std::array<Var, kModes> hi, hs;
    for (std::size_t m = 0; m < kModes; ++m) {
        hi[m] = center_normalize(b.invariant[m]);
        hs[m] = center_normalize(b.specific[m]);
    }
    auto term = [](Var a, Var c) { return sum_squares(matmul(transpose(a), c)); };
    Var total = term(hi[0], hs[0]);
    for (std::size_t m = 1; m < kModes; ++m) total = total + term(hi[m], hs[m]);
    for (auto [m1, m2] : kPairs) total = total + term(hi[m1], hs[m2]);
    return total;
}

DecoderParams DecoderParams::create(ParamStore& store, std::size_t hidden) {
    DecoderParams p;
    for (std::size_t m = 0; m < kModes; ++m) {
        p.decoders[m] = Linear::create(store, std::string("dec.") + kModeNames[m], hidden, hidden);
    }
    return p;
}

Var recon_loss(Tape& t, const ParamStore& store, const DecoderParams& p,
               const SubspaceBundle& b, const std::array<Var, kModes>& inputs) {
    Var total;
    for (std::size_t m = 0; m < kModes; ++m) {
        Var recon = apply_linear(t, store, p.decoders[m], b.invariant[m] + b.specific[m]);
        require_shape(recon.value().same_shape(inputs[m].value()), "recon_loss",
                      recon.value(), inputs[m].value());
        Var err = sum_squares(inputs[m] - recon);
        total = total.valid() ? total + err : err;
    }
    const double denom =
        3.0 * static_cast<double>(inputs[0].cols()) * static_cast<double>(inputs[0].rows());
    return scale(total, 1.0 / denom);
}

Var task_loss(Tape& t, const ParamStore& store, Var probs, std::span<const double> labels,
              double lambda) {
    Var loss = bce_sum(probs, labels);
    if (lambda == 0.0) {
        return loss;
    }
    Var l2;
    for (const auto& name : store.names()) {
        if (store.kind(name) != ParamKind::weight) continue;
        Var s = sum_squares(t.param(store, name));
        l2 = l2.valid() ? l2 + s : s;
    }
    return l2.valid() ? loss + scale(l2, lambda) : loss;
}

Var total_loss(Tape& t, const LossParts& parts, const LossWeights& w) {
    auto check = [](Var v, const char* name) {
        if (v.valid() && !std::isfinite(v.value().scalar())) {
            throw TrainingError(std::string("non-finite ") + name + " loss (" +
                                std::to_string(v.value().scalar()) + ")");
        }
    };
    check(parts.task, "task");
    check(parts.sim, "similarity");
    check(parts.diff, "difference");
    check(parts.recon, "reconstruction");
    Var total = parts.task.valid() ? parts.task : t.constant(Matrix(1, 1));
    if (parts.sim.valid()) total = total + scale(parts.sim, w.alpha);
    if (parts.diff.valid()) total = total + scale(parts.diff, w.beta_w);
    if (parts.recon.valid()) total = total + scale(parts.recon, w.gamma);
    return total;
}

} // namespace botsai
