#include "botsai/subspace.hpp"

#include "botsai/encoders.hpp"
#include "botsai/errors.hpp"

#include <cmath>
#include <memory>

namespace botsai {

std::vector<Var> SubspaceBundle::tokens() const {
    return {invariant[0], invariant[1], invariant[2], specific[0], specific[1], specific[2]};
}

SubspaceParams SubspaceParams::create(ParamStore& store, std::size_t hidden, std::size_t heads,
                                      std::size_t tokens, bool with_projectors) {
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" +
                          std::to_string(hidden) + ")");
    }
    if (tokens == 0) {
        throw ConfigError("fusion needs at least one token");
    }
    SubspaceParams p;
    p.hidden = hidden;
    p.heads = heads;
    p.tokens = tokens;
    if (with_projectors) {
        for (std::size_t m = 0; m < kModes; ++m) {
            p.specific[m] =
                Linear::create(store, std::string("sub.specific.") + kModeNames[m], hidden, hidden);
        }
        p.invariant = Linear::create(store, "sub.invariant", hidden, hidden);
        p.fuse_q = Linear::create(store, "fuse.q", hidden, hidden);
        p.fuse_k = Linear::create(store, "fuse.k", hidden, hidden);
        p.fuse_v = Linear::create(store, "fuse.v", hidden, hidden);
        p.fuse_out = "fuse.out.w";
        store.add(p.fuse_out, Matrix(hidden, hidden), ParamKind::weight);
    }
    p.detect = Linear::create(store, "detect", tokens * hidden, 1);
    return p;
}

SubspaceBundle project(Tape& t, const ParamStore& store, const SubspaceParams& p,
                       const std::array<Var, kModes>& x, Activation activation) {
    SubspaceBundle b;
    for (std::size_t m = 0; m < kModes; ++m) {
        b.specific[m] = activate(apply_linear(t, store, p.specific[m], x[m]), activation);
        b.invariant[m] = activate(apply_linear(t, store, p.invariant, x[m]), activation);
    }
    return b;
}

Var fuse(Tape& t, const ParamStore& store, const SubspaceParams& p,
         const std::vector<Var>& tokens, Matrix* alpha_out) {
    if (tokens.size() != p.tokens) {
        throw DimensionError("fuse: expected " + std::to_string(p.tokens) + " tokens, got " +
                             std::to_string(tokens.size()));
    }
    const std::size_t batch = tokens.front().rows();
    Var seq = interleave_rows(tokens);  // row b*S + s
    Var q = apply_linear(t, store, p.fuse_q, seq);
    Var k = apply_linear(t, store, p.fuse_k, seq);
    Var v = apply_linear(t, store, p.fuse_v, seq);
    auto idx = std::make_shared<const SegmentIndex>(SegmentIndex::dense_groups(batch, p.tokens));
    const double dk = static_cast<double>(p.hidden / p.heads);
    Var z = segment_attention(q, k, v, idx, {p.heads, 1.0 / std::sqrt(dk)}, alpha_out);
    Var out = matmul(z, t.param(store, p.fuse_out));
    return reshape(out, batch, p.tokens * p.hidden);
}

Var detect(Tape& t, const ParamStore& store, const SubspaceParams& p, Var h_out) {
    return sigmoid(apply_linear(t, store, p.detect, h_out));
}

} // namespace botsai
