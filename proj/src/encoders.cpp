#include "botsai/encoders.hpp"

#include "botsai/errors.hpp"

namespace botsai {

Var apply_linear(Tape& t, const ParamStore& store, const Linear& layer, Var x) {
    Var b = layer.bias.empty() ? Var{} : t.param(store, layer.bias);
    return affine(x, t.param(store, layer.weight), b);
}

Mlp Mlp::create(ParamStore& store, const std::string& prefix, std::size_t in,
                std::size_t hidden, std::size_t out) {
    Mlp m;
    m.first = Linear::create(store, prefix + ".l1", in, hidden);
    m.second = Linear::create(store, prefix + ".l2", hidden, out);
    return m;
}

Var Mlp::forward(Tape& t, const ParamStore& store, Var x, const LayerMode& mode) const {
    if (x.cols() != first.in) {
        throw DimensionError("mlp '" + first.weight + "': expected input width " +
                             std::to_string(first.in) + ", got " + shape_str(x.value()));
    }
    Var h = activate(apply_linear(t, store, first, x), mode.activation);
    if (mode.training && mode.dropout > 0.0) {
        h = dropout(h, mode.dropout, true, *mode.rng);
    }
    return apply_linear(t, store, second, h);
}

EncoderParams EncoderParams::create(ParamStore& store, std::size_t text_dim, std::size_t hidden) {
    EncoderParams p;
    p.metadata = Mlp::create(store, "enc.meta", kMetaDim, hidden, hidden);
    p.text = Mlp::create(store, "enc.text", 2 * text_dim, hidden, hidden);
    p.node_init = Linear::create(store, "enc.node", 2 * hidden, hidden);
    return p;
}

Matrix metadata_input(const HeteroGraph& g, const ZScoreStats& stats) {
    Matrix m(g.num_users(), kMetaDim);
    for (std::size_t i = 0; i < g.num_users(); ++i) {
        const auto z = zscore_apply(stats, g.users[i].numeric_meta);
        for (std::size_t f = 0; f < kNumericMeta; ++f) m(i, f) = z[f];
        for (std::size_t f = 0; f < kCategoricalMeta; ++f) {
            m(i, kNumericMeta + f) = g.users[i].categorical_meta[f];
        }
    }
    return m;
}

std::vector<double> pool_tweets(const std::vector<std::vector<double>>& tweets,
                                std::size_t dim) {
    std::vector<double> pool(dim, 0.0);
    if (tweets.empty()) {
        return pool;
    }
    for (const auto& t : tweets) {
        if (t.size() != dim) {
            throw DimensionError("tweet embedding of dimension " + std::to_string(t.size()) +
                                 ", expected " + std::to_string(dim));
        }
        for (std::size_t j = 0; j < dim; ++j) pool[j] += t[j];
    }
    for (double& v : pool) v /= static_cast<double>(tweets.size());
    return pool;
}

Matrix text_input(const HeteroGraph& g) {
    const std::size_t d = g.text_dim;
    Matrix m(g.num_users(), 2 * d);
    for (std::size_t i = 0; i < g.num_users(); ++i) {
        const auto& u = g.users[i];
        const auto pool = pool_tweets(u.tweet_embeddings, d);
        for (std::size_t j = 0; j < d; ++j) {
            m(i, j) = u.description_embedding[j];
            m(i, d + j) = pool[j];
        }
    }
    return m;
}

Var encode_metadata(Tape& t, const ParamStore& store, const EncoderParams& p, Var meta,
                    const LayerMode& mode) {
    return p.metadata.forward(t, store, meta, mode);
}

Var encode_text(Tape& t, const ParamStore& store, const EncoderParams& p, Var text,
                const LayerMode& mode) {
    return p.text.forward(t, store, text, mode);
}

Var encode_text(Tape& t, const ParamStore& store, const EncoderParams& p,
                const std::vector<double>& description,
                const std::vector<std::vector<double>>& tweets, const LayerMode& mode) {
    const std::size_t d = description.size();
    const auto pool = pool_tweets(tweets, d);
    Matrix row(1, 2 * d);
    for (std::size_t j = 0; j < d; ++j) {
        row(0, j) = description[j];
        row(0, d + j) = pool[j];
    }
    return encode_text(t, store, p, t.constant(std::move(row)), mode);
}

Var initial_node_feature(Tape& t, const ParamStore& store, const EncoderParams& p, Var x_meta,
                         Var x_text) {
    require_shape(x_meta.value().same_shape(x_text.value()), "initial_node_feature",
                  x_meta.value(), x_text.value());
    return apply_linear(t, store, p.node_init, concat_cols({x_meta, x_text}));
}

} // namespace botsai
