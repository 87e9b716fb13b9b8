#pragma once

#include "botsai/dataset.hpp"
#include "botsai/ops.hpp"
#include "botsai/params.hpp"

#include <random>
#include <string>
#include <vector>

namespace botsai {

// Shared per-call settings for layers that may apply dropout.
struct LayerMode {
    Activation activation = Activation::relu;
    double dropout = 0.0;
    bool training = false;
    std::mt19937_64* rng = nullptr;
};

Var apply_linear(Tape& t, const ParamStore& store, const Linear& layer, Var x);

// Two dense layers with the activation (and dropout) between them.
struct Mlp {
    Linear first;
    Linear second;

    static Mlp create(ParamStore& store, const std::string& prefix, std::size_t in,
                      std::size_t hidden, std::size_t out);
    Var forward(Tape& t, const ParamStore& store, Var x, const LayerMode& mode) const;
};

struct EncoderParams {
    Mlp metadata;
    Mlp text;
    Linear node_init;  // W_D, b_D

    static EncoderParams create(ParamStore& store, std::size_t text_dim, std::size_t hidden);
};

// N x 8: z-scored numeric metadata followed by the three categorical bits.
Matrix metadata_input(const HeteroGraph& g, const ZScoreStats& stats);

// Mean of the tweet vectors; zero vector when there are none.
std::vector<double> pool_tweets(const std::vector<std::vector<double>>& tweets,
                                std::size_t dim);

// N x 2*text_dim: [description || pooled tweets].
Matrix text_input(const HeteroGraph& g);

// x_M = MLP(m). Input must be n x 8.
Var encode_metadata(Tape& t, const ParamStore& store, const EncoderParams& p, Var meta,
                    const LayerMode& mode);

// x_T = MLP([t_d || t_a]) on rows built by text_input.
Var encode_text(Tape& t, const ParamStore& store, const EncoderParams& p, Var text,
                const LayerMode& mode);

// Single-user convenience: pools the tweets, then encodes.
Var encode_text(Tape& t, const ParamStore& store, const EncoderParams& p,
                const std::vector<double>& description,
                const std::vector<std::vector<double>>& tweets, const LayerMode& mode);

// h = W_D (x_M || x_T) + b_D.
Var initial_node_feature(Tape& t, const ParamStore& store, const EncoderParams& p, Var x_meta,
                         Var x_text);

} // namespace botsai
