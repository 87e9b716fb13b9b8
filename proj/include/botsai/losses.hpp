#pragma once

#include "botsai/ops.hpp"
#include "botsai/params.hpp"
#include "botsai/subspace.hpp"

#include <array>
#include <span>

namespace botsai {

struct LossWeights {
    double alpha = 0.7;   // similarity
    double beta_w = 0.3;  // difference
    double gamma = 1.0;   // reconstruction
    double lambda = 5e-6; // L2 on weights
    int cmd_order = 5;

    // Throws ConfigError on negative weights or cmd_order < 1.
    void validate() const;
};

// Central moment discrepancy between the row distributions of x and y, with
// the value range taken from the joint min/max of both samples.
Var cmd(Var x, Var y, int order);
double cmd(const Matrix& x, const Matrix& y, int order);

// Mean pairwise CMD between the invariant matrices.
Var sim_loss(const SubspaceBundle& b, int order);

// Column-center then row-normalise each matrix; returns the summed squared
// Frobenius norms of (H^i_m)^T H^s_m for each mode plus the three cross pairs
// (G,T), (G,M), (T,M).
Var diff_loss(const SubspaceBundle& b);

// Column-centered, row-normalised copy used by diff_loss.
Var center_normalize(Var h);

struct DecoderParams {
    std::array<Linear, kModes> decoders;
    static DecoderParams create(ParamStore& store, std::size_t hidden);
};

// (1/3) sum_m ||x_m - D_m(h^i_m + h^s_m)||^2 / d_h, averaged over rows.
Var recon_loss(Tape& t, const ParamStore& store, const DecoderParams& p,
               const SubspaceBundle& b, const std::array<Var, kModes>& inputs);

// Summed binary cross-entropy plus lambda * sum of squared weights (biases excluded).
Var task_loss(Tape& t, const ParamStore& store, Var probs, std::span<const double> labels,
              double lambda);

struct LossParts {
    Var task;
    Var sim;    // invalid when the variant has no subspaces
    Var diff;
    Var recon;
};

// task + alpha sim + beta_w diff + gamma recon. A non-finite part raises
// TrainingError naming it.
Var total_loss(Tape& t, const LossParts& parts, const LossWeights& w);

} // namespace botsai
