#pragma once

#include "botsai/ops.hpp"
#include "botsai/params.hpp"

#include <array>
#include <string>
#include <vector>

namespace botsai {

inline constexpr std::size_t kModes = 3;  // graph, text, metadata
inline constexpr std::array<const char*, kModes> kModeNames{"G", "T", "M"};

// Row-aligned (B x d_h) hidden vectors for each mode.
struct SubspaceBundle {
    std::array<Var, kModes> invariant;
    std::array<Var, kModes> specific;

    // Fusion order: invariant G, T, M then specific G, T, M.
    std::vector<Var> tokens() const;
};

struct SubspaceParams {
    std::size_t hidden = 0;
    std::size_t heads = 1;
    std::size_t tokens = 6;
    std::array<Linear, kModes> specific;
    Linear invariant;  // shared across modes
    Linear fuse_q, fuse_k, fuse_v;
    std::string fuse_out;  // W_o, no bias
    Linear detect;         // tokens * d_h -> 1

    // With_projectors = false creates only the detection head over `tokens`
    // concatenated vectors (the BASE variant).
    static SubspaceParams create(ParamStore& store, std::size_t hidden, std::size_t heads,
                                 std::size_t tokens, bool with_projectors = true);
};

// Specific: per-mode affine + activation. Invariant: one shared affine + activation.
SubspaceBundle project(Tape& t, const ParamStore& store, const SubspaceParams& p,
                       const std::array<Var, kModes>& x, Activation activation);

// Multi-head self-attention across each user's S tokens, output map W_o, then the
// S transformed vectors concatenated in token order (B x S*d_h). If alpha_out is
// non-null it receives the (B*S*S) x heads attention weights.
Var fuse(Tape& t, const ParamStore& store, const SubspaceParams& p,
         const std::vector<Var>& tokens, Matrix* alpha_out = nullptr);

// sigmoid(h_out w + b), B x 1.
Var detect(Tape& t, const ParamStore& store, const SubspaceParams& p, Var h_out);

// Hard label: bot iff probability >= 0.5.
inline bool is_bot(double probability) { return probability >= 0.5; }

} // namespace botsai
