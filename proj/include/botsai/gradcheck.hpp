#pragma once

#include "botsai/params.hpp"
#include "botsai/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace botsai {

// Builds a scalar loss on the given tape from the parameters in the store.
// Must be deterministic: no dropout, fixed data.
using LossBuilder = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> params;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    double loss = 0.0;  // L at the unperturbed parameters
    bool passed = false;
};

// Central differences (L(p+h) - L(p-h)) / 2h against the tape gradient for
// every scalar of every parameter. The relative error of one entry is
// |analytic - numeric| / max(|analytic|, |numeric|, denom_floor * max(1, |L|)).
// The floor keeps gradients that are zero up to rounding from reporting
// finite-difference noise, which scales with |L|, as error.
// Throws OracleError if two evaluations at the same point differ.
GradCheckReport grad_check(const LossBuilder& loss, ParamStore& store, double h, double tol,
                           double denom_floor = 1e-6);

double evaluate_loss(const LossBuilder& loss, const ParamStore& store);

} // namespace botsai
