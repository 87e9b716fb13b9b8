#include "botsai/gradcheck.hpp"

#include "botsai/errors.hpp"

#include <algorithm>
#include <cmath>

namespace botsai {

double evaluate_loss(const LossBuilder& loss, const ParamStore& store) {
    Tape tape;
    return loss(tape, store).value().scalar();
}

GradCheckReport grad_check(const LossBuilder& loss, ParamStore& store, double h, double tol,
                           double denom_floor) {
    Gradients analytic;
    double base = 0.0;
    {
        Tape tape;
        Var root = loss(tape, store);
        base = root.value().scalar();
        tape.backward(root);
        analytic = tape.param_gradients(store);
    }
    const double again = evaluate_loss(loss, store);
    if (again != base) {
        throw OracleError("grad_check: loss is not deterministic (" + std::to_string(base) +
                          " vs " + std::to_string(again) + ")");
    }

    // Roundoff in L(p+h) - L(p-h) grows with |L|, so the floor does too.
    const double floor = denom_floor * std::max(1.0, std::abs(base));
    GradCheckReport report;
    report.tolerance = tol;
    report.loss = base;
    for (const auto& name : store.names()) {
        GradCheckEntry entry;
        entry.name = name;
        Matrix& p = store.mutable_value(name);
        const Matrix& g = analytic.at(name);
        entry.count = p.size();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double saved = p.data()[i];
            p.data()[i] = saved + h;
            const double up = evaluate_loss(loss, store);
            p.data()[i] = saved - h;
            const double down = evaluate_loss(loss, store);
            p.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double a = g.data()[i];
            const double abs_err = std::abs(a - numeric);
            const double denom = std::max({std::abs(a), std::abs(numeric), floor});
            entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
            entry.max_rel_error = std::max(entry.max_rel_error, abs_err / denom);
        }
        report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
        report.params.push_back(std::move(entry));
    }
    report.passed = report.max_rel_error < tol;
    return report;
}

} // namespace botsai
