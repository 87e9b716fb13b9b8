#include "botsai/params.hpp"

#include "botsai/errors.hpp"

#include <cmath>

namespace botsai {

void ParamStore::add(const std::string& name, Matrix value, ParamKind kind) {
    if (entries_.count(name) != 0) {
        throw ConsistencyError("duplicate parameter name '" + name + "'");
    }
    Entry e;
    e.first_moment = Matrix(value.rows(), value.cols());
    e.second_moment = Matrix(value.rows(), value.cols());
    e.value = std::move(value);
    e.kind = kind;
    entries_.emplace(name, std::move(e));
    creation_order_.push_back(name);
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ConsistencyError("unknown parameter '" + name + "'");
    }
    return it->second;
}

const Matrix& ParamStore::value(const std::string& name) const {
    return entry(name).value;
}

Matrix& ParamStore::mutable_value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ConsistencyError("unknown parameter '" + name + "'");
    }
    return it->second.value;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [name, _] : entries_) {
        out.push_back(name);
    }
    return out;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) {
        n += e.value.size();
    }
    return n;
}

void ParamStore::init_xavier(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (const auto& name : creation_order_) {
        Entry& e = entries_.at(name);
        if (e.kind == ParamKind::bias) {
            e.value.fill(0.0);
            continue;
        }
        const double limit =
            std::sqrt(6.0 / static_cast<double>(e.value.rows() + e.value.cols()));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& x : e.value.values()) {
            x = dist(rng);
        }
    }
}

void adam_step(ParamStore& store, const Gradients& grads, const AdamConfig& cfg) {
    for (const auto& [name, _] : store.entries_) {
        auto g = grads.find(name);
        if (g == grads.end()) {
            throw ConsistencyError("adam: missing gradient for parameter '" + name + "'");
        }
        if (!g->second.same_shape(store.entries_.at(name).value)) {
            throw ConsistencyError("adam: gradient shape " + shape_str(g->second) +
                                   " does not match parameter '" + name + "'");
        }
    }
    for (auto& [name, e] : store.entries_) {
        const Matrix& g = grads.at(name);
        ++e.steps;
        const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.steps));
        const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.steps));
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double gi = g.data()[i];
            double& m = e.first_moment.data()[i];
            double& v = e.second_moment.data()[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * gi;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * gi * gi;
            e.value.data()[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
        }
    }
}

Linear Linear::create(ParamStore& store, const std::string& prefix, std::size_t in,
                      std::size_t out, bool with_bias) {
    Linear l;
    l.in = in;
    l.out = out;
    l.weight = prefix + ".w";
    store.add(l.weight, Matrix(in, out), ParamKind::weight);
    if (with_bias) {
        l.bias = prefix + ".b";
        store.add(l.bias, Matrix(1, out), ParamKind::bias);
    }
    return l;
}

} // namespace botsai
