#include "botsai/tape.hpp"

#include "botsai/errors.hpp"
#include "botsai/params.hpp"

namespace botsai {

const Matrix& Var::value() const {
    return tape_->value(id_);
}

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
    nodes_.push_back(Node{std::move(value), {}, true, {}});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(const ParamStore& store, const std::string& name) {
    if (auto it = params_.find(name); it != params_.end()) {
        return Var(this, it->second);
    }
    Var v = variable(store.value(name));
    params_.emplace(name, v.id());
    return v;
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const Var& in : inputs) {
        if (in.tape() != this) {
            throw ConsistencyError("tape: input recorded on a different tape");
        }
        needs = needs || nodes_[in.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), {}, needs, needs ? std::move(backward) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
}

Matrix* Tape::grad_target(Var v) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) {
        return nullptr;
    }
    if (n.grad.empty() && !n.value.empty()) {
        n.grad = Matrix(n.value.rows(), n.value.cols());
    }
    return &n.grad;
}

const Matrix* Tape::grad(Var v) const {
    const Node& n = nodes_[v.id()];
    return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var root) {
    if (root.tape() != this) {
        throw ConsistencyError("tape: backward root from a different tape");
    }
    const Matrix& rv = nodes_[root.id()].value;
    if (rv.rows() != 1 || rv.cols() != 1) {
        throw DimensionError("backward: root must be 1x1, got " + shape_str(rv));
    }
    if (!nodes_[root.id()].requires_grad) {
        return;
    }
    grad_target(root)->fill(1.0);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty()) {
            continue;
        }
        n.backward(*this, n.grad);
    }
}

Gradients Tape::param_gradients(const ParamStore& store) const {
    Gradients out;
    for (const auto& name : store.names()) {
        const Matrix& p = store.value(name);
        auto it = params_.find(name);
        if (it != params_.end() && !nodes_[it->second].grad.empty()) {
            out.emplace(name, nodes_[it->second].grad);
        } else {
            out.emplace(name, Matrix(p.rows(), p.cols()));
        }
    }
    return out;
}

} // namespace botsai
