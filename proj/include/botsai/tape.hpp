#pragma once

#include "botsai/matrix.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace botsai {

class Tape;
class ParamStore;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Tape* tape() const noexcept { return tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

using Gradients = std::map<std::string, Matrix>;

// Reverse-mode recorder. Each op pushes its output value together with a
// closure that maps the output gradient onto its inputs' gradients. Nodes live
// in a deque so references to earlier values stay valid while recording.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Matrix value);
    Var variable(Matrix value);

    // Leaf bound to a named parameter; repeated calls return the same Var.
    Var param(const ParamStore& store, const std::string& name);

    // Records an op output. The closure runs only if some input needs a gradient.
    Var record(Matrix value, const std::vector<Var>& inputs, BackwardFn backward);

    const Matrix& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

    // Gradient buffer of v, zero-initialised on first use; nullptr if v is a constant.
    Matrix* grad_target(Var v);
    const Matrix* grad(Var v) const;

    // Seeds d(root)/d(root) = 1 for a 1x1 root and propagates to every node.
    void backward(Var root);

    // Gradients for every parameter of the store; untouched ones are zero.
    Gradients param_gradients(const ParamStore& store) const;

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::deque<Node> nodes_;
    std::map<std::string, std::size_t> params_;
};

} // namespace botsai
