#pragma once

#include "botsai/matrix.hpp"
#include "botsai/tape.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace botsai {

enum class ParamKind { weight, bias };

struct AdamConfig;

// Named trainable parameters plus Adam state. Names are unique paths such
// as "graph.layer0.rel.follower.wq".
class ParamStore {
public:
    struct Entry {
        Matrix value;
        ParamKind kind = ParamKind::weight;
        Matrix first_moment;
        Matrix second_moment;
        std::uint64_t steps = 0;
    };

    // Registers a parameter; throws ConsistencyError on duplicate names.
    void add(const std::string& name, Matrix value, ParamKind kind);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Matrix& value(const std::string& name) const;
    Matrix& mutable_value(const std::string& name);
    const Entry& entry(const std::string& name) const;
    ParamKind kind(const std::string& name) const { return entry(name).kind; }

    // Sorted (map order), which is also the deterministic update order.
    std::vector<std::string> names() const;
    std::size_t size() const noexcept { return entries_.size(); }
    std::size_t scalar_count() const;

    // Xavier-uniform for weights, zeros for biases; visits names in creation order.
    void init_xavier(std::uint64_t seed);

    friend void adam_step(ParamStore&, const Gradients&, const AdamConfig&);

private:
    std::map<std::string, Entry> entries_;
    std::vector<std::string> creation_order_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction. L2 lives in the loss, so there is no
// decoupled decay here. Every registered parameter must have a gradient of
// matching shape.
void adam_step(ParamStore& store, const Gradients& grads, const AdamConfig& cfg);

// Parameters of one dense layer x W + b.
struct Linear {
    std::string weight;
    std::string bias;
    std::size_t in = 0;
    std::size_t out = 0;

    static Linear create(ParamStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, bool with_bias = true);
};

} // namespace botsai
