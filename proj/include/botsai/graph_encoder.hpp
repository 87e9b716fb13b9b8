#pragma once

#include "botsai/dataset.hpp"
#include "botsai/ops.hpp"
#include "botsai/params.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace botsai {

// Which endpoint a node reads from: in = sources of edges pointing at it.
enum class EdgeDirection { in, out, both };
EdgeDirection parse_edge_direction(std::string_view name);
std::string_view edge_direction_name(EdgeDirection d);

enum class GraphLayerKind { relational_transformer, gcn, gat, rgt };
GraphLayerKind parse_graph_layer(std::string_view name);
std::string_view graph_layer_name(GraphLayerKind k);

using NeighborLists = std::vector<std::vector<std::size_t>>;

// Per-relation neighbor lists, sorted and without duplicates.
struct Adjacency {
    std::size_t num_nodes = 0;
    std::vector<NeighborLists> relations;

    static Adjacency build(const HeteroGraph& g, EdgeDirection direction);
    NeighborLists relation_union() const;
};

// Nodes within distance 2 of each node (excluding itself), sorted.
NeighborLists two_hop_neighborhoods(const NeighborLists& adjacency);

// q_v = mean of h0 over the two-hop neighborhood; zero rows for isolated nodes.
Var two_hop_aggregate(Var h0, std::shared_ptr<const SegmentIndex> two_hop);
Var two_hop_aggregate(const HeteroGraph& g, EdgeDirection direction, Var h0);

// [q || h0]; the learned projection back to d_h is applied by graph_forward.
Var concat_embed(Var q, Var h0);

struct SyntheticNode {
    std::size_t seed = 0;
    std::size_t partner = 0;
    double delta = 0.0;
    Label label = Label::bot;
    std::vector<double> embedding;     // (1 - delta) x_seed + delta x_partner
    std::vector<NeighborLists> adjacency;  // [relation] -> one row, copied from the seed
};

struct OversampleResult {
    std::vector<SyntheticNode> nodes;
    Label minority = Label::bot;
    std::size_t minority_count = 0;
    std::size_t majority_count = 0;
    std::string warning;  // non-empty when oversampling was disabled
};

// Minority class by train-label count (ties go to bots), then
// floor(omega * |minority|) synthetic nodes. embeddings holds one row per real node.
OversampleResult oversample(const Matrix& embeddings, std::span<const Label> labels,
                            std::span<const std::size_t> train, const Adjacency& adjacency,
                            double omega, std::size_t k, std::mt19937_64& rng);

// omega that brings the minority up to the majority count.
double balancing_omega(std::size_t majority, std::size_t minority);

// Row mixes that rebuild synthetic rows from the current real-node rows.
std::vector<RowMix> synthetic_mixes(std::span<const SyntheticNode> nodes);

// Message-passing structure over real nodes followed by synthetic ones.
// Synthetic nodes only ever appear as targets.
struct GraphIndex {
    std::size_t num_real = 0;
    std::size_t num_total = 0;
    std::vector<std::shared_ptr<const SegmentIndex>> relations;
    std::shared_ptr<const SegmentIndex> relation_union;
    std::shared_ptr<const SegmentIndex> union_with_self;

    static GraphIndex build(const Adjacency& adjacency,
                            std::span<const SyntheticNode> synthetic = {});
};

struct GraphLayerParams {
    // Relational transformer: per relation. RGT uses only value.
    std::vector<Linear> query;
    std::vector<Linear> key;
    std::vector<Linear> value;
    Linear gcn;
    Linear semantic;             // RGT relation-level attention
    std::string semantic_query;  // d_h x 1
    std::string output;          // W_O, d_h x d_h, no bias
    std::string gate;            // raw residual gate, 1 x 1
};

struct GraphParams {
    GraphLayerKind kind = GraphLayerKind::relational_transformer;
    std::size_t hidden = 0;
    std::size_t heads = 1;
    std::size_t num_relations = 0;
    Linear project;  // 2 d_h -> d_h
    std::vector<GraphLayerParams> layers;

    static GraphParams create(ParamStore& store, GraphLayerKind kind,
                              const std::vector<std::string>& relations, std::size_t hidden,
                              std::size_t heads, std::size_t layers);
};

struct AttentionRecord {
    std::size_t layer = 0;
    std::size_t relation = 0;  // index into the relation list; 0 for GAT
    std::shared_ptr<const SegmentIndex> index;
    std::size_t heads = 1;
    Matrix alpha;  // entries x heads
};

// One layer: x^(l) = beta H + (1 - beta) x^(l-1), beta = sigmoid(gate).
Var graph_layer_forward(Tape& t, const ParamStore& store, const GraphParams& p,
                        std::size_t layer, Var x, const GraphIndex& index,
                        std::vector<AttentionRecord>* attention = nullptr);

struct GraphForwardOptions {
    bool training = false;
    double dropout = 0.0;
    std::mt19937_64* rng = nullptr;
    std::span<const RowMix> synthetic;  // appended after the real rows
    std::vector<AttentionRecord>* attention = nullptr;
};

struct GraphForwardResult {
    Var x0;       // projected [q || h0], real rows only
    Var x_graph;  // real rows then synthetic rows
};

GraphForwardResult graph_forward(Tape& t, const ParamStore& store, const GraphParams& p, Var h0,
                                 std::shared_ptr<const SegmentIndex> two_hop,
                                 const GraphIndex& index, const GraphForwardOptions& options);

} // namespace botsai
