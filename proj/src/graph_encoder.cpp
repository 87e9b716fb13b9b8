#include "botsai/graph_encoder.hpp"

#include "botsai/encoders.hpp"
#include "botsai/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace botsai {

EdgeDirection parse_edge_direction(std::string_view name) {
    if (name == "in") return EdgeDirection::in;
    if (name == "out") return EdgeDirection::out;
    if (name == "both") return EdgeDirection::both;
    throw ConfigError("unknown edge direction '" + std::string(name) + "' (expected in, out, both)");
}

std::string_view edge_direction_name(EdgeDirection d) {
    switch (d) {
    case EdgeDirection::in: return "in";
    case EdgeDirection::out: return "out";
    case EdgeDirection::both: return "both";
    }
    return "in";
}

GraphLayerKind parse_graph_layer(std::string_view name) {
    if (name == "transformer") return GraphLayerKind::relational_transformer;
    if (name == "gcn") return GraphLayerKind::gcn;
    if (name == "gat") return GraphLayerKind::gat;
    if (name == "rgt") return GraphLayerKind::rgt;
    throw ConfigError("unknown graph layer '" + std::string(name) +
                      "' (expected transformer, gcn, gat, rgt)");
}

std::string_view graph_layer_name(GraphLayerKind k) {
    switch (k) {
    case GraphLayerKind::relational_transformer: return "transformer";
    case GraphLayerKind::gcn: return "gcn";
    case GraphLayerKind::gat: return "gat";
    case GraphLayerKind::rgt: return "rgt";
    }
    return "transformer";
}

namespace {

void sort_unique(std::vector<std::size_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
}

} // namespace

Adjacency Adjacency::build(const HeteroGraph& g, EdgeDirection direction) {
    Adjacency a;
    a.num_nodes = g.num_users();
    a.relations.assign(g.relations.size(), NeighborLists(g.num_users()));
    for (const Edge& e : g.edges) {
        auto& lists = a.relations.at(e.relation);
        if (direction != EdgeDirection::out) lists[e.dst].push_back(e.src);
        if (direction != EdgeDirection::in) lists[e.src].push_back(e.dst);
    }
    for (auto& lists : a.relations) {
        for (auto& l : lists) sort_unique(l);
    }
    return a;
}

NeighborLists Adjacency::relation_union() const {
    NeighborLists out(num_nodes);
    for (const auto& lists : relations) {
        for (std::size_t v = 0; v < num_nodes; ++v) {
            out[v].insert(out[v].end(), lists[v].begin(), lists[v].end());
        }
    }
    for (auto& l : out) sort_unique(l);
    return out;
}

NeighborLists two_hop_neighborhoods(const NeighborLists& adjacency) {
    NeighborLists out(adjacency.size());
    for (std::size_t v = 0; v < adjacency.size(); ++v) {
        auto& reach = out[v];
        for (std::size_t u : adjacency[v]) {
            reach.push_back(u);
            reach.insert(reach.end(), adjacency[u].begin(), adjacency[u].end());
        }
        sort_unique(reach);
        reach.erase(std::remove(reach.begin(), reach.end(), v), reach.end());
    }
    return out;
}

Var two_hop_aggregate(Var h0, std::shared_ptr<const SegmentIndex> two_hop) {
    return segment_mean(h0, std::move(two_hop));
}

Var two_hop_aggregate(const HeteroGraph& g, EdgeDirection direction, Var h0) {
    const auto reach = two_hop_neighborhoods(Adjacency::build(g, direction).relation_union());
    auto idx = std::make_shared<const SegmentIndex>(
        SegmentIndex::from_lists(g.num_users(), g.num_users(), reach));
    return two_hop_aggregate(h0, std::move(idx));
}

Var concat_embed(Var q, Var h0) {
    require_shape(q.value().same_shape(h0.value()), "concat_embed", q.value(), h0.value());
    return concat_cols({q, h0});
}

double balancing_omega(std::size_t majority, std::size_t minority) {
    if (minority == 0) return 0.0;
    return static_cast<double>(majority - std::min(majority, minority)) /
           static_cast<double>(minority);
}

OversampleResult oversample(const Matrix& embeddings, std::span<const Label> labels,
                            std::span<const std::size_t> train, const Adjacency& adjacency,
                            double omega, std::size_t k, std::mt19937_64& rng) {
    if (!(omega >= 0.0) || !std::isfinite(omega)) {
        throw ConfigError("oversample_scale must be a finite value >= 0");
    }
    if (k == 0) {
        throw ConfigError("knn_k must be at least 1");
    }
    std::vector<std::size_t> bots, humans;
    for (std::size_t v : train) {
        if (labels[v] == Label::bot) bots.push_back(v);
        else if (labels[v] == Label::human) humans.push_back(v);
    }
    OversampleResult res;
    res.minority = bots.size() <= humans.size() ? Label::bot : Label::human;
    const auto& minority = res.minority == Label::bot ? bots : humans;
    res.minority_count = minority.size();
    res.majority_count = res.minority == Label::bot ? humans.size() : bots.size();
    if (omega == 0.0) {
        return res;
    }
    if (minority.size() < 2) {
        res.warning = "oversampling disabled: minority class has " +
                      std::to_string(minority.size()) + " train node(s)";
        return res;
    }

    const std::size_t d = embeddings.cols();
    const std::size_t count =
        static_cast<std::size_t>(std::floor(omega * static_cast<double>(minority.size())));
    const std::size_t kk = std::min(k, minority.size() - 1);

    // Nearest same-label neighbors, computed lazily per seed position.
    std::vector<std::vector<std::size_t>> knn(minority.size());
    auto neighbors = [&](std::size_t pos) -> const std::vector<std::size_t>& {
        auto& out = knn[pos];
        if (!out.empty()) return out;
        const auto xv = embeddings.row(minority[pos]);
        std::vector<std::pair<double, std::size_t>> dist;
        dist.reserve(minority.size() - 1);
        for (std::size_t j = 0; j < minority.size(); ++j) {
            if (j == pos) continue;
            const auto xw = embeddings.row(minority[j]);
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += (xv[c] - xw[c]) * (xv[c] - xw[c]);
            dist.emplace_back(s, minority[j]);
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                          dist.end());
        for (std::size_t j = 0; j < kk; ++j) out.push_back(dist[j].second);
        return out;
    };

    std::uniform_int_distribution<std::size_t> pick_seed(0, minority.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_partner(0, kk - 1);
    std::uniform_real_distribution<double> pick_delta(0.0, 1.0);
    res.nodes.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const std::size_t pos = pick_seed(rng);
        SyntheticNode s;
        s.seed = minority[pos];
        s.partner = neighbors(pos)[pick_partner(rng)];
        s.delta = pick_delta(rng);
        s.label = res.minority;
        s.embedding.resize(d);
        const auto xv = embeddings.row(s.seed);
        const auto xw = embeddings.row(s.partner);
        for (std::size_t c = 0; c < d; ++c) {
            s.embedding[c] = (1.0 - s.delta) * xv[c] + s.delta * xw[c];
        }
        s.adjacency.reserve(adjacency.relations.size());
        for (const auto& lists : adjacency.relations) {
            s.adjacency.push_back({lists[s.seed]});
        }
        res.nodes.push_back(std::move(s));
    }
    return res;
}

std::vector<RowMix> synthetic_mixes(std::span<const SyntheticNode> nodes) {
    std::vector<RowMix> mixes;
    mixes.reserve(nodes.size());
    for (const auto& s : nodes) {
        mixes.push_back({s.seed, s.partner, 1.0 - s.delta, s.delta});
    }
    return mixes;
}

GraphIndex GraphIndex::build(const Adjacency& adjacency, std::span<const SyntheticNode> synthetic) {
    GraphIndex gi;
    gi.num_real = adjacency.num_nodes;
    gi.num_total = adjacency.num_nodes + synthetic.size();
    const std::size_t n = gi.num_total;
    for (std::size_t r = 0; r < adjacency.relations.size(); ++r) {
        NeighborLists lists = adjacency.relations[r];
        for (const auto& s : synthetic) lists.push_back(s.adjacency.at(r).at(0));
        gi.relations.push_back(
            std::make_shared<const SegmentIndex>(SegmentIndex::from_lists(n, n, lists)));
    }
    NeighborLists uni = adjacency.relation_union();
    for (const auto& s : synthetic) {
        std::vector<std::size_t> row;
        for (const auto& rel : s.adjacency) row.insert(row.end(), rel[0].begin(), rel[0].end());
        sort_unique(row);
        uni.push_back(std::move(row));
    }
    NeighborLists with_self = uni;
    for (std::size_t v = 0; v < n; ++v) {
        with_self[v].push_back(v);
        sort_unique(with_self[v]);
    }
    gi.relation_union = std::make_shared<const SegmentIndex>(SegmentIndex::from_lists(n, n, uni));
    gi.union_with_self =
        std::make_shared<const SegmentIndex>(SegmentIndex::from_lists(n, n, with_self));
    return gi;
}

GraphParams GraphParams::create(ParamStore& store, GraphLayerKind kind,
                                const std::vector<std::string>& relations, std::size_t hidden,
                                std::size_t heads, std::size_t layers) {
    if (layers == 0) {
        throw ConfigError("layers must be at least 1");
    }
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" +
                          std::to_string(hidden) + ")");
    }
    GraphParams p;
    p.kind = kind;
    p.hidden = hidden;
    p.heads = heads;
    p.num_relations = relations.size();
    p.project = Linear::create(store, "graph.project", 2 * hidden, hidden);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string prefix = "graph.layer" + std::to_string(l);
        GraphLayerParams lp;
        switch (kind) {
        case GraphLayerKind::relational_transformer:
            for (const auto& r : relations) {
                lp.query.push_back(Linear::create(store, prefix + ".rel." + r + ".q", hidden, hidden));
                lp.key.push_back(Linear::create(store, prefix + ".rel." + r + ".k", hidden, hidden));
                lp.value.push_back(Linear::create(store, prefix + ".rel." + r + ".v", hidden, hidden));
            }
            break;
        case GraphLayerKind::gat:
            lp.query.push_back(Linear::create(store, prefix + ".gat.q", hidden, hidden));
            lp.key.push_back(Linear::create(store, prefix + ".gat.k", hidden, hidden));
            lp.value.push_back(Linear::create(store, prefix + ".gat.v", hidden, hidden));
            break;
        case GraphLayerKind::gcn:
            lp.gcn = Linear::create(store, prefix + ".gcn", hidden, hidden);
            break;
        case GraphLayerKind::rgt:
            for (const auto& r : relations) {
                lp.value.push_back(Linear::create(store, prefix + ".rel." + r + ".v", hidden, hidden));
            }
            lp.semantic = Linear::create(store, prefix + ".semantic", hidden, hidden);
            lp.semantic_query = prefix + ".semantic.query";
            store.add(lp.semantic_query, Matrix(hidden, 1), ParamKind::weight);
            break;
        }
        if (kind != GraphLayerKind::gcn) {
            lp.output = prefix + ".out.w";
            store.add(lp.output, Matrix(hidden, hidden), ParamKind::weight);
        }
        lp.gate = prefix + ".gate";
        store.add(lp.gate, Matrix(1, 1), ParamKind::bias);
        p.layers.push_back(std::move(lp));
    }
    return p;
}

namespace {

Var attention_block(Tape& t, const ParamStore& store, const GraphParams& p, std::size_t layer,
                     std::size_t slot, Var x, std::shared_ptr<const SegmentIndex> idx,
                     std::vector<AttentionRecord>* attention) {
    const auto& lp = p.layers[layer];
    Var q = apply_linear(t, store, lp.query[slot], x);
    Var k = apply_linear(t, store, lp.key[slot], x);
    Var v = apply_linear(t, store, lp.value[slot], x);
    const double dk = static_cast<double>(p.hidden / p.heads);
    kernels::AttentionShape shape{p.heads, 1.0 / std::sqrt(dk)};
    if (attention == nullptr) {
        return segment_attention(q, k, v, std::move(idx), shape);
    }
    AttentionRecord rec;
    rec.layer = layer;
    rec.relation = slot;
    rec.index = idx;
    rec.heads = p.heads;
    Var z = segment_attention(q, k, v, std::move(idx), shape, &rec.alpha);
    attention->push_back(std::move(rec));
    return z;
}

Var sum_vars(const std::vector<Var>& parts) {
    Var acc = parts.front();
    for (std::size_t i = 1; i < parts.size(); ++i) acc = acc + parts[i];
    return acc;
}

} // namespace

Var graph_layer_forward(Tape& t, const ParamStore& store, const GraphParams& p,
                        std::size_t layer, Var x, const GraphIndex& index,
                        std::vector<AttentionRecord>* attention) {
    if (layer >= p.layers.size()) {
        throw ConfigError("graph layer " + std::to_string(layer) + " does not exist");
    }
    if (x.rows() != index.num_total || x.cols() != p.hidden) {
        throw DimensionError("graph layer input " + shape_str(x.value()) + ", expected [" +
                             std::to_string(index.num_total) + "x" + std::to_string(p.hidden) +
                             "]");
    }
    const auto& lp = p.layers[layer];
    Var h;
    switch (p.kind) {
    case GraphLayerKind::relational_transformer: {
        if (index.relations.size() != p.num_relations) {
            throw ConsistencyError("graph index has " + std::to_string(index.relations.size()) +
                                   " relations, parameters expect " +
                                   std::to_string(p.num_relations));
        }
        std::vector<Var> z;
        for (std::size_t r = 0; r < p.num_relations; ++r) {
            z.push_back(attention_block(t, store, p, layer, r, x, index.relations[r], attention));
        }
        if (!z.empty()) h = matmul(sum_vars(z), t.param(store, lp.output));
        break;
    }
    case GraphLayerKind::gat: {
        Var z = attention_block(t, store, p, layer, 0, x, index.relation_union, attention);
        h = matmul(z, t.param(store, lp.output));
        break;
    }
    case GraphLayerKind::gcn:
        h = apply_linear(t, store, lp.gcn, segment_mean(x, index.union_with_self));
        break;
    case GraphLayerKind::rgt: {
        std::vector<Var> z;
        std::vector<Var> scores;
        Var sq = t.param(store, lp.semantic_query);
        for (std::size_t r = 0; r < p.num_relations; ++r) {
            Var zr = segment_mean(apply_linear(t, store, lp.value[r], x), index.relations[r]);
            Var proj = tanh(apply_linear(t, store, lp.semantic, zr));
            scores.push_back(col_mean(matmul(proj, sq)));
            z.push_back(zr);
        }
        if (!z.empty()) {
            Var w = softmax_rows(concat_cols(scores));
            std::vector<Var> weighted;
            for (std::size_t r = 0; r < z.size(); ++r) {
                weighted.push_back(scale_by(z[r], slice_cols(w, r, 1)));
            }
            h = matmul(sum_vars(weighted), t.param(store, lp.output));
        }
        break;
    }
    }
    Var beta = sigmoid(t.param(store, lp.gate));
    Var keep = t.constant(Matrix{{1.0}}) - beta;
    Var residual = scale_by(x, keep);
    return h.valid() ? scale_by(h, beta) + residual : residual;
}

GraphForwardResult graph_forward(Tape& t, const ParamStore& store, const GraphParams& p, Var h0,
                                 std::shared_ptr<const SegmentIndex> two_hop,
                                 const GraphIndex& index, const GraphForwardOptions& options) {
    if (p.layers.empty()) {
        throw ConfigError("layers must be at least 1");
    }
    if (h0.rows() != index.num_real) {
        throw DimensionError("graph_forward: h0 has " + std::to_string(h0.rows()) +
                             " rows, graph has " + std::to_string(index.num_real) + " nodes");
    }
    if (index.num_total != index.num_real + options.synthetic.size()) {
        throw ConsistencyError("graph index built for " +
                               std::to_string(index.num_total - index.num_real) +
                               " synthetic nodes, got " +
                               std::to_string(options.synthetic.size()));
    }
    GraphForwardResult res;
    Var q = two_hop_aggregate(h0, std::move(two_hop));
    res.x0 = apply_linear(t, store, p.project, concat_embed(q, h0));
    Var x = res.x0;
    if (!options.synthetic.empty()) {
        x = concat_rows({x, mix_rows(x, options.synthetic)});
    }
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        if (l > 0 && options.training && options.dropout > 0.0) {
            x = dropout(x, options.dropout, true, *options.rng);
        }
        x = graph_layer_forward(t, store, p, l, x, index, options.attention);
    }
    res.x_graph = x;
    return res;
}

} // namespace botsai
