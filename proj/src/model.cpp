#include "botsai/model.hpp"

#include "botsai/errors.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

namespace botsai {

using nlohmann::json;

Variant parse_variant(std::string_view name) {
    if (name == "botsai") return Variant::botsai;
    if (name == "base") return Variant::base;
    if (name == "sf") return Variant::specific_only;
    if (name == "if") return Variant::invariant_only;
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected botsai, base, sf, if)");
}

std::string_view variant_name(Variant v) {
    switch (v) {
    case Variant::botsai: return "botsai";
    case Variant::base: return "base";
    case Variant::specific_only: return "sf";
    case Variant::invariant_only: return "if";
    }
    return "botsai";
}

void ModelConfig::validate() const {
    if (text_dim == 0) throw ConfigError("text_dim must be at least 1");
    if (hidden == 0) throw ConfigError("hidden must be at least 1");
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" +
                          std::to_string(hidden) + ")");
    }
    if (layers == 0) throw ConfigError("layers must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (relations.empty() && graph_branch) {
        throw ConfigError("an empty relation subset requires graph_branch = false");
    }
}

Model Model::create(const ModelConfig& config, const ZScoreStats& zscore,
                    std::uint64_t init_seed) {
    config.validate();
    Model m;
    m.config = config;
    m.zscore = zscore;
    m.encoders = EncoderParams::create(m.store, config.text_dim, config.hidden);
    if (config.graph_branch) {
        m.graph = GraphParams::create(m.store, config.graph_layer, config.relations,
                                      config.hidden, config.heads, config.layers);
    }
    const bool subspaces = config.variant != Variant::base;
    const std::size_t tokens = config.variant == Variant::botsai ? 2 * kModes : kModes;
    m.subspace = SubspaceParams::create(m.store, config.hidden, config.heads, tokens, subspaces);
    if (subspaces) {
        m.decoders = DecoderParams::create(m.store, config.hidden);
    }
    m.store.init_xavier(init_seed);
    return m;
}

namespace {

json config_to_json(const ModelConfig& c) {
    return json{{"text_dim", c.text_dim},
                {"hidden", c.hidden},
                {"heads", c.heads},
                {"layers", c.layers},
                {"relations", c.relations},
                {"variant", variant_name(c.variant)},
                {"graph_layer", graph_layer_name(c.graph_layer)},
                {"edge_direction", edge_direction_name(c.edge_direction)},
                {"activation", activation_name(c.activation)},
                {"projector_activation", c.projector_activation},
                {"graph_branch", c.graph_branch},
                {"dropout", c.dropout}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.text_dim = j.at("text_dim").get<std::size_t>();
    c.hidden = j.at("hidden").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.relations = j.at("relations").get<std::vector<std::string>>();
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.graph_layer = parse_graph_layer(j.at("graph_layer").get<std::string>());
    c.edge_direction = parse_edge_direction(j.at("edge_direction").get<std::string>());
    c.activation = parse_activation(j.at("activation").get<std::string>());
    c.projector_activation = j.at("projector_activation").get<bool>();
    c.graph_branch = j.at("graph_branch").get<bool>();
    c.dropout = j.at("dropout").get<double>();
    return c;
}

} // namespace

std::string model_to_string(const Model& m) {
    json params = json::object();
    for (const auto& name : m.store.names()) {
        const auto& e = m.store.entry(name);
        const auto values = e.value.values();
        params[name] = json{{"kind", e.kind == ParamKind::weight ? "weight" : "bias"},
                            {"rows", e.value.rows()},
                            {"cols", e.value.cols()},
                            {"values", std::vector<double>(values.begin(), values.end())}};
    }
    json zs{{"mean", m.zscore.mean}, {"std", m.zscore.std}, {"constant", m.zscore.constant}};
    json j{{"format", "botsai-model"},
           {"version", 1},
           {"config", config_to_json(m.config)},
           {"zscore", zs},
           {"params", params}};
    return j.dump() + "\n";
}

Model model_from_string(std::string_view text) {
    try {
        const json j = json::parse(text);
        if (j.value("format", "") != "botsai-model") {
            throw LoadError("not a model file (missing format tag)");
        }
        ZScoreStats zs;
        zs.mean = j.at("zscore").at("mean").get<std::array<double, kNumericMeta>>();
        zs.std = j.at("zscore").at("std").get<std::array<double, kNumericMeta>>();
        zs.constant = j.at("zscore").at("constant").get<std::array<bool, kNumericMeta>>();
        Model m = Model::create(config_from_json(j.at("config")), zs, 0);
        const json& params = j.at("params");
        if (params.size() != m.store.size()) {
            throw LoadError("model file has " + std::to_string(params.size()) +
                            " parameters, configuration expects " +
                            std::to_string(m.store.size()));
        }
        for (const auto& name : m.store.names()) {
            if (!params.contains(name)) {
                throw LoadError("model file is missing parameter '" + name + "'");
            }
            const json& p = params.at(name);
            Matrix& v = m.store.mutable_value(name);
            const auto values = p.at("values").get<std::vector<double>>();
            if (p.at("rows").get<std::size_t>() != v.rows() ||
                p.at("cols").get<std::size_t>() != v.cols() || values.size() != v.size()) {
                throw LoadError("parameter '" + name + "' has the wrong shape, expected " +
                                shape_str(v));
            }
            v = Matrix(v.rows(), v.cols(), values);
        }
        return m;
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed model file: ") + e.what());
    }
}

void save_model(const Model& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write model file '" + path.string() + "'");
    out << model_to_string(m);
    if (!out) throw LoadError("failed writing model file '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot read model file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return model_from_string(ss.str());
}

ModelInputs ModelInputs::build(const HeteroGraph& g, const Model& model) {
    if (g.text_dim != model.config.text_dim) {
        throw DimensionError("dataset text_dim " + std::to_string(g.text_dim) +
                             " does not match model text_dim " +
                             std::to_string(model.config.text_dim));
    }
    const HeteroGraph rg = restrict_relations(g, model.config.relations);
    ModelInputs in;
    in.num_users = g.num_users();
    in.meta = metadata_input(g, model.zscore);
    in.text = text_input(g);
    in.adjacency = Adjacency::build(rg, model.config.edge_direction);
    const auto reach = two_hop_neighborhoods(in.adjacency.relation_union());
    in.two_hop = std::make_shared<const SegmentIndex>(
        SegmentIndex::from_lists(in.num_users, in.num_users, reach));
    in.index = GraphIndex::build(in.adjacency);
    in.labels.reserve(g.num_users());
    for (const auto& u : g.users) in.labels.push_back(u.label);
    return in;
}

Encoded encode(Tape& t, const Model& m, const ModelInputs& in, const ForwardOptions& opt) {
    if (!opt.synthetic.empty() && opt.index == nullptr) {
        throw ConsistencyError("synthetic nodes need a matching graph index");
    }
    const LayerMode mode{m.config.activation, m.config.dropout, opt.training, opt.rng};
    Var x_meta = encode_metadata(t, m.store, m.encoders, t.constant(in.meta), mode);
    Var x_text = encode_text(t, m.store, m.encoders, t.constant(in.text), mode);
    Var h0 = initial_node_feature(t, m.store, m.encoders, x_meta, x_text);
    const auto mixes = synthetic_mixes(opt.synthetic);

    Encoded enc;
    Var x_graph;
    if (m.graph) {
        GraphForwardOptions go;
        go.training = opt.training;
        go.dropout = m.config.dropout;
        go.rng = opt.rng;
        go.synthetic = mixes;
        go.attention = opt.attention;
        const GraphIndex& index = opt.synthetic.empty() ? in.index : *opt.index;
        auto res = graph_forward(t, m.store, *m.graph, h0, in.two_hop, index, go);
        enc.x0 = res.x0;
        x_graph = res.x_graph;
    } else {
        enc.x0 = h0;
        x_graph = mixes.empty() ? h0 : concat_rows({h0, mix_rows(h0, mixes)});
    }
    if (!mixes.empty()) {
        x_text = concat_rows({x_text, mix_rows(x_text, mixes)});
        x_meta = concat_rows({x_meta, mix_rows(x_meta, mixes)});
    }
    enc.modal = {x_graph, x_text, x_meta};
    return enc;
}

HeadOutput classify(Tape& t, const Model& m, const Encoded& enc,
                    std::span<const std::size_t> rows, bool training, std::mt19937_64* rng,
                    Matrix* fusion_alpha) {
    HeadOutput out;
    for (std::size_t k = 0; k < kModes; ++k) out.inputs[k] = gather_rows(enc.modal[k], rows);
    if (m.config.variant == Variant::base) {
        out.h_out = concat_cols({out.inputs[0], out.inputs[1], out.inputs[2]});
    } else {
        const Activation act =
            m.config.projector_activation ? m.config.activation : Activation::identity;
        out.bundle = project(t, m.store, m.subspace, out.inputs, act);
        std::vector<Var> tokens;
        switch (m.config.variant) {
        case Variant::botsai: tokens = out.bundle->tokens(); break;
        case Variant::invariant_only:
            tokens.assign(out.bundle->invariant.begin(), out.bundle->invariant.end());
            break;
        case Variant::specific_only:
            tokens.assign(out.bundle->specific.begin(), out.bundle->specific.end());
            break;
        case Variant::base: break;
        }
        out.h_out = fuse(t, m.store, m.subspace, tokens, fusion_alpha);
    }
    Var h = out.h_out;
    if (training && m.config.dropout > 0.0) {
        h = dropout(h, m.config.dropout, true, *rng);
    }
    out.probs = detect(t, m.store, m.subspace, h);
    return out;
}

LossParts batch_losses(Tape& t, const Model& m, const HeadOutput& head,
                       std::span<const double> labels, const LossWeights& w) {
    LossParts parts;
    parts.task = task_loss(t, m.store, head.probs, labels, w.lambda);
    if (head.bundle) {
        parts.sim = sim_loss(*head.bundle, w.cmd_order);
        if (head.probs.rows() >= 2) parts.diff = diff_loss(*head.bundle);
        parts.recon = recon_loss(t, m.store, *m.decoders, *head.bundle, head.inputs);
    }
    return parts;
}

std::vector<double> predict(const Model& m, const ModelInputs& in,
                            std::span<const std::size_t> rows) {
    Tape t;
    const Encoded enc = encode(t, m, in, {});
    const HeadOutput head = classify(t, m, enc, rows, false, nullptr);
    const auto& v = head.probs.value().values();
    return {v.begin(), v.end()};
}

} // namespace botsai
