#include "botsai/pipeline.hpp"

#include "botsai/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace botsai {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (patience == 0) throw ConfigError("patience must be at least 1");
    if (layers == 0) throw ConfigError("layers must be at least 1");
    if (hidden == 0) throw ConfigError("hidden must be at least 1");
    if (heads == 0 || hidden % heads != 0) {
        throw ConfigError("heads (" + std::to_string(heads) + ") must divide hidden (" +
                          std::to_string(hidden) + ")");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
    if (!(oversample_scale >= 0.0) || !std::isfinite(oversample_scale)) {
        throw ConfigError("oversample_scale must be a finite value >= 0");
    }
    if (knn_k == 0) throw ConfigError("knn_k must be at least 1");
    loss_weights().validate();
}

LossWeights TrainConfig::loss_weights() const {
    return LossWeights{alpha, beta_w, gamma, lambda, cmd_order};
}

ModelConfig TrainConfig::model_config(const HeteroGraph& g) const {
    ModelConfig c;
    c.text_dim = g.text_dim;
    c.hidden = hidden;
    c.heads = heads;
    c.layers = layers;
    c.relations = relations.empty() && graph_branch ? g.relations : relations;
    c.variant = variant;
    c.graph_layer = graph_layer;
    c.edge_direction = edge_direction;
    c.activation = activation;
    c.projector_activation = projector_activation;
    c.graph_branch = graph_branch;
    c.dropout = dropout;
    return c;
}

namespace {

template <class T>
T get_field(const json& v, const std::string& key) {
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

std::size_t get_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

} // namespace

TrainConfig train_config_from_json(std::string_view text, TrainConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "lr") c.lr = get_field<double>(v, key);
        else if (key == "batch") c.batch = get_count(v, key);
        else if (key == "dropout") c.dropout = get_field<double>(v, key);
        else if (key == "layers") c.layers = get_count(v, key);
        else if (key == "hidden") c.hidden = get_count(v, key);
        else if (key == "max_epochs") c.max_epochs = get_count(v, key);
        else if (key == "heads") c.heads = get_count(v, key);
        else if (key == "lambda") c.lambda = get_field<double>(v, key);
        else if (key == "oversample_scale") c.oversample_scale = get_field<double>(v, key);
        else if (key == "relations") c.relations = get_field<std::vector<std::string>>(v, key);
        else if (key == "alpha") c.alpha = get_field<double>(v, key);
        else if (key == "beta_w") c.beta_w = get_field<double>(v, key);
        else if (key == "gamma") c.gamma = get_field<double>(v, key);
        else if (key == "seed") c.seed = get_count(v, key);
        else if (key == "cmd_order") c.cmd_order = static_cast<int>(get_count(v, key));
        else if (key == "knn_k") c.knn_k = get_count(v, key);
        else if (key == "patience") c.patience = get_count(v, key);
        else if (key == "variant") c.variant = parse_variant(get_field<std::string>(v, key));
        else if (key == "graph_layer") c.graph_layer = parse_graph_layer(get_field<std::string>(v, key));
        else if (key == "edge_direction") c.edge_direction = parse_edge_direction(get_field<std::string>(v, key));
        else if (key == "activation") c.activation = parse_activation(get_field<std::string>(v, key));
        else if (key == "projector_activation") c.projector_activation = get_field<bool>(v, key);
        else if (key == "graph_branch") c.graph_branch = get_field<bool>(v, key);
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return train_config_from_json(ss.str(), std::move(base));
}

std::string train_config_to_json(const TrainConfig& c) {
    nlohmann::ordered_json j{{"lr", c.lr},
                             {"batch", c.batch},
                             {"dropout", c.dropout},
                             {"layers", c.layers},
                             {"hidden", c.hidden},
                             {"max_epochs", c.max_epochs},
                             {"heads", c.heads},
                             {"lambda", c.lambda},
                             {"oversample_scale", c.oversample_scale},
                             {"relations", c.relations},
                             {"alpha", c.alpha},
                             {"beta_w", c.beta_w},
                             {"gamma", c.gamma},
                             {"seed", c.seed},
                             {"cmd_order", c.cmd_order},
                             {"knn_k", c.knn_k},
                             {"patience", c.patience},
                             {"variant", variant_name(c.variant)},
                             {"graph_layer", graph_layer_name(c.graph_layer)},
                             {"edge_direction", edge_direction_name(c.edge_direction)},
                             {"activation", activation_name(c.activation)},
                             {"projector_activation", c.projector_activation},
                             {"graph_branch", c.graph_branch}};
    return j.dump(2) + "\n";
}

Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
    if (predictions.size() != labels.size()) {
        throw DimensionError("metrics: " + std::to_string(predictions.size()) +
                             " predictions for " + std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw SplitError("metrics over an empty set");
    Metrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predictions[i] == 1;
        const bool y = labels[i] == 1;
        if (p && y) ++m.tp;
        else if (p && !y) ++m.fp;
        else if (!p && y) ++m.fn;
        else ++m.tn;
    }
    m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(labels.size());
    if (m.tp > 0) {
        const double precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
        const double recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
        m.f1 = 2.0 * precision * recall / (precision + recall);
    }
    return m;
}

namespace {

std::vector<int> label_ints(const HeteroGraph& g, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) {
        const Label l = g.users[r].label;
        if (l == Label::unlabeled) {
            throw LabelError("user '" + g.users[r].id + "' has no label");
        }
        out.push_back(l == Label::bot ? 1 : 0);
    }
    return out;
}

Metrics metrics_from_probs(const std::vector<double>& probs, const std::vector<int>& labels) {
    std::vector<int> preds;
    preds.reserve(probs.size());
    for (double p : probs) preds.push_back(is_bot(p) ? 1 : 0);
    return compute_metrics(preds, labels);
}

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
    return std::mt19937_64(seq);
}

enum Stream : std::uint32_t { kInit = 1, kOversample = 2, kTrain = 3 };

// Shuffled batches; a trailing batch smaller than 2 joins the previous one so
// every batch has enough rows for the centering in the difference loss.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> rows,
                                                   std::size_t batch, std::mt19937_64& rng) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < rows.size(); i += batch) {
        const std::size_t end = std::min(rows.size(), i + batch);
        out.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(i),
                         rows.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (out.size() > 1 && out.back().size() < 2) {
        auto tail = std::move(out.back());
        out.pop_back();
        out.back().insert(out.back().end(), tail.begin(), tail.end());
    }
    return out;
}

struct TrainingSetup {
    Model model;
    ModelInputs inputs;
    OversampleResult oversampling;
    GraphIndex index;  // real + synthetic
    std::vector<std::size_t> rows;
    std::vector<double> labels;  // indexed by row id (real then synthetic)
};

TrainingSetup prepare(const HeteroGraph& g, const TrainConfig& cfg) {
    cfg.validate();
    const auto train_rows = g.split_indices(Split::train);
    if (train_rows.empty()) {
        throw SplitError("dataset has no train split (assign splits first)");
    }
    const ModelConfig mc = cfg.model_config(g);
    TrainingSetup s{Model::create(mc, zscore_fit(g, Split::train), stream(cfg.seed, kInit)()),
                    {}, {}, {}, {}, {}};
    s.inputs = ModelInputs::build(g, s.model);

    if (cfg.oversample_scale > 0.0) {
        Tape t;
        const Encoded enc = encode(t, s.model, s.inputs, {});
        auto rng = stream(cfg.seed, kOversample);
        s.oversampling = oversample(enc.x0.value(), s.inputs.labels, train_rows,
                                    s.inputs.adjacency, cfg.oversample_scale, cfg.knn_k, rng);
    }
    s.index = GraphIndex::build(s.inputs.adjacency, s.oversampling.nodes);
    s.rows = train_rows;
    s.labels.assign(s.index.num_total, 0.0);
    for (std::size_t r : train_rows) s.labels[r] = s.inputs.labels[r] == Label::bot ? 1.0 : 0.0;
    for (std::size_t k = 0; k < s.oversampling.nodes.size(); ++k) {
        const std::size_t row = g.num_users() + k;
        s.rows.push_back(row);
        s.labels[row] = s.oversampling.nodes[k].label == Label::bot ? 1.0 : 0.0;
    }
    return s;
}

Var objective(Tape& t, const TrainingSetup& s, std::span<const std::size_t> rows,
              const LossWeights& w, bool training, std::mt19937_64* rng) {
    ForwardOptions opt;
    opt.training = training;
    opt.rng = rng;
    opt.synthetic = s.oversampling.nodes;
    opt.index = &s.index;
    const Encoded enc = encode(t, s.model, s.inputs, opt);
    const HeadOutput head = classify(t, s.model, enc, rows, training, rng);
    std::vector<double> y;
    y.reserve(rows.size());
    for (std::size_t r : rows) y.push_back(s.labels[r]);
    return total_loss(t, batch_losses(t, s.model, head, y, w), w);
}

} // namespace

Metrics evaluate(const Model& m, const HeteroGraph& g, Split split) {
    const auto rows = g.split_indices(split);
    if (rows.empty()) {
        throw SplitError("split '" + std::string(split_name(split)) + "' is empty");
    }
    const ModelInputs in = ModelInputs::build(g, m);
    return metrics_from_probs(predict(m, in, rows), label_ints(g, rows));
}

TrainResult train(const HeteroGraph& g, const TrainConfig& cfg) {
    TrainingSetup s = prepare(g, cfg);
    const auto val_rows = g.split_indices(Split::val);
    if (val_rows.empty()) {
        throw SplitError("dataset has no validation split (needed for model selection)");
    }
    const auto val_labels = label_ints(g, val_rows);
    const LossWeights w = cfg.loss_weights();
    const AdamConfig adam{cfg.lr};
    auto rng = stream(cfg.seed, kTrain);

    TrainResult res{s.model, 0, -1.0, s.oversampling.nodes.size(), {}, {}};
    if (!s.oversampling.warning.empty()) res.warnings.push_back(s.oversampling.warning);
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        for (const auto& batch : make_batches(s.rows, cfg.batch, rng)) {
            Tape t;
            Var loss;
            try {
                loss = objective(t, s, batch, w, true, &rng);
            } catch (const TrainingError& e) {
                throw TrainingError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
            t.backward(loss);
            adam_step(s.model.store, t.param_gradients(s.model.store), adam);
            rec.train_loss += loss.value().scalar();
        }

        const auto probs = predict(s.model, s.inputs, val_rows);
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
            rec.val_loss -= val_labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
        }
        rec.val_accuracy = metrics_from_probs(probs, val_labels).accuracy;
        res.history.push_back(rec);

        if (std::isfinite(rec.val_loss) && rec.val_accuracy > res.best_val_accuracy) {
            res.best_val_accuracy = rec.val_accuracy;
            res.epoch_selected = epoch;
            res.model.store = s.model.store;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (res.epoch_selected == 0) {
        throw TrainingError("no epoch produced a finite validation loss");
    }
    return res;
}

Aggregate aggregate_runs(std::string name, std::vector<RunReport> runs) {
    Aggregate a;
    a.name = std::move(name);
    a.runs = std::move(runs);
    if (a.runs.empty()) return a;
    const double n = static_cast<double>(a.runs.size());
    for (const auto& r : a.runs) {
        a.accuracy_mean += r.metrics.accuracy;
        a.f1_mean += r.metrics.f1;
    }
    a.accuracy_mean /= n;
    a.f1_mean /= n;
    for (const auto& r : a.runs) {
        a.accuracy_std += (r.metrics.accuracy - a.accuracy_mean) * (r.metrics.accuracy - a.accuracy_mean);
        a.f1_std += (r.metrics.f1 - a.f1_mean) * (r.metrics.f1 - a.f1_mean);
    }
    a.accuracy_std = std::sqrt(a.accuracy_std / n);
    a.f1_std = std::sqrt(a.f1_std / n);
    return a;
}

Aggregate run_repeats(const HeteroGraph& g, const TrainConfig& cfg, std::size_t n,
                      std::string name) {
    if (n == 0) throw ConfigError("repeats must be at least 1");
    std::vector<RunReport> runs;
    for (std::size_t i = 0; i < n; ++i) {
        TrainConfig c = cfg;
        c.seed = cfg.seed + i;
        const TrainResult r = train(g, c);
        RunReport rep;
        rep.run_id = i;
        rep.seed = c.seed;
        rep.split = Split::test;
        rep.metrics = evaluate(r.model, g, Split::test);
        rep.epoch_selected = r.epoch_selected;
        runs.push_back(rep);
    }
    return aggregate_runs(std::move(name), std::move(runs));
}

std::vector<Aggregate> ablate_relations(const HeteroGraph& g, const TrainConfig& cfg,
                                        const std::vector<std::vector<std::string>>& subsets,
                                        std::size_t n) {
    std::vector<Aggregate> out;
    for (const auto& subset : subsets) {
        TrainConfig c = cfg;
        c.relations = subset;
        c.graph_branch = !subset.empty();
        std::string name;
        for (const auto& r : subset) name += (name.empty() ? "" : "+") + r;
        out.push_back(run_repeats(g, c, n, name.empty() ? "none" : name));
    }
    return out;
}

std::vector<Aggregate> ablate_variants(const HeteroGraph& g, const TrainConfig& cfg,
                                       std::size_t n) {
    struct Row {
        const char* name;
        Variant variant;
        GraphLayerKind layer;
    };
    const Row rows[] = {
        {"BotSAI", Variant::botsai, GraphLayerKind::relational_transformer},
        {"BASE", Variant::base, GraphLayerKind::relational_transformer},
        {"SF", Variant::specific_only, GraphLayerKind::relational_transformer},
        {"IF", Variant::invariant_only, GraphLayerKind::relational_transformer},
        {"GCN", Variant::botsai, GraphLayerKind::gcn},
        {"GAT", Variant::botsai, GraphLayerKind::gat},
        {"RGT", Variant::botsai, GraphLayerKind::rgt},
    };
    std::vector<Aggregate> out;
    for (const Row& r : rows) {
        TrainConfig c = cfg;
        c.variant = r.variant;
        c.graph_layer = r.layer;
        out.push_back(run_repeats(g, c, n, r.name));
    }
    return out;
}

std::vector<Aggregate> sweep_omega(const HeteroGraph& g, const TrainConfig& cfg,
                                   std::vector<double> values, std::size_t n) {
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ConfigError("omega values must be finite and >= 0");
        }
    }
    std::sort(values.begin(), values.end());
    std::vector<Aggregate> out;
    for (double v : values) {
        TrainConfig c = cfg;
        c.oversample_scale = v;
        std::ostringstream name;
        name << "omega=" << v;
        out.push_back(run_repeats(g, c, n, name.str()));
    }
    return out;
}

std::string run_line(const RunReport& r) {
    nlohmann::ordered_json j{{"run_id", r.run_id},
                             {"seed", r.seed},
                             {"split", split_name(r.split)},
                             {"accuracy", r.metrics.accuracy},
                             {"f1", r.metrics.f1},
                             {"epoch_selected", r.epoch_selected}};
    return j.dump();
}

void write_run_lines(std::ostream& out, const std::vector<RunReport>& runs) {
    for (const auto& r : runs) out << run_line(r) << '\n';
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q += '"';
        q += c;
    }
    return q + "\"";
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

void write_table_csv(std::ostream& out, const std::vector<Aggregate>& rows) {
    out << "name,runs,accuracy_mean,accuracy_std,f1_mean,f1_std\n";
    for (const auto& a : rows) {
        out << csv_field(a.name) << ',' << a.runs.size() << ',' << fixed6(a.accuracy_mean) << ','
            << fixed6(a.accuracy_std) << ',' << fixed6(a.f1_mean) << ',' << fixed6(a.f1_std)
            << '\n';
    }
}

void export_hidden(const Model& m, const HeteroGraph& g, std::ostream& out) {
    if (m.config.variant == Variant::base) {
        throw ConfigError("export-hidden needs a model with subspaces (variant is base)");
    }
    const auto rows = g.labeled_indices();
    const ModelInputs in = ModelInputs::build(g, m);
    Tape t;
    const Encoded enc = encode(t, m, in, {});
    const HeadOutput head = classify(t, m, enc, rows, false, nullptr);
    const std::size_t d = m.config.hidden;

    out << "user_id,label,space,mode";
    for (std::size_t j = 0; j < d; ++j) out << ",h" << j;
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& u = g.users[rows[i]];
        for (int space = 0; space < 2; ++space) {
            for (std::size_t mode = 0; mode < kModes; ++mode) {
                const Var v = space == 0 ? head.bundle->invariant[mode] : head.bundle->specific[mode];
                out << csv_field(u.id) << ',' << (u.label == Label::bot ? "bot" : "human") << ','
                    << (space == 0 ? "invariant" : "specific") << ',' << kModeNames[mode];
                for (double x : v.value().row(i)) {
                    std::snprintf(buf, sizeof buf, "%.17g", x);
                    out << ',' << buf;
                }
                out << '\n';
            }
        }
    }
}

void export_hidden(const Model& m, const HeteroGraph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + path.string() + "'");
    export_hidden(m, g, out);
    if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

GradCheckReport grad_check_model(const HeteroGraph& g, const TrainConfig& cfg, double h,
                                 double tol) {
    TrainingSetup s = prepare(g, cfg);
    const LossWeights w = cfg.loss_weights();
    // The builder reads parameters through s.model.store, which grad_check perturbs.
    LossBuilder loss = [&s, &w](Tape& t, const ParamStore&) {
        return objective(t, s, s.rows, w, false, nullptr);
    };
    return grad_check(loss, s.model.store, h, tol);
}

} // namespace botsai
