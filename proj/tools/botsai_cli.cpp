#include "botsai/errors.hpp"
#include "botsai/pipeline.hpp"
#include "botsai/synthgen.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace botsai;

namespace {

std::vector<std::string> split_list(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

// Training flags. A flag only overrides the config file when it was given.
struct TrainFlags {
    std::string config_path;
    TrainConfig values;
    std::string relations;
    std::string variant = "botsai";
    std::string graph_layer = "transformer";
    std::string edge_direction = "in";
    std::string activation = "relu";
    bool affine_projectors = false;
    bool no_graph = false;
    std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> setters;

    template <class T>
    void bind(CLI::App* app, const std::string& flag, T& target, T TrainConfig::*field,
              const std::string& help) {
        CLI::Option* opt = app->add_option(flag, target, help);
        setters.emplace_back(opt, [&target, field](TrainConfig& c) { c.*field = target; });
    }

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "JSON config with TrainConfig keys")
            ->check(CLI::ExistingFile);
        TrainConfig& v = values;
        bind(app, "--lr", v.lr, &TrainConfig::lr, "Adam learning rate");
        bind(app, "--batch", v.batch, &TrainConfig::batch, "train rows per step");
        bind(app, "--dropout", v.dropout, &TrainConfig::dropout, "dropout rate");
        bind(app, "--layers", v.layers, &TrainConfig::layers, "graph layers");
        bind(app, "--hidden", v.hidden, &TrainConfig::hidden, "hidden width d_h");
        bind(app, "--max-epochs", v.max_epochs, &TrainConfig::max_epochs, "epoch cap");
        bind(app, "--heads", v.heads, &TrainConfig::heads, "attention heads");
        bind(app, "--lambda", v.lambda, &TrainConfig::lambda, "L2 coefficient");
        bind(app, "--oversample-scale", v.oversample_scale, &TrainConfig::oversample_scale,
             "minority oversampling scale");
        bind(app, "--alpha", v.alpha, &TrainConfig::alpha, "similarity loss weight");
        bind(app, "--beta-w", v.beta_w, &TrainConfig::beta_w, "difference loss weight");
        bind(app, "--gamma", v.gamma, &TrainConfig::gamma, "reconstruction loss weight");
        bind(app, "--seed", v.seed, &TrainConfig::seed, "random seed");
        bind(app, "--cmd-order", v.cmd_order, &TrainConfig::cmd_order, "CMD moment order");
        bind(app, "--knn-k", v.knn_k, &TrainConfig::knn_k, "oversampling neighbor count");
        bind(app, "--patience", v.patience, &TrainConfig::patience, "early-stopping patience");
        auto* rel = app->add_option("--relations", relations, "comma-separated relation subset");
        setters.emplace_back(rel, [this](TrainConfig& c) { c.relations = split_list(relations, ','); });
        auto* var = app->add_option("--variant", variant, "botsai, base, sf or if");
        setters.emplace_back(var, [this](TrainConfig& c) { c.variant = parse_variant(variant); });
        auto* gl = app->add_option("--graph-layer", graph_layer, "transformer, gcn, gat or rgt");
        setters.emplace_back(gl, [this](TrainConfig& c) { c.graph_layer = parse_graph_layer(graph_layer); });
        auto* ed = app->add_option("--edge-direction", edge_direction, "in, out or both");
        setters.emplace_back(ed, [this](TrainConfig& c) { c.edge_direction = parse_edge_direction(edge_direction); });
        auto* act = app->add_option("--activation", activation, "relu, leaky_relu, tanh, identity");
        setters.emplace_back(act, [this](TrainConfig& c) { c.activation = parse_activation(activation); });
        auto* ap = app->add_flag("--affine-projectors", affine_projectors,
                                 "subspace projectors without activation");
        setters.emplace_back(ap, [](TrainConfig& c) { c.projector_activation = false; });
        auto* ng = app->add_flag("--no-graph", no_graph, "disable message passing");
        setters.emplace_back(ng, [](TrainConfig& c) { c.graph_branch = false; });
    }

    TrainConfig resolve() const {
        TrainConfig c = config_path.empty() ? TrainConfig{} : load_train_config(config_path);
        for (const auto& [opt, set] : setters) {
            if (opt->count() > 0) set(c);
        }
        c.validate();
        return c;
    }
};

// Datasets without splits get the default 70/20/10 split seeded by cfg.seed.
HeteroGraph load_with_splits(const std::string& path, std::uint64_t seed) {
    HeteroGraph g = load_dataset(path);
    if (g.split_indices(Split::train).empty()) {
        SplitSpec spec;
        spec.seed = seed;
        g = assign_splits(std::move(g), spec);
    }
    return g;
}

void emit_table(const std::vector<Aggregate>& rows, const std::string& runs_path) {
    write_table_csv(std::cout, rows);
    if (runs_path.empty()) return;
    std::ofstream out(runs_path, std::ios::binary);
    if (!out) throw LoadError("cannot write '" + runs_path + "'");
    for (const auto& a : rows) write_run_lines(out, a.runs);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal social bot detection with invariant/specific subspaces"};
    app.require_subcommand(1);
    std::function<void()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled graph");
    std::string synth_out, synth_config;
    SynthConfig sc;
    bool no_splits = false;
    synth->add_option("--out", synth_out, "output dataset path")->required();
    synth->add_option("--config", synth_config, "JSON generator config")->check(CLI::ExistingFile);
    auto* s_seed = synth->add_option("--seed", sc.seed, "random seed");
    auto* s_n = synth->add_option("--n-users", sc.n_users, "number of users");
    auto* s_bf = synth->add_option("--bot-fraction", sc.bot_fraction, "share of bots");
    auto* s_noise = synth->add_option("--noise", sc.noise, "noise standard deviation");
    synth->add_flag("--no-splits", no_splits, "do not assign train/val/test splits");
    synth->callback([&] {
        action = [&] {
            SynthConfig c;
            if (!synth_config.empty()) {
                std::ifstream in(synth_config, std::ios::binary);
                std::stringstream ss;
                ss << in.rdbuf();
                c = synth_config_from_json(ss.str());
            }
            if (s_seed->count()) c.seed = sc.seed;
            if (s_n->count()) c.n_users = sc.n_users;
            if (s_bf->count()) c.bot_fraction = sc.bot_fraction;
            if (s_noise->count()) c.noise = sc.noise;
            HeteroGraph g = generate(c);
            if (!no_splits) {
                SplitSpec spec;
                spec.seed = c.seed;
                g = assign_splits(std::move(g), spec);
            }
            save_dataset(g, synth_out);
        };
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "train one model and report test metrics");
    TrainFlags train_flags;
    std::string train_data, model_out;
    train_cmd->add_option("--data", train_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--model-out", model_out, "write the selected model here");
    train_flags.attach(train_cmd);
    train_cmd->callback([&] {
        action = [&] {
            const TrainConfig cfg = train_flags.resolve();
            const HeteroGraph g = load_with_splits(train_data, cfg.seed);
            const TrainResult r = train(g, cfg);
            for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
            if (!model_out.empty()) save_model(r.model, model_out);
            RunReport rep;
            rep.seed = cfg.seed;
            rep.metrics = evaluate(r.model, g, Split::test);
            rep.epoch_selected = r.epoch_selected;
            std::cout << run_line(rep) << '\n';
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a saved model on one split");
    std::string eval_data, eval_model, eval_split = "test";
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--data", eval_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--model", eval_model, "model JSON")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--split", eval_split, "train, val or test");
    eval_cmd->add_option("--seed", eval_seed, "split seed for datasets without splits");
    eval_cmd->callback([&] {
        action = [&] {
            const Model m = load_model(eval_model);
            const HeteroGraph g = load_with_splits(eval_data, eval_seed);
            const Split split = parse_split(eval_split);
            const Metrics met = evaluate(m, g, split);
            nlohmann::ordered_json j{{"split", split_name(split)},
                                     {"accuracy", met.accuracy},
                                     {"f1", met.f1}};
            std::cout << j.dump() << '\n';
        };
    });

    // ablate-relations
    auto* abl_rel = app.add_subcommand("ablate-relations", "repeat training per relation subset");
    TrainFlags rel_flags;
    std::string rel_data, rel_subsets, rel_runs;
    std::size_t rel_repeats = 5;
    abl_rel->add_option("--data", rel_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    abl_rel->add_option("--subsets", rel_subsets,
                        "subsets separated by ';', relations by ',' (e.g. follower;following)")
        ->required();
    abl_rel->add_option("--repeats", rel_repeats, "runs per subset");
    abl_rel->add_option("--runs-out", rel_runs, "JSON lines per run");
    rel_flags.attach(abl_rel);
    abl_rel->callback([&] {
        action = [&] {
            const TrainConfig cfg = rel_flags.resolve();
            const HeteroGraph g = load_with_splits(rel_data, cfg.seed);
            std::vector<std::vector<std::string>> subsets;
            for (const auto& s : split_list(rel_subsets, ';')) subsets.push_back(split_list(s, ','));
            emit_table(ablate_relations(g, cfg, subsets, rel_repeats), rel_runs);
        };
    });

    // ablate-variants
    auto* abl_var = app.add_subcommand("ablate-variants", "compare model variants");
    TrainFlags var_flags;
    std::string var_data, var_runs;
    std::size_t var_repeats = 5;
    abl_var->add_option("--data", var_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    abl_var->add_option("--repeats", var_repeats, "runs per variant");
    abl_var->add_option("--runs-out", var_runs, "JSON lines per run");
    var_flags.attach(abl_var);
    abl_var->callback([&] {
        action = [&] {
            const TrainConfig cfg = var_flags.resolve();
            const HeteroGraph g = load_with_splits(var_data, cfg.seed);
            emit_table(ablate_variants(g, cfg, var_repeats), var_runs);
        };
    });

    // sweep-omega
    auto* sweep = app.add_subcommand("sweep-omega", "repeat training per oversampling scale");
    TrainFlags sweep_flags;
    std::string sweep_data, sweep_values = "0,0.25,0.5,1,1.5", sweep_runs;
    std::size_t sweep_repeats = 5;
    sweep->add_option("--data", sweep_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    sweep->add_option("--values", sweep_values, "comma-separated omega values");
    sweep->add_option("--repeats", sweep_repeats, "runs per value");
    sweep->add_option("--runs-out", sweep_runs, "JSON lines per run");
    sweep_flags.attach(sweep);
    sweep->callback([&] {
        action = [&] {
            const TrainConfig cfg = sweep_flags.resolve();
            const HeteroGraph g = load_with_splits(sweep_data, cfg.seed);
            std::vector<double> values;
            for (const auto& s : split_list(sweep_values, ',')) {
                try {
                    values.push_back(std::stod(s));
                } catch (const std::exception&) {
                    throw ConfigError("bad omega value '" + s + "'");
                }
            }
            emit_table(sweep_omega(g, cfg, values, sweep_repeats), sweep_runs);
        };
    });

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "finite-difference check of the full objective");
    TrainFlags gc_flags;
    std::string gc_data;
    double gc_h = 1e-5, gc_tol = 1e-4;
    gc->add_option("--data", gc_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    gc->add_option("--step", gc_h, "central-difference step");
    gc->add_option("--tol", gc_tol, "maximum relative error");
    gc_flags.attach(gc);
    int gc_status = 0;
    gc->callback([&] {
        action = [&] {
            TrainConfig cfg = gc_flags.resolve();
            const HeteroGraph g = load_with_splits(gc_data, cfg.seed);
            const GradCheckReport rep = grad_check_model(g, cfg, gc_h, gc_tol);
            char buf[256];
            for (const auto& e : rep.params) {
                std::snprintf(buf, sizeof buf, "%-40s n=%-6zu max_rel=%.3e max_abs=%.3e\n",
                              e.name.c_str(), e.count, e.max_rel_error, e.max_abs_error);
                std::cout << buf;
            }
            std::snprintf(buf, sizeof buf, "%s max_rel_error=%.3e tol=%.1e\n",
                          rep.passed ? "PASS" : "FAIL", rep.max_rel_error, rep.tolerance);
            std::cout << buf;
            gc_status = rep.passed ? 0 : 1;
        };
    });

    // export-hidden
    auto* ex = app.add_subcommand("export-hidden", "write subspace vectors of labeled users");
    std::string ex_data, ex_model, ex_out;
    std::uint64_t ex_seed = 0;
    ex->add_option("--data", ex_data, "dataset JSON")->required()->check(CLI::ExistingFile);
    ex->add_option("--model", ex_model, "model JSON")->required()->check(CLI::ExistingFile);
    ex->add_option("--out", ex_out, "output CSV")->required();
    ex->add_option("--seed", ex_seed, "split seed for datasets without splits");
    ex->callback([&] {
        action = [&] {
            const Model m = load_model(ex_model);
            export_hidden(m, load_with_splits(ex_data, ex_seed), ex_out);
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return gc_status;
}
