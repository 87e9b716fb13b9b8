#pragma once

#include "botsai/dataset.hpp"
#include "botsai/gradcheck.hpp"
#include "botsai/model.hpp"

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace botsai {

struct TrainConfig {
    double lr = 1e-4;
    std::size_t batch = 128;
    double dropout = 0.4;
    std::size_t layers = 2;
    std::size_t hidden = 256;
    std::size_t max_epochs = 400;
    std::size_t heads = 4;
    double lambda = 5e-6;
    double oversample_scale = 0.25;
    std::vector<std::string> relations;  // empty: every dataset relation
    double alpha = 0.7;
    double beta_w = 0.3;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    int cmd_order = 5;
    std::size_t knn_k = 5;
    std::size_t patience = 50;
    Variant variant = Variant::botsai;
    GraphLayerKind graph_layer = GraphLayerKind::relational_transformer;
    EdgeDirection edge_direction = EdgeDirection::in;
    Activation activation = Activation::relu;
    bool projector_activation = true;
    bool graph_branch = true;

    void validate() const;
    LossWeights loss_weights() const;
    ModelConfig model_config(const HeteroGraph& g) const;
};

// Flat JSON object with the field names above. Unknown keys raise ConfigError.
TrainConfig train_config_from_json(std::string_view text, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base = {});
std::string train_config_to_json(const TrainConfig& cfg);

struct Metrics {
    double accuracy = 0.0;
    double f1 = 0.0;  // bot is the positive class
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// Predictions and labels are 0 (human) / 1 (bot).
Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels);

// Accuracy and F1 on the real users of one split. Empty split -> SplitError.
Metrics evaluate(const Model& m, const HeteroGraph& g, Split split);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    Model model;
    std::size_t epoch_selected = 0;
    double best_val_accuracy = 0.0;
    std::size_t synthetic_nodes = 0;
    std::vector<EpochRecord> history;
    std::vector<std::string> warnings;
};

// Requires train and val splits. Model selection: best validation accuracy.
TrainResult train(const HeteroGraph& g, const TrainConfig& cfg);

struct RunReport {
    std::size_t run_id = 0;
    std::uint64_t seed = 0;
    Split split = Split::test;
    Metrics metrics;
    std::size_t epoch_selected = 0;
};

struct Aggregate {
    std::string name;
    std::vector<RunReport> runs;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;  // population standard deviation
    double f1_mean = 0.0;
    double f1_std = 0.0;
};

Aggregate aggregate_runs(std::string name, std::vector<RunReport> runs);

// n runs with seeds cfg.seed, cfg.seed + 1, ... evaluated on the test split.
Aggregate run_repeats(const HeteroGraph& g, const TrainConfig& cfg, std::size_t n,
                      std::string name = "run");

std::vector<Aggregate> ablate_relations(const HeteroGraph& g, const TrainConfig& cfg,
                                        const std::vector<std::vector<std::string>>& subsets,
                                        std::size_t n);

// BotSAI, BASE, SF, IF, then the GCN, GAT and RGT graph-layer substitutes.
std::vector<Aggregate> ablate_variants(const HeteroGraph& g, const TrainConfig& cfg,
                                       std::size_t n);

// Rows in ascending omega order.
std::vector<Aggregate> sweep_omega(const HeteroGraph& g, const TrainConfig& cfg,
                                   std::vector<double> values, std::size_t n);

// One JSON object per line: run_id, seed, split, accuracy, f1, epoch_selected.
void write_run_lines(std::ostream& out, const std::vector<RunReport>& runs);
std::string run_line(const RunReport& r);
// CSV: name,runs,accuracy_mean,accuracy_std,f1_mean,f1_std.
void write_table_csv(std::ostream& out, const std::vector<Aggregate>& rows);

// CSV with six rows (one per subspace vector) for every labeled user:
// user_id,label,space,mode,h0..h{d-1}.
void export_hidden(const Model& m, const HeteroGraph& g, std::ostream& out);
void export_hidden(const Model& m, const HeteroGraph& g, const std::filesystem::path& path);

// Finite-difference check of the full training objective (dropout off) over
// the train users of g, including synthetic nodes when oversampling is on.
GradCheckReport grad_check_model(const HeteroGraph& g, const TrainConfig& cfg, double h,
                                 double tol);

} // namespace botsai
