#pragma once

#include "botsai/dataset.hpp"
#include "botsai/encoders.hpp"
#include "botsai/graph_encoder.hpp"
#include "botsai/losses.hpp"
#include "botsai/subspace.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace botsai {

// base: no subspaces, [x_G || x_T || x_M] straight to the detector.
// specific_only / invariant_only: three-token fusion over one subspace.
enum class Variant { botsai, base, specific_only, invariant_only };
Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct ModelConfig {
    std::size_t text_dim = 0;
    std::size_t hidden = 256;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::vector<std::string> relations;
    Variant variant = Variant::botsai;
    GraphLayerKind graph_layer = GraphLayerKind::relational_transformer;
    EdgeDirection edge_direction = EdgeDirection::in;
    Activation activation = Activation::relu;
    bool projector_activation = true;  // false: affine projectors
    bool graph_branch = true;          // false: x_G is the initial node feature
    double dropout = 0.4;

    void validate() const;
};

struct Model {
    ModelConfig config;
    ZScoreStats zscore;
    ParamStore store;
    EncoderParams encoders;
    std::optional<GraphParams> graph;
    SubspaceParams subspace;
    std::optional<DecoderParams> decoders;

    // Registers every parameter and applies Xavier initialisation.
    static Model create(const ModelConfig& config, const ZScoreStats& zscore,
                        std::uint64_t init_seed);
};

void save_model(const Model& m, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::string model_to_string(const Model& m);
Model model_from_string(std::string_view text);

// Constant per-dataset inputs. The graph is restricted to the model's relations.
struct ModelInputs {
    std::size_t num_users = 0;
    Matrix meta;
    Matrix text;
    Adjacency adjacency;
    std::shared_ptr<const SegmentIndex> two_hop;
    GraphIndex index;  // real nodes only
    std::vector<Label> labels;

    static ModelInputs build(const HeteroGraph& g, const Model& model);
};

struct ForwardOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;
    std::span<const SyntheticNode> synthetic;
    const GraphIndex* index = nullptr;  // required when synthetic is non-empty
    std::vector<AttentionRecord>* attention = nullptr;
};

struct Encoded {
    std::array<Var, kModes> modal;  // x_G, x_T, x_M over real then synthetic rows
    Var x0;                         // graph input embedding, real rows
};

Encoded encode(Tape& t, const Model& m, const ModelInputs& in, const ForwardOptions& opt);

struct HeadOutput {
    std::array<Var, kModes> inputs;  // modal rows of the batch
    std::optional<SubspaceBundle> bundle;
    Var h_out;
    Var probs;
};

HeadOutput classify(Tape& t, const Model& m, const Encoded& enc,
                    std::span<const std::size_t> rows, bool training, std::mt19937_64* rng,
                    Matrix* fusion_alpha = nullptr);

// Task loss always; similarity, difference and reconstruction when the
// variant has subspaces.
LossParts batch_losses(Tape& t, const Model& m, const HeadOutput& head,
                       std::span<const double> labels, const LossWeights& w);

// Bot probabilities for the given real-node rows (inference mode).
std::vector<double> predict(const Model& m, const ModelInputs& in,
                            std::span<const std::size_t> rows);

} // namespace botsai
