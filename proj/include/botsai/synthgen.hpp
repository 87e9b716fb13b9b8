#pragma once

#include "botsai/dataset.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace botsai {

// signal: probability that an in-edge comes from a same-class user; otherwise
// the source is drawn uniformly from all users.
struct SynthRelation {
    std::string name;
    double signal = 0.0;
    std::size_t degree = 4;  // in-edges per user
};

struct SynthConfig {
    std::size_t n_users = 500;
    double bot_fraction = 0.2;
    std::vector<SynthRelation> relations{
        {"follower", 0.8, 4}, {"following", 0.3, 4}, {"mention", 0.0, 4}};
    // Class separation of the latent factor every modality observes.
    double shared_gap = 3.0;
    // Extra class separation seen only by metadata / only by text.
    double meta_gap = 1.0;
    double text_gap = 1.0;
    std::size_t latent_dim = 4;
    std::size_t text_dim = 16;
    std::size_t tweets = 4;
    double noise = 1.0;
    std::uint64_t seed = 0;

    // Throws ConfigError for degenerate settings.
    void validate() const;
};

// All users are labeled; no splits are assigned. Deterministic per seed.
HeteroGraph generate(const SynthConfig& cfg);

// Flat JSON object with the field names above; relations as
// [{"name", "signal", "degree"}]. Unknown keys raise ConfigError.
SynthConfig synth_config_from_json(std::string_view text, SynthConfig base = {});

// Pearson chi-square statistic of the 2x2 table of (source label, target label)
// over the edges of one relation.
double edge_label_chi_square(const HeteroGraph& g, std::size_t relation);

} // namespace botsai
