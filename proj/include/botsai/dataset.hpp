#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace botsai {

enum class Label { human = 0, bot = 1, unlabeled };
enum class Split { train, val, test, none };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

inline constexpr std::size_t kNumericMeta = 5;
inline constexpr std::size_t kCategoricalMeta = 3;
inline constexpr std::size_t kMetaDim = kNumericMeta + kCategoricalMeta;

// One account: followers, following, statuses, active days, screen-name length;
// then protected, verified, default profile image.
struct UserRecord {
    std::string id;
    std::array<double, kNumericMeta> numeric_meta{};
    std::array<double, kCategoricalMeta> categorical_meta{};
    std::vector<double> description_embedding;
    std::vector<std::vector<double>> tweet_embeddings;
    Label label = Label::unlabeled;
    Split split = Split::none;
};

// Directed edge; every edge carries exactly one relation.
struct Edge {
    std::size_t relation = 0;
    std::size_t src = 0;
    std::size_t dst = 0;
};

struct HeteroGraph {
    std::vector<UserRecord> users;
    std::vector<std::string> relations;
    std::vector<Edge> edges;
    std::size_t text_dim = 0;

    std::size_t num_users() const noexcept { return users.size(); }
    std::optional<std::size_t> find_user(std::string_view id) const;
    std::optional<std::size_t> find_relation(std::string_view name) const;

    // Indices of users in the given split, in user order.
    std::vector<std::size_t> split_indices(Split s) const;
    std::vector<std::size_t> labeled_indices() const;

    // Throws LoadError naming the offending record.
    void validate() const;
};

// Dataset JSON: {relations, users, edges, splits?}. See README for the schema.
HeteroGraph parse_dataset(std::string_view json_text);
HeteroGraph load_dataset(const std::filesystem::path& path);
std::string dataset_to_string(const HeteroGraph& g);
void save_dataset(const HeteroGraph& g, const std::filesystem::path& path);

// Keeps only the named relations (in the given order) and their edges.
HeteroGraph restrict_relations(const HeteroGraph& g, const std::vector<std::string>& keep);

// Proportions (train, test, val).
struct SplitSpec {
    double train = 0.7;
    double test = 0.2;
    double val = 0.1;
    std::uint64_t seed = 0;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t test = 0;
    std::size_t val = 0;
};

SplitSizes split_sizes(std::size_t labeled, const SplitSpec& spec);

// Seeded shuffle of the labeled users; unlabeled users get Split::none.
HeteroGraph assign_splits(HeteroGraph g, const SplitSpec& spec);

struct ZScoreStats {
    std::array<double, kNumericMeta> mean{};
    std::array<double, kNumericMeta> std{};
    std::array<bool, kNumericMeta> constant{};
};

// Population standard deviation; features with std < 1e-12 are flagged constant.
ZScoreStats zscore_fit(const std::vector<std::array<double, kNumericMeta>>& rows);
ZScoreStats zscore_fit(const HeteroGraph& g, Split split = Split::train);
std::array<double, kNumericMeta> zscore_apply(const ZScoreStats& stats,
                                              const std::array<double, kNumericMeta>& x);

} // namespace botsai
