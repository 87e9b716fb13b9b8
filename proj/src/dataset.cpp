#include "botsai/dataset.hpp"

#include "botsai/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace botsai {

using nlohmann::json;

std::string_view split_name(Split s) {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::none: return "none";
    }
    return "none";
}

Split parse_split(std::string_view name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    if (name == "none") return Split::none;
    throw ConfigError("unknown split '" + std::string(name) + "'");
}

std::optional<std::size_t> HeteroGraph::find_user(std::string_view id) const {
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (users[i].id == id) return i;
    }
    return std::nullopt;
}

std::optional<std::size_t> HeteroGraph::find_relation(std::string_view name) const {
    for (std::size_t i = 0; i < relations.size(); ++i) {
        if (relations[i] == name) return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> HeteroGraph::split_indices(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (users[i].split == s) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> HeteroGraph::labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < users.size(); ++i) {
        if (users[i].label != Label::unlabeled) out.push_back(i);
    }
    return out;
}

void HeteroGraph::validate() const {
    std::set<std::string> names;
    for (const auto& r : relations) {
        if (!names.insert(r).second) {
            throw LoadError("duplicate relation '" + r + "'");
        }
    }
    std::set<std::string> ids;
    for (const auto& u : users) {
        if (!ids.insert(u.id).second) {
            throw LoadError("duplicate user id '" + u.id + "'");
        }
        for (double v : u.numeric_meta) {
            if (!std::isfinite(v)) throw LoadError("user '" + u.id + "': non-finite numeric_meta");
        }
        for (double v : u.categorical_meta) {
            if (v != 0.0 && v != 1.0) {
                throw LoadError("user '" + u.id + "': categorical_meta entries must be 0 or 1");
            }
        }
        if (u.description_embedding.size() != text_dim) {
            throw LoadError("user '" + u.id + "': description_embedding has dimension " +
                            std::to_string(u.description_embedding.size()) + ", expected " +
                            std::to_string(text_dim));
        }
        for (const auto& t : u.tweet_embeddings) {
            if (t.size() != text_dim) {
                throw LoadError("user '" + u.id + "': tweet embedding has dimension " +
                                std::to_string(t.size()) + ", expected " +
                                std::to_string(text_dim));
            }
        }
        if (u.label == Label::unlabeled && u.split != Split::none) {
            throw LoadError("user '" + u.id + "': unlabeled user assigned to a split");
        }
    }
    for (const auto& e : edges) {
        if (e.relation >= relations.size() || e.src >= users.size() || e.dst >= users.size()) {
            throw LoadError("edge references an invalid relation or user index");
        }
    }
}

namespace {

std::vector<double> read_vector(const json& j, const std::string& who, const char* field) {
    if (!j.is_array()) {
        throw LoadError("user '" + who + "': field '" + field + "' must be an array");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) {
            throw LoadError("user '" + who + "': field '" + field + "' has a non-numeric entry");
        }
        out.push_back(x.get<double>());
    }
    return out;
}

const json& require(const json& obj, const char* key, const std::string& who) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        throw LoadError(who + ": missing field '" + key + "'");
    }
    return *it;
}

HeteroGraph parse_dataset_impl(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw LoadError(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw LoadError("dataset root must be an object");
    }

    HeteroGraph g;
    for (const auto& r : require(root, "relations", "dataset")) {
        if (!r.is_string()) throw LoadError("relation names must be strings");
        g.relations.push_back(r.get<std::string>());
    }

    bool dim_known = false;
    for (const auto& ju : require(root, "users", "dataset")) {
        UserRecord u;
        const json& jid = require(ju, "id", "user");
        if (!jid.is_string()) throw LoadError("user id must be a string");
        u.id = jid.get<std::string>();
        auto numeric = read_vector(require(ju, "numeric_meta", "user '" + u.id + "'"), u.id, "numeric_meta");
        if (numeric.size() != kNumericMeta) {
            throw LoadError("user '" + u.id + "': numeric_meta must have 5 entries");
        }
        std::copy(numeric.begin(), numeric.end(), u.numeric_meta.begin());
        auto cat = read_vector(require(ju, "categorical_meta", "user '" + u.id + "'"), u.id, "categorical_meta");
        if (cat.size() != kCategoricalMeta) {
            throw LoadError("user '" + u.id + "': categorical_meta must have 3 entries");
        }
        std::copy(cat.begin(), cat.end(), u.categorical_meta.begin());
        u.description_embedding = read_vector(
            require(ju, "description_embedding", "user '" + u.id + "'"), u.id, "description_embedding");
        const json& tweets = require(ju, "tweet_embeddings", "user '" + u.id + "'");
        if (!tweets.is_array()) throw LoadError("user '" + u.id + "': tweet_embeddings must be an array");
        for (const auto& t : tweets) {
            u.tweet_embeddings.push_back(read_vector(t, u.id, "tweet_embeddings"));
        }
        if (!dim_known) {
            g.text_dim = u.description_embedding.size();
            dim_known = true;
        }
        if (auto it = ju.find("label"); it != ju.end() && !it->is_null()) {
            const std::string lab = it->get<std::string>();
            if (lab == "human") {
                u.label = Label::human;
            } else if (lab == "bot") {
                u.label = Label::bot;
            } else {
                throw LoadError("user '" + u.id + "': unknown label '" + lab + "'");
            }
        }
        g.users.push_back(std::move(u));
    }

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < g.users.size(); ++i) {
        index.emplace(g.users[i].id, i);
    }
    auto lookup = [&](const json& v, const char* role) {
        const std::string id = v.get<std::string>();
        auto it = index.find(id);
        if (it == index.end()) {
            throw LoadError(std::string("edge ") + role + " '" + id + "' is not a known user");
        }
        return it->second;
    };
    for (const auto& je : require(root, "edges", "dataset")) {
        const std::string rel = require(je, "relation", "edge").get<std::string>();
        auto r = g.find_relation(rel);
        if (!r) {
            throw LoadError("edge has unknown relation '" + rel + "'");
        }
        g.edges.push_back(Edge{*r, lookup(require(je, "src", "edge"), "src"),
                               lookup(require(je, "dst", "edge"), "dst")});
    }

    if (auto it = root.find("splits"); it != root.end()) {
        for (const auto& [name, ids] : it->items()) {
            const Split s = parse_split(name);
            for (const auto& jid : ids) {
                const std::string id = jid.get<std::string>();
                auto u = index.find(id);
                if (u == index.end()) {
                    throw LoadError("split '" + name + "' lists unknown user '" + id + "'");
                }
                g.users[u->second].split = s;
            }
        }
    }

    g.validate();
    return g;
}

} // namespace

HeteroGraph parse_dataset(std::string_view json_text) {
    try {
        return parse_dataset_impl(json_text);
    } catch (const json::exception& e) {
        throw LoadError(std::string("malformed dataset: ") + e.what());
    }
}

HeteroGraph load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError("cannot open dataset '" + path.string() + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

std::string dataset_to_string(const HeteroGraph& g) {
    json root;
    root["relations"] = g.relations;
    json users = json::array();
    bool any_split = false;
    for (const auto& u : g.users) {
        json ju;
        ju["id"] = u.id;
        ju["numeric_meta"] = u.numeric_meta;
        ju["categorical_meta"] = u.categorical_meta;
        ju["description_embedding"] = u.description_embedding;
        ju["tweet_embeddings"] = u.tweet_embeddings;
        if (u.label != Label::unlabeled) {
            ju["label"] = u.label == Label::bot ? "bot" : "human";
        }
        any_split = any_split || u.split != Split::none;
        users.push_back(std::move(ju));
    }
    root["users"] = std::move(users);
    json edges = json::array();
    for (const auto& e : g.edges) {
        edges.push_back({{"relation", g.relations[e.relation]},
                         {"src", g.users[e.src].id},
                         {"dst", g.users[e.dst].id}});
    }
    root["edges"] = std::move(edges);
    if (any_split) {
        json splits = json::object();
        for (Split s : {Split::train, Split::val, Split::test}) {
            json ids = json::array();
            for (const auto& u : g.users) {
                if (u.split == s) ids.push_back(u.id);
            }
            splits[std::string(split_name(s))] = std::move(ids);
        }
        root["splits"] = std::move(splits);
    }
    return root.dump();
}

void save_dataset(const HeteroGraph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw LoadError("cannot write dataset '" + path.string() + "'");
    }
    out << dataset_to_string(g) << '\n';
}

HeteroGraph restrict_relations(const HeteroGraph& g, const std::vector<std::string>& keep) {
    HeteroGraph out;
    out.users = g.users;
    out.text_dim = g.text_dim;
    std::vector<std::optional<std::size_t>> remap(g.relations.size());
    for (const auto& name : keep) {
        auto r = g.find_relation(name);
        if (!r) {
            throw ConfigError("relation '" + name + "' is not in the dataset");
        }
        if (remap[*r]) {
            throw ConfigError("relation '" + name + "' listed twice");
        }
        remap[*r] = out.relations.size();
        out.relations.push_back(name);
    }
    for (const auto& e : g.edges) {
        if (remap[e.relation]) {
            out.edges.push_back(Edge{*remap[e.relation], e.src, e.dst});
        }
    }
    return out;
}

SplitSizes split_sizes(std::size_t labeled, const SplitSpec& spec) {
    const double n = static_cast<double>(labeled);
    SplitSizes s;
    s.train = static_cast<std::size_t>(std::llround(spec.train * n));
    s.test = static_cast<std::size_t>(std::llround(spec.test * n));
    s.train = std::min(s.train, labeled);
    s.test = std::min(s.test, labeled - s.train);
    s.val = labeled - s.train - s.test;
    return s;
}

HeteroGraph assign_splits(HeteroGraph g, const SplitSpec& spec) {
    if (spec.train <= 0.0 || spec.test <= 0.0 || spec.val <= 0.0 ||
        std::abs(spec.train + spec.test + spec.val - 1.0) > 1e-9) {
        throw ConfigError("split ratios must be positive and sum to 1");
    }
    auto labeled = g.labeled_indices();
    if (labeled.size() < 10) {
        throw SplitError("need at least 10 labeled users to split, have " +
                         std::to_string(labeled.size()));
    }
    std::mt19937_64 rng(spec.seed);
    std::shuffle(labeled.begin(), labeled.end(), rng);
    const SplitSizes sizes = split_sizes(labeled.size(), spec);
    for (auto& u : g.users) {
        u.split = Split::none;
    }
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        Split s = Split::val;
        if (i < sizes.train) {
            s = Split::train;
        } else if (i < sizes.train + sizes.test) {
            s = Split::test;
        }
        g.users[labeled[i]].split = s;
    }
    return g;
}

ZScoreStats zscore_fit(const std::vector<std::array<double, kNumericMeta>>& rows) {
    if (rows.empty()) {
        throw SplitError("zscore_fit: no rows to fit");
    }
    ZScoreStats st;
    const double n = static_cast<double>(rows.size());
    for (std::size_t f = 0; f < kNumericMeta; ++f) {
        double mean = 0.0;
        for (const auto& r : rows) mean += r[f];
        mean /= n;
        double var = 0.0;
        for (const auto& r : rows) var += (r[f] - mean) * (r[f] - mean);
        st.mean[f] = mean;
        st.std[f] = std::sqrt(var / n);
        st.constant[f] = st.std[f] < 1e-12;
    }
    return st;
}

ZScoreStats zscore_fit(const HeteroGraph& g, Split split) {
    std::vector<std::array<double, kNumericMeta>> rows;
    for (std::size_t i : g.split_indices(split)) {
        rows.push_back(g.users[i].numeric_meta);
    }
    if (rows.empty()) {
        throw SplitError("zscore_fit: split '" + std::string(split_name(split)) + "' is empty");
    }
    return zscore_fit(rows);
}

std::array<double, kNumericMeta> zscore_apply(const ZScoreStats& stats,
                                              const std::array<double, kNumericMeta>& x) {
    std::array<double, kNumericMeta> out{};
    for (std::size_t f = 0; f < kNumericMeta; ++f) {
        out[f] = stats.constant[f] ? 0.0 : (x[f] - stats.mean[f]) / stats.std[f];
    }
    return out;
}

} // namespace botsai
