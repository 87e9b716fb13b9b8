#include "botsai/synthgen.hpp"

#include "botsai/errors.hpp"
#include "botsai/matrix.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace botsai {

using nlohmann::json;

namespace {

std::size_t bot_count(const SynthConfig& c) {
    return static_cast<std::size_t>(std::llround(c.bot_fraction * static_cast<double>(c.n_users)));
}

} // namespace

void SynthConfig::validate() const {
    if (!(bot_fraction > 0.0 && bot_fraction < 1.0)) {
        throw ConfigError("bot_fraction must be in (0, 1)");
    }
    const std::size_t bots = bot_count(*this);
    if (bots < 2 || n_users < bots + 2) {
        throw ConfigError("n_users and bot_fraction must leave at least 2 users per class");
    }
    if (latent_dim < 1) throw ConfigError("latent_dim must be at least 1");
    if (text_dim < 2) throw ConfigError("text_dim must be at least 2");
    for (double v : {shared_gap, meta_gap, text_gap}) {
        if (!std::isfinite(v)) throw ConfigError("class gaps must be finite");
    }
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
    std::set<std::string> names;
    for (const auto& r : relations) {
        if (r.name.empty()) throw ConfigError("relation names must be non-empty");
        if (!names.insert(r.name).second) {
            throw ConfigError("relation '" + r.name + "' listed twice");
        }
        if (!(r.signal >= 0.0 && r.signal <= 1.0)) {
            throw ConfigError("relation '" + r.name + "' signal must be in [0, 1]");
        }
    }
}

HeteroGraph generate(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    auto gaussian_matrix = [&](std::size_t rows, std::size_t cols) {
        Matrix m(rows, cols);
        const double s = 1.0 / std::sqrt(static_cast<double>(cols));
        for (double& v : m.values()) v = normal(rng) * s;
        return m;
    };
    auto unit_vector = [&](std::size_t dim) {
        std::vector<double> v(dim);
        double n2 = 0.0;
        for (double& x : v) {
            x = normal(rng);
            n2 += x * x;
        }
        for (double& x : v) x /= std::sqrt(n2);
        return v;
    };

    const std::size_t n = cfg.n_users;
    const std::size_t L = cfg.latent_dim;
    const std::size_t d = cfg.text_dim;
    const auto class_dir = unit_vector(L);
    const auto meta_dir = unit_vector(kNumericMeta);
    const auto text_dir = unit_vector(d);
    const Matrix w_meta = gaussian_matrix(kNumericMeta, L);
    const Matrix w_desc = gaussian_matrix(d, L);
    const Matrix w_tweet = gaussian_matrix(d, L);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Label> labels(n, Label::human);
    for (std::size_t i = 0; i < bot_count(cfg); ++i) labels[order[i]] = Label::bot;

    // Observation: W c + sign * gap/2 * dir + noise.
    auto observe = [&](const Matrix& w, const std::vector<double>& c, double sign, double gap,
                       const std::vector<double>& dir) {
        std::vector<double> out(w.rows());
        for (std::size_t i = 0; i < w.rows(); ++i) {
            double s = sign * 0.5 * gap * dir[i] + cfg.noise * normal(rng);
            for (std::size_t j = 0; j < L; ++j) s += w(i, j) * c[j];
            out[i] = s;
        }
        return out;
    };

    HeteroGraph g;
    g.text_dim = d;
    g.users.resize(n);
    for (std::size_t v = 0; v < n; ++v) {
        UserRecord& u = g.users[v];
        u.id = "u" + std::to_string(v);
        u.label = labels[v];
        const double sign = labels[v] == Label::bot ? 1.0 : -1.0;
        std::vector<double> c(L);
        for (std::size_t j = 0; j < L; ++j) {
            c[j] = sign * 0.5 * cfg.shared_gap * class_dir[j] + cfg.noise * normal(rng);
        }
        const auto meta = observe(w_meta, c, sign, cfg.meta_gap, meta_dir);
        const bool bot = labels[v] == Label::bot;
        std::copy(meta.begin(), meta.end(), u.numeric_meta.begin());
        const double cat_p[kCategoricalMeta] = {0.1, bot ? 0.05 : 0.15, bot ? 0.4 : 0.2};
        for (std::size_t f = 0; f < kCategoricalMeta; ++f) {
            u.categorical_meta[f] = unif(rng) < cat_p[f] ? 1.0 : 0.0;
        }
        u.description_embedding = observe(w_desc, c, sign, cfg.text_gap, text_dir);
        for (std::size_t k = 0; k < cfg.tweets; ++k) {
            u.tweet_embeddings.push_back(observe(w_tweet, c, sign, cfg.text_gap, text_dir));
        }
    }

    std::vector<std::size_t> bots, humans;
    for (std::size_t v = 0; v < n; ++v) {
        (labels[v] == Label::bot ? bots : humans).push_back(v);
    }
    auto draw_other = [&](const std::vector<std::size_t>& pool, std::size_t self) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        for (;;) {
            const std::size_t u = pool[pick(rng)];
            if (u != self) return u;
        }
    };
    std::vector<std::size_t> everyone(n);
    std::iota(everyone.begin(), everyone.end(), std::size_t{0});
    for (std::size_t r = 0; r < cfg.relations.size(); ++r) {
        const auto& rel = cfg.relations[r];
        g.relations.push_back(rel.name);
        for (std::size_t v = 0; v < n; ++v) {
            const auto& same = labels[v] == Label::bot ? bots : humans;
            for (std::size_t k = 0; k < rel.degree; ++k) {
                const bool informative = unif(rng) < rel.signal;
                const std::size_t src = draw_other(informative ? same : everyone, v);
                g.edges.push_back(Edge{r, src, v});
            }
        }
    }
    return g;
}

SynthConfig synth_config_from_json(std::string_view text, SynthConfig c) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed synth config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("synth config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "n_users") c.n_users = v.get<std::size_t>();
            else if (key == "bot_fraction") c.bot_fraction = v.get<double>();
            else if (key == "shared_gap") c.shared_gap = v.get<double>();
            else if (key == "meta_gap") c.meta_gap = v.get<double>();
            else if (key == "text_gap") c.text_gap = v.get<double>();
            else if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
            else if (key == "text_dim") c.text_dim = v.get<std::size_t>();
            else if (key == "tweets") c.tweets = v.get<std::size_t>();
            else if (key == "noise") c.noise = v.get<double>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "relations") {
                c.relations.clear();
                for (const auto& r : v) {
                    SynthRelation rel;
                    rel.name = r.at("name").get<std::string>();
                    rel.signal = r.value("signal", 0.0);
                    rel.degree = r.value("degree", std::size_t{4});
                    c.relations.push_back(rel);
                }
            } else {
                throw ConfigError("unknown synth config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad synth config value: ") + e.what());
    }
    return c;
}

double edge_label_chi_square(const HeteroGraph& g, std::size_t relation) {
    double table[2][2] = {{0, 0}, {0, 0}};
    for (const Edge& e : g.edges) {
        if (e.relation != relation) continue;
        const Label a = g.users[e.src].label;
        const Label b = g.users[e.dst].label;
        if (a == Label::unlabeled || b == Label::unlabeled) continue;
        table[a == Label::bot][b == Label::bot] += 1.0;
    }
    const double total = table[0][0] + table[0][1] + table[1][0] + table[1][1];
    double chi = 0.0;
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            const double expected =
                (table[i][0] + table[i][1]) * (table[0][j] + table[1][j]) / total;
            if (expected > 0.0) {
                chi += (table[i][j] - expected) * (table[i][j] - expected) / expected;
            }
        }
    }
    return chi;
}

} // namespace botsai
