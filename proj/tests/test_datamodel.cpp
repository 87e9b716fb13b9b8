#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "botsai/dataset.hpp"
#include "botsai/errors.hpp"

#include "json.hpp"

#include <cmath>
#include <set>
#include <string>

using namespace botsai;
using nlohmann::json;

namespace {

json user_json(const std::string& id, const char* label = nullptr) {
    json u{{"id", id},
           {"numeric_meta", {1, 2, 3, 4, 5}},
           {"categorical_meta", {0, 1, 0}},
           {"description_embedding", {0.5, -0.5}},
           {"tweet_embeddings", json::array({{1.0, 2.0}})}};
    if (label) u["label"] = label;
    return u;
}

json labeled_dataset(std::size_t n) {
    json users = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        users.push_back(user_json("u" + std::to_string(i), i % 3 == 0 ? "bot" : "human"));
    }
    return json{{"relations", {"follower"}}, {"users", users}, {"edges", json::array()}};
}

} // namespace

TEST_CASE("minimal dataset loads") {
    json d{{"relations", {"follower"}},
           {"users", {user_json("a"), user_json("b")}},
           {"edges", {{{"relation", "follower"}, {"src", "a"}, {"dst", "b"}}}}};
    const HeteroGraph g = parse_dataset(d.dump());
    CHECK(g.num_users() == 2);
    CHECK(g.edges.size() == 1);
    CHECK(g.text_dim == 2);
    CHECK(g.edges[0].src == 0);
    CHECK(g.edges[0].dst == 1);
}

TEST_CASE("edge to a missing user names the id") {
    json d{{"relations", {"follower"}},
           {"users", {user_json("a"), user_json("b")}},
           {"edges", {{{"relation", "follower"}, {"src", "a"}, {"dst", "u99"}}}}};
    try {
        parse_dataset(d.dump());
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("u99") != std::string::npos);
    }
}

TEST_CASE("load errors") {
    SUBCASE("unknown relation") {
        json d{{"relations", {"follower"}},
               {"users", {user_json("a"), user_json("b")}},
               {"edges", {{{"relation", "mention"}, {"src", "a"}, {"dst", "b"}}}}};
        CHECK_THROWS_AS(parse_dataset(d.dump()), LoadError);
    }
    SUBCASE("ragged embeddings name the user") {
        json bad = user_json("b");
        bad["description_embedding"] = {1.0, 2.0, 3.0};
        json d{{"relations", {"follower"}}, {"users", {user_json("a"), bad}}, {"edges", json::array()}};
        try {
            parse_dataset(d.dump());
            FAIL("expected LoadError");
        } catch (const LoadError& e) {
            CHECK(std::string(e.what()).find("'b'") != std::string::npos);
        }
    }
    SUBCASE("ragged tweet embedding") {
        json bad = user_json("b");
        bad["tweet_embeddings"] = json::array({{1.0}});
        json d{{"relations", {"follower"}}, {"users", {user_json("a"), bad}}, {"edges", json::array()}};
        CHECK_THROWS_AS(parse_dataset(d.dump()), LoadError);
    }
    SUBCASE("not json") {
        CHECK_THROWS_AS(parse_dataset("{"), LoadError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_dataset("/nonexistent/data.json"), LoadError);
    }
}

TEST_CASE("two-relation fixture keeps both relations") {
    json d{{"relations", {"follower", "following"}},
           {"users", {user_json("a"), user_json("b")}},
           {"edges",
            {{{"relation", "follower"}, {"src", "a"}, {"dst", "b"}},
             {{"relation", "following"}, {"src", "b"}, {"dst", "a"}}}}};
    const HeteroGraph g = parse_dataset(d.dump());
    CHECK(g.relations.size() == 2);
    CHECK(g.edges[1].relation == 1);
}

TEST_CASE("assign_splits uses a 7:2:1 ratio") {
    const HeteroGraph g = parse_dataset(labeled_dataset(10).dump());
    const HeteroGraph s = assign_splits(g, SplitSpec{});
    CHECK(s.split_indices(Split::train).size() == 7);
    CHECK(s.split_indices(Split::test).size() == 2);
    CHECK(s.split_indices(Split::val).size() == 1);
}

TEST_CASE("assign_splits is deterministic per seed") {
    const HeteroGraph g = parse_dataset(labeled_dataset(100).dump());
    SplitSpec a;
    a.seed = 11;
    SplitSpec b;
    b.seed = 12;
    const HeteroGraph s1 = assign_splits(g, a);
    const HeteroGraph s2 = assign_splits(g, a);
    const HeteroGraph s3 = assign_splits(g, b);
    CHECK(s1.split_indices(Split::train) == s2.split_indices(Split::train));
    CHECK(s1.split_indices(Split::test) == s2.split_indices(Split::test));
    CHECK(s1.split_indices(Split::train) != s3.split_indices(Split::train));
    for (const HeteroGraph* s : {&s1, &s3}) {
        CHECK(s->split_indices(Split::train).size() == 70);
        CHECK(s->split_indices(Split::test).size() == 20);
        CHECK(s->split_indices(Split::val).size() == 10);
    }
}

TEST_CASE("splits partition the labeled users and skip unlabeled ones") {
    json d = labeled_dataset(30);
    d["users"].push_back(user_json("x"));
    const HeteroGraph s = assign_splits(parse_dataset(d.dump()), SplitSpec{});
    std::set<std::size_t> seen;
    std::size_t total = 0;
    for (Split sp : {Split::train, Split::test, Split::val}) {
        for (std::size_t i : s.split_indices(sp)) {
            seen.insert(i);
            ++total;
        }
    }
    CHECK(total == 30);
    CHECK(seen.size() == 30);
    CHECK(s.users.back().split == Split::none);
}

TEST_CASE("too few labeled users is a split error") {
    const HeteroGraph g = parse_dataset(labeled_dataset(9).dump());
    CHECK_THROWS_AS(assign_splits(g, SplitSpec{}), SplitError);
}

TEST_CASE("zscore uses the population std") {
    std::vector<std::array<double, kNumericMeta>> rows{
        {1, 5, 0, 0, 0}, {2, 5, 0, 0, 0}, {3, 5, 0, 0, 0}};
    const ZScoreStats st = zscore_fit(rows);
    const double expected = 1.0 / std::sqrt(2.0 / 3.0);
    CHECK(zscore_apply(st, rows[0])[0] == doctest::Approx(-expected).epsilon(1e-12));
    CHECK(zscore_apply(st, rows[1])[0] == doctest::Approx(0.0));
    CHECK(zscore_apply(st, rows[2])[0] == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(1.2247).epsilon(1e-4));
    for (const auto& r : rows) CHECK(zscore_apply(st, r)[1] == 0.0);
    CHECK(zscore_apply(st, {2, 7, 0, 0, 0})[0] == 0.0);
}

TEST_CASE("zscore of the fitted rows has mean 0 and std 1") {
    std::vector<std::array<double, kNumericMeta>> rows;
    for (int i = 0; i < 17; ++i) {
        rows.push_back({double(i), double(i * i), std::sin(i), 3.0, -double(i)});
    }
    const ZScoreStats st = zscore_fit(rows);
    for (std::size_t f = 0; f < kNumericMeta; ++f) {
        double mean = 0.0, sq = 0.0;
        for (const auto& r : rows) {
            const double z = zscore_apply(st, r)[f];
            mean += z;
            sq += z * z;
        }
        mean /= rows.size();
        const double sd = std::sqrt(sq / rows.size() - mean * mean);
        CHECK(std::abs(mean) < 1e-9);
        if (!st.constant[f]) {
            CHECK(std::abs(sd - 1.0) < 1e-9);
        }
    }
    CHECK(st.constant[3]);
}

TEST_CASE("zscore fit on an empty split is an error") {
    const HeteroGraph g = parse_dataset(labeled_dataset(10).dump());
    CHECK_THROWS_AS(zscore_fit(g, Split::train), SplitError);
}

TEST_CASE("serialization round-trips") {
    json d = labeled_dataset(12);
    d["relations"] = {"follower", "following"};
    d["edges"] = {{{"relation", "following"}, {"src", "u1"}, {"dst", "u2"}},
                  {{"relation", "follower"}, {"src", "u3"}, {"dst", "u0"}}};
    const HeteroGraph g = assign_splits(parse_dataset(d.dump()), SplitSpec{});
    const std::string once = dataset_to_string(g);
    const HeteroGraph back = parse_dataset(once);
    CHECK(dataset_to_string(back) == once);
    CHECK(back.split_indices(Split::train) == g.split_indices(Split::train));
    CHECK(back.edges.size() == 2);
}

TEST_CASE("restrict_relations keeps only the named relations") {
    json d{{"relations", {"follower", "following"}},
           {"users", {user_json("a"), user_json("b")}},
           {"edges",
            {{{"relation", "follower"}, {"src", "a"}, {"dst", "b"}},
             {{"relation", "following"}, {"src", "b"}, {"dst", "a"}}}}};
    const HeteroGraph g = parse_dataset(d.dump());
    const HeteroGraph r = restrict_relations(g, {"following"});
    REQUIRE(r.relations.size() == 1);
    REQUIRE(r.edges.size() == 1);
    CHECK(r.edges[0].relation == 0);
    CHECK(r.edges[0].src == 1);
    CHECK_THROWS_AS(restrict_relations(g, {"mention"}), ConfigError);
}
