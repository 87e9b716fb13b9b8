#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "botsai/errors.hpp"
#include "botsai/gradcheck.hpp"
#include "botsai/losses.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace botsai;
using botsai::testing::random_matrix;

namespace {

// Coordinatewise moments computed with plain loops.
double cmd_oracle(const Matrix& x, const Matrix& y, int order) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Matrix* m : {&x, &y}) {
        for (double v : m->values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double range = hi - lo;
    if (range == 0.0) return 0.0;
    const std::size_t d = x.cols();
    auto mean = [&](const Matrix& m, std::size_t c) {
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, c);
        return s / m.rows();
    };
    auto central = [&](const Matrix& m, std::size_t c, int k) {
        const double mu = mean(m, c);
        double s = 0.0;
        for (std::size_t i = 0; i < m.rows(); ++i) s += std::pow(m(i, c) - mu, k);
        return s / m.rows();
    };
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) sq += std::pow(mean(x, c) - mean(y, c), 2);
    double total = std::sqrt(sq) / range;
    for (int k = 2; k <= order; ++k) {
        sq = 0.0;
        for (std::size_t c = 0; c < d; ++c) sq += std::pow(central(x, c, k) - central(y, c, k), 2);
        total += std::sqrt(sq) / std::pow(range, k);
    }
    return total;
}

SubspaceBundle bundle_of(Tape& t, const std::array<Matrix, 3>& inv,
                         const std::array<Matrix, 3>& spec) {
    SubspaceBundle b;
    for (std::size_t m = 0; m < kModes; ++m) {
        b.invariant[m] = t.constant(inv[m]);
        b.specific[m] = t.constant(spec[m]);
    }
    return b;
}

} // namespace

TEST_CASE("cmd hand cases") {
    const Matrix a{{0}, {1}};
    const Matrix b{{1}, {1}};
    CHECK(cmd(a, b, 2) == 0.75);
    CHECK(cmd(a, a, 2) == 0.0);
    CHECK(cmd(b, b, 5) == 0.0);
}

TEST_CASE("cmd properties on random samples") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 200; ++i) {
        const Matrix x = random_matrix(5, 3, rng, -2, 2);
        const Matrix y = random_matrix(7, 3, rng, -1, 3);
        const double xy = cmd(x, y, 5);
        CHECK(xy == cmd(y, x, 5));
        CHECK(xy >= 0.0);
        CHECK(cmd(x, x, 5) < 1e-12);
        CHECK(std::abs(xy - cmd_oracle(x, y, 5)) < 1e-12);
    }
}

TEST_CASE("cmd errors") {
    CHECK_THROWS_AS(cmd(Matrix(0, 2), Matrix(2, 2), 5), DimensionError);
    CHECK_THROWS_AS(cmd(Matrix(2, 2), Matrix(2, 3), 5), DimensionError);
    CHECK_THROWS_AS(cmd(Matrix(2, 2), Matrix(2, 2), 0), ConfigError);
}

TEST_CASE("similarity loss structure") {
    std::mt19937_64 rng(2);
    const Matrix x = random_matrix(6, 3, rng);
    const Matrix y = random_matrix(6, 3, rng);
    const Matrix z(6, 3);
    Tape t;
    CHECK(sim_loss(bundle_of(t, {x, x, x}, {z, z, z}), 5).value().scalar() == 0.0);
    const double c = cmd(x, y, 5);
    const double s = sim_loss(bundle_of(t, {x, x, y}, {z, z, z}), 5).value().scalar();
    CHECK(s == doctest::Approx((0.0 + c + c) / 3.0).epsilon(1e-14));
    const Matrix w = random_matrix(6, 3, rng);
    const double full = sim_loss(bundle_of(t, {x, y, w}, {z, z, z}), 5).value().scalar();
    const double want = (cmd_oracle(x, y, 5) + cmd_oracle(x, w, 5) + cmd_oracle(y, w, 5)) / 3.0;
    CHECK(std::abs(full - want) < 1e-12);
}

TEST_CASE("difference loss hand fixture") {
    // Centered A = [[1,0],[-1,0]], centered and normalised B = [[-1,1],[1,-1]]/sqrt(2).
    // A^T B = [[-sqrt2, sqrt2],[0,0]] so the squared Frobenius norm is 4.
    const Matrix a{{2, 1}, {0, 1}};
    const Matrix b{{1, 3}, {3, 1}};
    const Matrix z(2, 2);
    Tape t;
    CHECK(diff_loss(bundle_of(t, {a, z, z}, {b, z, z})).value().scalar() ==
          doctest::Approx(4.0).epsilon(1e-14));
    // Cross pair (G, T).
    CHECK(diff_loss(bundle_of(t, {a, z, z}, {z, b, z})).value().scalar() ==
          doctest::Approx(4.0).epsilon(1e-14));
    // Both terms.
    CHECK(diff_loss(bundle_of(t, {a, z, z}, {b, b, z})).value().scalar() ==
          doctest::Approx(8.0).epsilon(1e-14));
    // (T, G) is not one of the constrained pairs.
    CHECK(diff_loss(bundle_of(t, {z, a, z}, {b, z, z})).value().scalar() == 0.0);
}

TEST_CASE("difference loss of orthogonal subspaces is zero") {
    // Rows of H^i on e1 and of H^s on e2, with sign patterns over the batch
    // that are orthogonal after centering, so every entry of H^i^T H^s is 0.
    Matrix hi(4, 3), hs(4, 3);
    const double u[] = {1.0, -1.0, 1.0, -1.0};
    const double v[] = {2.0, 2.0, -2.0, -2.0};
    for (std::size_t r = 0; r < 4; ++r) {
        hi(r, 0) = u[r];
        hs(r, 1) = v[r];
    }
    const Matrix z(4, 3);
    Tape t;
    CHECK(diff_loss(bundle_of(t, {hi, hi, hi}, {hs, hs, hs})).value().scalar() == 0.0);
    CHECK(diff_loss(bundle_of(t, {hi, z, z}, {hi, z, z})).value().scalar() > 0.0);
}

TEST_CASE("difference loss is invariant under joint row permutation") {
    std::mt19937_64 rng(3);
    std::array<Matrix, 3> inv, spec, pinv, pspec;
    const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    for (std::size_t m = 0; m < 3; ++m) {
        inv[m] = random_matrix(5, 3, rng);
        spec[m] = random_matrix(5, 3, rng);
        pinv[m] = Matrix(5, 3);
        pspec[m] = Matrix(5, 3);
        for (std::size_t r = 0; r < 5; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                pinv[m](r, c) = inv[m](perm[r], c);
                pspec[m](r, c) = spec[m](perm[r], c);
            }
        }
    }
    Tape t;
    CHECK(diff_loss(bundle_of(t, inv, spec)).value().scalar() ==
          doctest::Approx(diff_loss(bundle_of(t, pinv, pspec)).value().scalar()).epsilon(1e-13));
}

TEST_CASE("difference loss needs two rows") {
    const Matrix one(1, 2, 1.0);
    Tape t;
    CHECK_THROWS_AS(diff_loss(bundle_of(t, {one, one, one}, {one, one, one})), DimensionError);
}

TEST_CASE("center_normalize leaves zero rows at zero") {
    Tape t;
    const Matrix out = center_normalize(t.constant(Matrix{{1, 1}, {1, 1}, {4, 5}})).value();
    CHECK(out(0, 0) == doctest::Approx(-1.0 / std::sqrt(1 + 16.0 / 9.0)));
    Tape t2;
    const Matrix same = center_normalize(t2.constant(Matrix{{2, 3}, {2, 3}})).value();
    CHECK(same == Matrix(2, 2));
}

TEST_CASE("reconstruction loss") {
    ParamStore store;
    const DecoderParams p = DecoderParams::create(store, 3);
    for (std::size_t m = 0; m < kModes; ++m) {
        store.mutable_value(std::string("dec.") + kModeNames[m] + ".w") = Matrix::identity(3);
    }
    std::mt19937_64 rng(4);
    std::array<Matrix, 3> x;
    for (auto& m : x) m = random_matrix(4, 3, rng);
    const Matrix z(4, 3);
    SUBCASE("perfect reconstruction") {
        Tape t;
        const SubspaceBundle b = bundle_of(t, x, {z, z, z});
        CHECK(recon_loss(t, store, p, b, {t.constant(x[0]), t.constant(x[1]), t.constant(x[2])})
                  .value()
                  .scalar() == 0.0);
    }
    SUBCASE("constant offset gives its square") {
        const double eps = 0.125;
        std::array<Matrix, 3> shifted = x;
        for (auto& m : shifted) {
            for (double& v : m.values()) v += eps;
        }
        Tape t;
        const SubspaceBundle b = bundle_of(t, shifted, {z, z, z});
        const double l =
            recon_loss(t, store, p, b, {t.constant(x[0]), t.constant(x[1]), t.constant(x[2])})
                .value()
                .scalar();
        CHECK(l == doctest::Approx(eps * eps).epsilon(1e-13));
    }
    SUBCASE("nonnegative on random fixtures") {
        for (int i = 0; i < 20; ++i) {
            std::array<Matrix, 3> a, s;
            for (std::size_t m = 0; m < 3; ++m) {
                a[m] = random_matrix(4, 3, rng);
                s[m] = random_matrix(4, 3, rng);
            }
            Tape t;
            CHECK(recon_loss(t, store, p, bundle_of(t, a, s),
                             {t.constant(x[0]), t.constant(x[1]), t.constant(x[2])})
                      .value()
                      .scalar() >= 0.0);
        }
    }
}

TEST_CASE("task loss") {
    ParamStore store;
    store.add("w", Matrix{{1.0, -2.0}}, ParamKind::weight);
    store.add("b", Matrix{{10.0}}, ParamKind::bias);
    SUBCASE("one half everywhere is n ln 2") {
        Tape t;
        const std::vector<double> y{0, 1, 1, 0, 1};
        CHECK(task_loss(t, store, t.constant(Matrix(5, 1, 0.5)), y, 0.0).value().scalar() ==
              doctest::Approx(5.0 * std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("perfect predictions leave only the L2 term on weights") {
        Tape t;
        const std::vector<double> y{0, 1};
        const double l =
            task_loss(t, store, t.constant(Matrix{{0.0}, {1.0}}), y, 0.5).value().scalar();
        CHECK(l == doctest::Approx(0.5 * 5.0).epsilon(1e-9));
    }
    SUBCASE("labels outside {0, 1}") {
        Tape t;
        const std::vector<double> y{2.0};
        CHECK_THROWS_AS(task_loss(t, store, t.constant(Matrix{{0.5}}), y, 0.0), LabelError);
    }
}

TEST_CASE("total loss") {
    Tape t;
    LossParts parts{t.constant(Matrix{{1.0}}), t.constant(Matrix{{1.0}}),
                    t.constant(Matrix{{1.0}}), t.constant(Matrix{{1.0}})};
    LossWeights w;
    CHECK(total_loss(t, parts, w).value().scalar() == doctest::Approx(3.0).epsilon(1e-15));
    LossWeights zero;
    zero.alpha = zero.beta_w = zero.gamma = 0.0;
    LossParts p2{t.constant(Matrix{{2.5}}), t.constant(Matrix{{7.0}}), t.constant(Matrix{{8.0}}),
                 t.constant(Matrix{{9.0}})};
    CHECK(total_loss(t, p2, zero).value().scalar() == 2.5);
    // Linear in each part.
    LossParts p3 = p2;
    p3.diff = t.constant(Matrix{{10.0}});
    CHECK(total_loss(t, p3, w).value().scalar() - total_loss(t, p2, w).value().scalar() ==
          doctest::Approx(w.beta_w * 2.0));
    LossParts bad = parts;
    bad.recon = t.constant(Matrix{{std::nan("")}});
    try {
        total_loss(t, bad, w);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("reconstruction") != std::string::npos);
    }
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    w.alpha = -1;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    LossWeights k;
    k.cmd_order = 0;
    CHECK_THROWS_AS(k.validate(), ConfigError);
}

TEST_CASE("loss gradients") {
    std::mt19937_64 rng(5);
    ParamStore store;
    const DecoderParams dec = DecoderParams::create(store, 3);
    for (std::size_t m = 0; m < 3; ++m) {
        store.add(std::string("hi") + kModeNames[m], random_matrix(5, 3, rng), ParamKind::weight);
        store.add(std::string("hs") + kModeNames[m], random_matrix(5, 3, rng), ParamKind::weight);
    }
    store.add("p", random_matrix(5, 1, rng, 0.1, 0.9), ParamKind::weight);
    for (const auto& name : store.names()) {
        if (name.rfind("dec.", 0) == 0) {
            const Matrix& v = store.value(name);
            store.mutable_value(name) = random_matrix(v.rows(), v.cols(), rng);
        }
    }
    std::array<Matrix, 3> x;
    for (auto& m : x) m = random_matrix(5, 3, rng);
    const std::vector<double> y{1, 0, 0, 1, 0};
    auto bundle = [&](Tape& t, const ParamStore& s) {
        SubspaceBundle b;
        for (std::size_t m = 0; m < 3; ++m) {
            b.invariant[m] = t.param(s, std::string("hi") + kModeNames[m]);
            b.specific[m] = t.param(s, std::string("hs") + kModeNames[m]);
        }
        return b;
    };
    SUBCASE("similarity") {
        LossBuilder l = [&](Tape& t, const ParamStore& s) { return sim_loss(bundle(t, s), 5); };
        CHECK(grad_check(l, store, 1e-5, 1e-4).passed);
    }
    SUBCASE("difference") {
        LossBuilder l = [&](Tape& t, const ParamStore& s) { return diff_loss(bundle(t, s)); };
        CHECK(grad_check(l, store, 1e-5, 1e-4).passed);
    }
    SUBCASE("reconstruction") {
        LossBuilder l = [&](Tape& t, const ParamStore& s) {
            return recon_loss(t, s, dec, bundle(t, s),
                              {t.constant(x[0]), t.constant(x[1]), t.constant(x[2])});
        };
        CHECK(grad_check(l, store, 1e-5, 1e-4).passed);
    }
    SUBCASE("task with L2") {
        LossBuilder l = [&](Tape& t, const ParamStore& s) {
            return task_loss(t, s, t.param(s, "p"), y, 0.01);
        };
        CHECK(grad_check(l, store, 1e-5, 1e-4).passed);
    }
    SUBCASE("weighted total") {
        LossBuilder l = [&](Tape& t, const ParamStore& s) {
            const SubspaceBundle b = bundle(t, s);
            LossParts parts{task_loss(t, s, t.param(s, "p"), y, 5e-6), sim_loss(b, 5),
                            diff_loss(b),
                            recon_loss(t, s, dec, b,
                                       {t.constant(x[0]), t.constant(x[1]), t.constant(x[2])})};
            return total_loss(t, parts, LossWeights{});
        };
        CHECK(grad_check(l, store, 1e-5, 1e-4).passed);
    }
}
