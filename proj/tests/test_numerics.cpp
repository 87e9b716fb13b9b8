#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "botsai/errors.hpp"
#include "botsai/gradcheck.hpp"
#include "botsai/kernels.hpp"
#include "botsai/ops.hpp"
#include "botsai/params.hpp"
#include "test_util.hpp"

#include <cmath>
#include <functional>

using namespace botsai;
using botsai::testing::naive_matmul;
using botsai::testing::random_matrix;

TEST_CASE("affine matches hand examples") {
    Tape t;
    auto x = t.constant(Matrix{{1, 2}});
    auto out = affine(x, t.constant(Matrix::identity(2)), t.constant(Matrix{{0, 0}}));
    CHECK(out.value() == Matrix{{1, 2}});

    auto x2 = t.constant(Matrix{{1, 0}, {0, 1}});
    auto out2 = affine(x2, t.constant(Matrix{{2, 0}, {0, 3}}), t.constant(Matrix{{1, 1}}));
    CHECK(out2.value() == Matrix{{3, 1}, {1, 4}});

    auto x3 = t.constant(Matrix{{0, 0}});
    auto out3 = affine(x3, t.constant(Matrix{{4, -2}, {9, 1}}), t.constant(Matrix{{5, 7}}));
    CHECK(out3.value() == Matrix{{5, 7}});
}

TEST_CASE("affine shape mismatch names both shapes") {
    Tape t;
    auto x = t.constant(Matrix(1, 3));
    auto w = t.constant(Matrix(2, 2));
    try {
        affine(x, w, Var{});
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1x3]") != std::string::npos);
        CHECK(msg.find("[2x2]") != std::string::npos);
    }
}

TEST_CASE("affine is linear without bias") {
    std::mt19937_64 rng(3);
    Tape t;
    Matrix x = random_matrix(4, 3, rng);
    Matrix y = random_matrix(4, 3, rng);
    auto w = t.constant(random_matrix(3, 5, rng));
    const double a = 1.7, b = -0.4;
    Matrix combo(4, 3);
    for (std::size_t i = 0; i < combo.size(); ++i) combo.data()[i] = a * x.data()[i] + b * y.data()[i];
    auto lhs = affine(t.constant(combo), w, Var{});
    auto fx = affine(t.constant(x), w, Var{});
    auto fy = affine(t.constant(y), w, Var{});
    Matrix rhs(4, 5);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs.data()[i] = a * fx.value().data()[i] + b * fy.value().data()[i];
    CHECK(max_abs_diff(lhs.value(), rhs) < 1e-12);
}

TEST_CASE("relu examples") {
    Tape t;
    CHECK(relu(t.constant(Matrix{{-1, 2}})).value() == Matrix{{0, 2}});
    CHECK(relu(t.constant(Matrix{{0}})).value() == Matrix{{0}});
    CHECK(relu(t.constant(Matrix{{3.5, -0.5, 0.25}})).value() == Matrix{{3.5, 0, 0.25}});
}

TEST_CASE("relu subgradient at zero is zero") {
    Tape t;
    auto x = t.variable(Matrix{{0.0, 1.0}});
    auto loss = sum_all(relu(x));
    t.backward(loss);
    CHECK((*t.grad(x))(0, 0) == 0.0);
    CHECK((*t.grad(x))(0, 1) == 1.0);
}

TEST_CASE("softmax examples") {
    CHECK(softmax_rows(Matrix{{0, 0}}) == Matrix{{0.5, 0.5}});
    Matrix big = softmax_rows(Matrix{{1000, 1000, 1000}});
    for (double v : big.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    // e^0 / (e^0 + e^ln3) = 1/4
    Matrix m = softmax_rows(Matrix{{0, std::log(3.0)}});
    CHECK(m(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(m(0, 1) == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("softmax rows sum to one and are shift invariant") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> shift(-500, 500);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix x = random_matrix(3, 1 + trial % 7, rng, -30, 30);
        Matrix y = softmax_rows(x);
        Matrix shifted = x;
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const double c = shift(rng);
            for (double& v : shifted.row(i)) v += c;
        }
        Matrix ys = softmax_rows(shifted);
        for (std::size_t i = 0; i < y.rows(); ++i) {
            double s = 0.0;
            for (double v : y.row(i)) {
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        CHECK(max_abs_diff(y, ys) < 1e-9);
    }
}

TEST_CASE("dropout contract") {
    std::mt19937_64 rng(5);
    Tape t;
    Matrix xm = random_matrix(2, 3, rng);
    auto x = t.constant(xm);
    CHECK(dropout(x, 0.0, true, rng).value() == xm);
    CHECK(dropout(x, 0.4, false, rng).value() == xm);
    CHECK_THROWS_AS(dropout(x, 1.0, true, rng), ConfigError);
    CHECK_THROWS_AS(dropout(x, -0.1, true, rng), ConfigError);

    // Monte-Carlo: E[dropout(x)] = x.
    Matrix ones(1, 4, 1.0);
    ones(0, 1) = 2.0;
    ones(0, 2) = -3.0;
    ones(0, 3) = 0.5;
    auto xv = t.constant(ones);
    Matrix mean(1, 4);
    const int trials = 10000;
    std::mt19937_64 mc(42);
    for (int i = 0; i < trials; ++i) {
        Tape local;
        auto out = dropout(local.constant(ones), 0.5, true, mc);
        for (std::size_t j = 0; j < 4; ++j) mean(0, j) += out.value()(0, j) / trials;
    }
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(std::abs(mean(0, j) - ones(0, j)) <= 0.02 * std::abs(ones(0, j)));
    }
}

TEST_CASE("adam zero gradient is a fixed point") {
    ParamStore store;
    store.add("a", Matrix{{1.5, -2.0}}, ParamKind::weight);
    Gradients g{{"a", Matrix(1, 2)}};
    adam_step(store, g, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    CHECK(store.value("a") == Matrix{{1.5, -2.0}});
    CHECK(store.entry("a").first_moment == Matrix(1, 2));
    CHECK(store.entry("a").second_moment == Matrix(1, 2));
    CHECK(store.entry("a").steps == 1);
}

TEST_CASE("adam first step on a scalar") {
    ParamStore store;
    store.add("p", Matrix{{0.0}}, ParamKind::weight);
    adam_step(store, Gradients{{"p", Matrix{{1.0}}}}, AdamConfig{0.1, 0.9, 0.999, 1e-8});
    // m_hat = 1, v_hat = 1 -> p = -0.1 / (1 + 1e-8)
    CHECK(store.value("p")(0, 0) == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("adam identical params and grads update identically") {
    ParamStore store;
    store.add("a", Matrix{{0.3, 0.7}}, ParamKind::weight);
    store.add("b", Matrix{{0.3, 0.7}}, ParamKind::weight);
    for (int i = 0; i < 5; ++i) {
        Matrix g{{0.1 * i, -0.2}};
        adam_step(store, Gradients{{"a", g}, {"b", g}}, AdamConfig{});
    }
    CHECK(store.value("a") == store.value("b"));
}

TEST_CASE("adam rejects missing or misshapen gradients") {
    ParamStore store;
    store.add("a", Matrix(1, 2), ParamKind::weight);
    store.add("b", Matrix(1, 2), ParamKind::bias);
    CHECK_THROWS_AS(adam_step(store, Gradients{{"a", Matrix(1, 2)}}, AdamConfig{}),
                    ConsistencyError);
    CHECK_THROWS_AS(adam_step(store, Gradients{{"a", Matrix(1, 2)}, {"b", Matrix(2, 1)}},
                              AdamConfig{}),
                    ConsistencyError);
}

TEST_CASE("xavier init zeroes biases and bounds weights") {
    ParamStore store;
    Linear::create(store, "l", 6, 10);
    store.init_xavier(9);
    const double limit = std::sqrt(6.0 / 16.0);
    for (double v : store.value("l.w").values()) CHECK(std::abs(v) <= limit);
    CHECK(store.value("l.b") == Matrix(1, 10));
    ParamStore again;
    Linear::create(again, "l", 6, 10);
    again.init_xavier(9);
    CHECK(again.value("l.w") == store.value("l.w"));
}

TEST_CASE("tape leaves untouched parameters with zero gradient") {
    ParamStore store;
    store.add("used", Matrix{{1.0, 2.0}}, ParamKind::weight);
    store.add("unused", Matrix{{3.0}}, ParamKind::weight);
    Tape t;
    auto loss = sum_squares(t.param(store, "used"));
    t.backward(loss);
    auto g = t.param_gradients(store);
    CHECK(g.at("used") == Matrix{{2.0, 4.0}});
    CHECK(g.at("unused") == Matrix{{0.0}});
}

TEST_CASE("grad_check on sum of squares and constant loss") {
    ParamStore store;
    store.add("p", Matrix{{1.0, 2.0}}, ParamKind::weight);
    LossBuilder squares = [](Tape& t, const ParamStore& s) { return sum_squares(t.param(s, "p")); };
    Tape t;
    auto root = squares(t, store);
    t.backward(root);
    CHECK(t.param_gradients(store).at("p") == Matrix{{2.0, 4.0}});
    auto report = grad_check(squares, store, 1e-5, 1e-6);
    CHECK(report.passed);
    CHECK(report.max_rel_error < 1e-6);

    LossBuilder constant = [](Tape& t, const ParamStore& s) {
        t.param(s, "p");
        return t.constant(Matrix{{4.2}});
    };
    Tape t2;
    auto c = constant(t2, store);
    t2.backward(c);
    CHECK(t2.param_gradients(store).at("p") == Matrix(1, 2));
    CHECK(grad_check(constant, store, 1e-5, 1e-6).passed);
}

TEST_CASE("grad_check detects a non-deterministic loss") {
    ParamStore store;
    store.add("p", Matrix{{1.0}}, ParamKind::weight);
    int calls = 0;
    LossBuilder flaky = [&calls](Tape& t, const ParamStore& s) {
        ++calls;
        return scale(sum_all(t.param(s, "p")), static_cast<double>(calls));
    };
    CHECK_THROWS_AS(grad_check(flaky, store, 1e-5, 1e-4), OracleError);
}

namespace {

// Loss = sum(op(inputs) .* R) for a fixed random R, so every output entry
// contributes a distinct weight to the gradient.
void check_op(const std::string& label, std::vector<Matrix> inputs,
              const std::function<Var(Tape&, std::vector<Var>&)>& op) {
    CAPTURE(label);
    ParamStore store;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        store.add("in" + std::to_string(i), inputs[i], ParamKind::weight);
    }
    Matrix weights;
    {
        Tape probe;
        std::vector<Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(probe.param(store, "in" + std::to_string(i)));
        Var out = op(probe, vars);
        std::mt19937_64 rng(99);
        weights = random_matrix(out.rows(), out.cols(), rng, 0.5, 1.5);
    }
    LossBuilder loss = [&](Tape& t, const ParamStore& s) {
        std::vector<Var> vars;
        for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(t.param(s, "in" + std::to_string(i)));
        return sum_all(mul(op(t, vars), t.constant(weights)));
    };
    auto report = grad_check(loss, store, 1e-5, 1e-4);
    CHECK(report.max_rel_error < 1e-4);
}

} // namespace

TEST_CASE("every differentiable op passes grad_check") {
    std::mt19937_64 rng(2024);
    auto r = [&](std::size_t a, std::size_t b) { return random_matrix(a, b, rng); };
    auto pos = [&](std::size_t a, std::size_t b) { return random_matrix(a, b, rng, 0.5, 2.0); };

    check_op("matmul", {r(3, 4), r(4, 2)}, [](Tape&, auto& v) { return matmul(v[0], v[1]); });
    check_op("transpose", {r(3, 4)}, [](Tape&, auto& v) { return transpose(v[0]); });
    check_op("affine", {r(3, 4), r(4, 2), r(1, 2)}, [](Tape&, auto& v) { return affine(v[0], v[1], v[2]); });
    check_op("add", {r(2, 3), r(2, 3)}, [](Tape&, auto& v) { return add(v[0], v[1]); });
    check_op("sub", {r(2, 3), r(2, 3)}, [](Tape&, auto& v) { return sub(v[0], v[1]); });
    check_op("mul", {r(2, 3), r(2, 3)}, [](Tape&, auto& v) { return mul(v[0], v[1]); });
    check_op("scale", {r(2, 3)}, [](Tape&, auto& v) { return scale(v[0], -2.5); });
    check_op("scale_by", {r(2, 3), r(1, 1)}, [](Tape&, auto& v) { return scale_by(v[0], v[1]); });
    check_op("reciprocal", {pos(2, 3)}, [](Tape&, auto& v) { return reciprocal(v[0]); });
    check_op("pow3", {r(2, 3)}, [](Tape&, auto& v) { return pow_int(v[0], 3); });
    check_op("add_row", {r(3, 2), r(1, 2)}, [](Tape&, auto& v) { return add_row(v[0], v[1]); });
    check_op("sub_row", {r(3, 2), r(1, 2)}, [](Tape&, auto& v) { return sub_row(v[0], v[1]); });
    check_op("relu", {r(3, 3)}, [](Tape&, auto& v) { return relu(v[0]); });
    check_op("leaky", {r(3, 3)}, [](Tape&, auto& v) { return leaky_relu(v[0], 0.1); });
    check_op("tanh", {r(3, 3)}, [](Tape&, auto& v) { return botsai::tanh(v[0]); });
    check_op("sigmoid", {r(3, 3)}, [](Tape&, auto& v) { return sigmoid(v[0]); });
    check_op("softmax", {r(3, 4)}, [](Tape&, auto& v) { return softmax_rows(v[0]); });
    check_op("concat_cols", {r(3, 2), r(3, 1)}, [](Tape&, auto& v) { return concat_cols({v[0], v[1]}); });
    check_op("slice_cols", {r(3, 5)}, [](Tape&, auto& v) { return slice_cols(v[0], 1, 3); });
    check_op("concat_rows", {r(2, 3), r(1, 3)}, [](Tape&, auto& v) { return concat_rows({v[0], v[1]}); });
    check_op("gather_rows", {r(4, 3)}, [](Tape&, auto& v) {
        std::vector<std::size_t> idx{3, 0, 3};
        return gather_rows(v[0], idx);
    });
    check_op("mix_rows", {r(4, 3)}, [](Tape&, auto& v) {
        std::vector<RowMix> mixes{{0, 2, 0.3, 0.7}, {1, 1, 0.5, 0.5}};
        return mix_rows(v[0], mixes);
    });
    check_op("interleave", {r(2, 3), r(2, 3), r(2, 3)}, [](Tape&, auto& v) {
        return interleave_rows({v[0], v[1], v[2]});
    });
    check_op("reshape", {r(2, 6)}, [](Tape&, auto& v) { return reshape(v[0], 4, 3); });
    check_op("col_mean", {r(4, 3)}, [](Tape&, auto& v) { return col_mean(v[0]); });
    check_op("sum_squares", {r(4, 3)}, [](Tape&, auto& v) { return sum_squares(v[0]); });
    check_op("l2_norm", {r(4, 3)}, [](Tape&, auto& v) { return l2_norm(v[0]); });
    check_op("max_all", {r(4, 3)}, [](Tape&, auto& v) { return max_all(v[0]); });
    check_op("min_all", {r(4, 3)}, [](Tape&, auto& v) { return min_all(v[0]); });
    check_op("row_normalize", {r(4, 3)}, [](Tape&, auto& v) { return row_l2_normalize(v[0]); });
    check_op("bce", {random_matrix(4, 1, rng, 0.1, 0.9)}, [](Tape&, auto& v) {
        std::vector<double> y{1, 0, 0, 1};
        return bce_sum(v[0], y);
    });
    auto idx = std::make_shared<const SegmentIndex>(
        SegmentIndex::from_lists(3, 4, {{0, 1, 3}, {}, {2}}));
    check_op("segment_attention", {r(3, 4), r(4, 4), r(4, 4)}, [idx](Tape&, auto& v) {
        return segment_attention(v[0], v[1], v[2], idx, {2, 0.7});
    });
    check_op("segment_mean", {r(4, 3)}, [idx](Tape&, auto& v) { return segment_mean(v[0], idx); });
}

TEST_CASE("bce rejects labels outside {0,1}") {
    Tape t;
    auto p = t.constant(Matrix{{0.5}});
    std::vector<double> y{2.0};
    CHECK_THROWS_AS(bce_sum(p, y), LabelError);
}

TEST_CASE("serial and OpenMP kernels agree") {
    std::mt19937_64 rng(8);
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            Matrix a = ta ? random_matrix(70, 90, rng) : random_matrix(90, 70, rng);
            Matrix b = tb ? random_matrix(60, 70, rng) : random_matrix(70, 60, rng);
            Matrix c1, c2;
            kernels::serial::gemm(a, ta, b, tb, c1, 0.0);
            kernels::omp::gemm(a, ta, b, tb, c2, 0.0);
            CHECK(max_abs_diff(c1, c2) < 1e-12);
        }
    }
    Matrix a = random_matrix(5, 4, rng), b = random_matrix(4, 3, rng), c;
    kernels::gemm(a, false, b, false, c, 0.0);
    CHECK(max_abs_diff(c, naive_matmul(a, b)) < 1e-12);

    std::uniform_int_distribution<std::size_t> pick(0, 299);
    std::vector<std::vector<std::size_t>> lists(400);
    for (auto& l : lists) {
        const std::size_t deg = pick(rng) % 12;
        for (std::size_t i = 0; i < deg; ++i) l.push_back(pick(rng));
    }
    auto idx = SegmentIndex::from_lists(400, 300, lists);
    Matrix q = random_matrix(400, 16, rng), k = random_matrix(300, 16, rng), v = random_matrix(300, 16, rng);
    Matrix o1, o2, a1, a2;
    kernels::serial::segment_attention_forward(q, k, v, idx, {4, 0.5}, o1, a1);
    kernels::omp::segment_attention_forward(q, k, v, idx, {4, 0.5}, o2, a2);
    CHECK(max_abs_diff(o1, o2) < 1e-12);
    CHECK(max_abs_diff(a1, a2) < 1e-12);
    Matrix g = random_matrix(400, 16, rng);
    Matrix dq1(400, 16), dk1(300, 16), dv1(300, 16), dq2(400, 16), dk2(300, 16), dv2(300, 16);
    kernels::serial::segment_attention_backward(q, k, v, idx, {4, 0.5}, a1, g, dq1, dk1, dv1);
    kernels::omp::segment_attention_backward(q, k, v, idx, {4, 0.5}, a1, g, dq2, dk2, dv2);
    CHECK(max_abs_diff(dq1, dq2) < 1e-12);
    CHECK(max_abs_diff(dk1, dk2) < 1e-12);
    CHECK(max_abs_diff(dv1, dv2) < 1e-12);

    Matrix m1, m2, x = random_matrix(300, 8, rng);
    kernels::serial::segment_mean_forward(x, idx, m1);
    kernels::omp::segment_mean_forward(x, idx, m2);
    CHECK(max_abs_diff(m1, m2) < 1e-12);
    Matrix gm = random_matrix(400, 8, rng), dx1(300, 8), dx2(300, 8);
    kernels::serial::segment_mean_backward(idx, gm, dx1);
    kernels::omp::segment_mean_backward(idx, gm, dx2);
    CHECK(max_abs_diff(dx1, dx2) < 1e-12);
}
