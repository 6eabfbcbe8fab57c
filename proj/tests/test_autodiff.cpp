#include <catch2/catch_amalgamated.hpp>

#include <swinlet/gradcheck.hpp>
#include <swinlet/gradcheck_suite.hpp>
#include <swinlet/graph.hpp>
#include <swinlet/mix.hpp>

using namespace swinlet;

TEST_CASE("matmul against identity-padded operand picks columns", "[autodiff]") {
    GraphD g;
    const NodeId a = g.value(TensorD({2, 3}, {1, 2, 3, 4, 5, 6}));
    const NodeId b = g.value(TensorD({3, 2}, {1, 0, 0, 1, 0, 0}));  // I padded with a zero row
    const NodeId c = g.matmul(a, b);
    const TensorD& out = g.val(c);
    REQUIRE(out.dims == Dims{2, 2});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);
    CHECK(out[2] == 4.0);
    CHECK(out[3] == 5.0);
}

TEST_CASE("softmax of a constant row is uniform", "[autodiff]") {
    GraphD g;
    const NodeId y = g.softmax(g.value(TensorD({1, 3}, {0, 0, 0})));
    for (int i = 0; i < 3; ++i) CHECK(g.val(y)[i] == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("layernorm standardizes its input row", "[autodiff]") {
    GraphD g;
    const NodeId x = g.value(TensorD({1, 3}, {1, 2, 3}));
    const NodeId gamma = g.value(TensorD::full({3}, 1.0));
    const NodeId beta = g.value(TensorD({3}));
    const TensorD& y = g.val(g.layernorm(x, gamma, beta, 1e-5));
    double mean = 0;
    for (int i = 0; i < 3; ++i) mean += y[i] / 3.0;
    double var = 0;
    for (int i = 0; i < 3; ++i) var += (y[i] - mean) * (y[i] - mean) / 3.0;
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(var == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("constant graph has zero parameter gradients", "[autodiff]") {
    GraphD g;
    g.param("x", TensorD({2}, {3, 4}));
    const NodeId c = g.sum_all(g.value(TensorD({2}, {5, 6})));
    g.backward(c);
    const TensorD& gx = g.grad("x");
    CHECK(gx[0] == 0.0);
    CHECK(gx[1] == 0.0);
}

TEST_CASE("scalar product gradient is the other factor", "[autodiff]") {
    GraphD g;
    const NodeId x = g.value(TensorD::scalar(2.5));
    const NodeId w = g.param("w", TensorD::scalar(-1.25));
    g.backward(g.sum_all(g.mul(x, w)));
    CHECK(g.grad("w")[0] == 2.5);
}

TEST_CASE("smoothed CE gradient equals softmax minus targets", "[autodiff]") {
    Rng rng(42);
    TensorD z({1, 7});
    for (auto& v : z.data) v = rng.uniform(-2, 2);
    const TensorD q = smooth_targets({3}, 0.1, 7).cast<double>();
    GraphD g;
    const NodeId logits = g.param("z", z);
    g.backward(smoothed_ce_loss(g, logits, q));
    GraphD g2;
    const TensorD& p = g2.val(g2.softmax(g2.value(z)));
    const TensorD& grad = g.grad("z");
    for (int k = 0; k < 7; ++k) CHECK(grad[k] == Catch::Approx(p[k] - q[k]).margin(1e-6));
}

TEST_CASE("branch reuse doubles the gradient exactly", "[autodiff]") {
    TensorD x({3}, {0.5, -1.5, 2.0});
    auto grad_of = [&](bool doubled) {
        GraphD g;
        const NodeId xn = g.param("x", x);
        const NodeId f = g.gelu(xn);
        const NodeId out = doubled ? g.sum_all(g.add(f, f)) : g.sum_all(f);
        g.backward(out);
        return g.grad("x");
    };
    const TensorD g1 = grad_of(false);
    const TensorD g2 = grad_of(true);
    for (int i = 0; i < 3; ++i) CHECK(g2[i] == 2.0 * g1[i]);
}

TEST_CASE("quadratic gradcheck is exact to roundoff", "[autodiff]") {
    const double err = grad_check(
        [](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            return g.sum_all(g.mul(p.at("x"), p.at("x")));
        },
        {{"x", TensorD({2}, {1, 2})}});
    CHECK(err < 1e-9);
}

TEST_CASE("gelu gradient at zero is one half", "[autodiff]") {
    GraphD g;
    const NodeId x = g.param("x", TensorD::scalar(0.0));
    g.backward(g.sum_all(g.gelu(x)));
    CHECK(g.grad("x")[0] == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("every primitive op passes gradcheck", "[autodiff][gradcheck]") {
    for (const auto& [name, err] : run_gradcheck_suite()) {
        INFO(name);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("forward is deterministic for fixed inputs", "[autodiff]") {
    Rng rng(7);
    TensorD a({4, 5});
    for (auto& v : a.data) v = rng.uniform(-1, 1);
    auto run = [&]() {
        GraphD g;
        const NodeId x = g.value(a);
        return g.val(g.softmax(g.gelu(g.mul_scalar(x, 1.7)))).data;
    };
    CHECK(run() == run());
}

TEST_CASE("matmul rejects mismatched inner dimensions", "[autodiff]") {
    GraphD g;
    const NodeId a = g.value(TensorD({2, 3}));
    const NodeId b = g.value(TensorD({2, 2}));
    CHECK_THROWS_AS(g.matmul(a, b), Error);
}

TEST_CASE("non-finite results name the originating op", "[autodiff]") {
    GraphD g;
    const NodeId x = g.value(TensorD({1}, {-1.0}));
    CHECK_THROWS_WITH(g.log(x), Catch::Matchers::ContainsSubstring("log"));
}

TEST_CASE("gradients are unavailable before backward", "[autodiff]") {
    GraphD g;
    g.param("x", TensorD::scalar(1.0));
    CHECK_THROWS_WITH(g.grad("x"), Catch::Matchers::ContainsSubstring("before backward"));
}

TEST_CASE("backward validates the output gradient shape", "[autodiff]") {
    GraphD g;
    const NodeId x = g.param("x", TensorD({2}, {1, 2}));
    const NodeId y = g.mul_scalar(x, 2.0);
    CHECK_THROWS_AS(g.backward(y, TensorD({3})), Error);
}

TEST_CASE("default backward requires a scalar output", "[autodiff]") {
    GraphD g;
    const NodeId x = g.param("x", TensorD({2}, {1, 2}));
    CHECK_THROWS_WITH(g.backward(g.mul_scalar(x, 2.0)), Catch::Matchers::ContainsSubstring("scalar"));
}

TEST_CASE("cosine_normalize rejects zero rows", "[autodiff]") {
    GraphD g;
    const NodeId x = g.value(TensorD({2, 3}, {1, 2, 3, 0, 0, 0}));
    CHECK_THROWS_WITH(g.cosine_normalize(x), Catch::Matchers::ContainsSubstring("zero-norm"));
}

TEST_CASE("backward accumulates across concat and slice routes", "[autodiff]") {
    // d/dx of sum(concat(x, 2x)) = 3 per element
    GraphD g;
    const NodeId x = g.param("x", TensorD({2, 2}, {1, 2, 3, 4}));
    const NodeId cat = g.concat({x, g.mul_scalar(x, 2.0)}, 1);
    g.backward(g.sum_all(cat));
    for (int i = 0; i < 4; ++i) CHECK(g.grad("x")[i] == 3.0);
}
