#include <catch2/catch_amalgamated.hpp>

#include <swinlet/gradcheck.hpp>
#include <swinlet/mix.hpp>

using namespace swinlet;

namespace {

std::vector<Image> random_batch(int n, int side, u64 seed) {
    Rng rng(seed);
    std::vector<Image> out;
    for (int i = 0; i < n; ++i) {
        Image img(side, side);
        for (auto& v : img.px) v = float(rng.uniform());
        out.push_back(std::move(img));
    }
    return out;
}

}  // namespace

TEST_CASE("smooth_targets arithmetic", "[mix]") {
    const TensorF hard = smooth_targets({2}, 0.0, 7);
    for (int k = 0; k < 7; ++k) CHECK(hard[k] == (k == 2 ? 1.0f : 0.0f));

    const TensorF q = smooth_targets({2}, 0.1, 7);
    CHECK(q[2] == Catch::Approx(0.9 + 0.1 / 7).margin(1e-7));
    CHECK(q[0] == Catch::Approx(0.1 / 7).margin(1e-7));

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const TensorF t = smooth_targets({int(rng.below(7))}, rng.uniform(0.0, 0.99), 7);
        double sum = 0;
        for (int k = 0; k < 7; ++k) sum += t[k];
        CHECK(sum == Catch::Approx(1.0).margin(1e-6));
    }
}

TEST_CASE("mixup with lambda one is the identity", "[mix]") {
    const auto batch = random_batch(4, 8, 1);
    const TensorF targets = smooth_targets({0, 1, 2, 3}, 0.0, 7);
    const MixOutcome out = mixup_with_lambda(batch, targets, 1.0);
    for (int b = 0; b < 4; ++b) CHECK(out.batch[size_t(b)].px == batch[size_t(b)].px);
    CHECK(out.targets.data == targets.data);
}

TEST_CASE("mixup at one half mixes one-hot targets evenly", "[mix]") {
    const auto batch = random_batch(2, 8, 2);
    const TensorF targets = smooth_targets({0, 3}, 0.0, 7);
    const MixOutcome out = mixup_with_lambda(batch, targets, 0.5);
    CHECK(out.targets[0] == Catch::Approx(0.5));
    CHECK(out.targets[3] == Catch::Approx(0.5));
    CHECK(out.targets[1] == 0.0f);
    for (size_t i = 0; i < batch[0].px.size(); ++i)
        CHECK(out.batch[0].px[i] == Catch::Approx(0.5 * batch[0].px[i] + 0.5 * batch[1].px[i]).margin(1e-6));
}

TEST_CASE("mixup on a single sample degenerates with a warning flag", "[mix]") {
    const auto batch = random_batch(1, 8, 3);
    const TensorF targets = smooth_targets({5}, 0.1, 7);
    Rng rng(4);
    const MixOutcome out = mixup(batch, targets, 1.0, rng);
    CHECK(out.degenerate);
    CHECK(out.lambda == 1.0);
    CHECK(out.batch[0].px == batch[0].px);
}

TEST_CASE("beta(1,1) samples look uniform", "[mix][statistics]") {
    Rng rng(5);
    const int n = 100000;
    std::vector<double> xs(n);
    for (auto& x : xs) x = rng.beta(1.0, 1.0);
    std::sort(xs.begin(), xs.end());
    double d = 0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, std::fabs(double(i + 1) / n - xs[size_t(i)]));
        d = std::max(d, std::fabs(xs[size_t(i)] - double(i) / n));
    }
    // KS critical value at significance 0.01
    CHECK(d < 1.62762 / std::sqrt(double(n)));
}

TEST_CASE("cutmix with zero-area rectangle is the identity", "[mix]") {
    const auto batch = random_batch(2, 8, 6);
    const TensorF targets = smooth_targets({1, 2}, 0.0, 7);
    const MixOutcome out = cutmix_with_rect(batch, targets, 1.0, 0, 0, 0, 0);
    CHECK(out.lambda == 1.0);
    CHECK(out.batch[0].px == batch[0].px);
    CHECK(out.targets.data == targets.data);
}

TEST_CASE("cutmix with a full-image rectangle swaps the batch", "[mix]") {
    const auto batch = random_batch(2, 8, 7);
    const TensorF targets = smooth_targets({1, 2}, 0.0, 7);
    const MixOutcome out = cutmix_with_rect(batch, targets, 0.0, 0, 8, 0, 8);
    CHECK(out.lambda == 0.0);
    CHECK(out.batch[0].px == batch[1].px);
    CHECK(out.batch[1].px == batch[0].px);
    CHECK(out.targets[7 + 1] == 1.0f);  // row 1 took row 0's class
}

TEST_CASE("cutmix target weight equals the surviving pixel fraction exactly", "[mix][property]") {
    Rng seeds(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto batch = random_batch(2, 16, seeds.next_u64());
        const TensorF targets = smooth_targets({0, 6}, 0.0, 7);
        Rng rng(seeds.next_u64());
        const MixOutcome out = cutmix(batch, targets, 0.8, rng);
        i64 changed = 0;
        for (size_t i = 0; i < batch[0].px.size(); i += 3)
            if (out.batch[0].px[i] != batch[0].px[i] || out.batch[0].px[i + 1] != batch[0].px[i + 1] ||
                out.batch[0].px[i + 2] != batch[0].px[i + 2])
                ++changed;
        // lambda_adj is computed from the integer rectangle, so equality is
        // exact as long as pasted pixels differ (a.s. for random images)
        CHECK(out.lambda == 1.0 - double(changed) / double(16 * 16));
        for (int b = 0; b < 2; ++b) {
            double sum = 0;
            for (int k = 0; k < 7; ++k) sum += out.targets[b * 7 + k];
            CHECK(sum == Catch::Approx(1.0).margin(1e-6));
        }
    }
}

TEST_CASE("mixed images stay in unit range", "[mix][property]") {
    Rng seeds(9);
    MixConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        auto batch = random_batch(4, 12, seeds.next_u64());
        const TensorF targets = smooth_targets({0, 1, 2, 3}, 0.1, 7);
        Rng rng(seeds.next_u64());
        const MixOutcome out = apply_batch_mix(batch, targets, cfg, rng);
        for (const Image& im : out.batch) CHECK(im.in_unit_range());
    }
}

TEST_CASE("per-batch mode draw is seeded-deterministic", "[mix]") {
    MixConfig cfg;
    auto batch = random_batch(4, 8, 10);
    const TensorF targets = smooth_targets({0, 1, 2, 3}, 0.1, 7);
    std::vector<MixMode> a, b;
    for (int i = 0; i < 20; ++i) {
        Rng r1(StreamKey(42).with("mix").with(i).value());
        Rng r2(StreamKey(42).with("mix").with(i).value());
        a.push_back(apply_batch_mix(batch, targets, cfg, r1).mode);
        b.push_back(apply_batch_mix(batch, targets, cfg, r2).mode);
    }
    CHECK(a == b);
    CHECK(std::count(a.begin(), a.end(), MixMode::CutMix) > 0);
    CHECK(std::count(a.begin(), a.end(), MixMode::MixUp) > 0);
}

TEST_CASE("smoothing and convex mixing commute", "[mix][property]") {
    // (1-eps)*mix(onehot) + eps/K == mix((1-eps)*onehot + eps/K)
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const double eps = rng.uniform(0.0, 0.5);
        const double lambda = rng.uniform(0.0, 1.0);
        const auto batch = random_batch(4, 4, rng.next_u64());
        const std::vector<int> cls = {0, 2, 4, 6};
        const TensorF smooth_first = mixup_with_lambda(batch, smooth_targets(cls, eps, 7), lambda).targets;
        TensorF mixed_hard = mixup_with_lambda(batch, smooth_targets(cls, 0.0, 7), lambda).targets;
        for (auto& v : mixed_hard.data) v = float((1.0 - eps) * v + eps / 7.0);
        for (i64 i = 0; i < smooth_first.numel(); ++i)
            CHECK(smooth_first[i] == Catch::Approx(mixed_hard[i]).margin(1e-6));
    }
}

TEST_CASE("smoothed CE on uniform logits is log K", "[mix]") {
    GraphD g;
    const NodeId logits = g.value(TensorD({1, 7}));
    const TensorD q = smooth_targets({3}, 0.1, 7).cast<double>();
    const NodeId loss = smoothed_ce_loss(g, logits, q);
    CHECK(g.val(loss)[0] == Catch::Approx(std::log(7.0)).margin(1e-12));
}

TEST_CASE("smoothed CE at the optimum equals the target entropy", "[mix]") {
    // when softmax(z) == q the loss is H(q)
    Rng rng(12);
    TensorD q({1, 7});
    double sum = 0;
    for (auto& v : q.data) sum += (v = rng.uniform(0.1, 1.0));
    for (auto& v : q.data) v /= sum;
    TensorD z({1, 7});
    for (int k = 0; k < 7; ++k) z[k] = std::log(q[k]);
    GraphD g;
    const NodeId loss = smoothed_ce_loss(g, g.value(z), q);
    double entropy = 0;
    for (int k = 0; k < 7; ++k) entropy -= q[k] * std::log(q[k]);
    CHECK(g.val(loss)[0] == Catch::Approx(entropy).margin(1e-10));
}

TEST_CASE("smoothed CE is bounded below by the target entropy", "[mix][property]") {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        TensorD q({1, 7});
        double sum = 0;
        for (auto& v : q.data) sum += (v = rng.uniform(0.01, 1.0));
        for (auto& v : q.data) v /= sum;
        TensorD z({1, 7});
        for (auto& v : z.data) v = rng.uniform(-3.0, 3.0);
        GraphD g;
        const NodeId loss = smoothed_ce_loss(g, g.value(z), q);
        double entropy = 0;
        for (int k = 0; k < 7; ++k) entropy -= q[k] * std::log(q[k]);
        CHECK(g.val(loss)[0] >= entropy - 1e-8);
    }
}

TEST_CASE("smoothed CE gradient passes finite differences", "[mix][gradcheck]") {
    const TensorD z({1, 7}, {1.2, -0.3, 0.8, 2.1, -1.0, 0.4, -0.7});
    const TensorD q = smooth_targets({3}, 0.1, 7).cast<double>();
    {  // the point is well conditioned: no gradient component is tiny
        GraphD g;
        const NodeId logits = g.param("z", z);
        g.backward(smoothed_ce_loss(g, logits, q));
        for (int k = 0; k < 7; ++k) REQUIRE(std::fabs(g.grad("z")[k]) > 1e-3);
    }
    const double err = grad_check(
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            return smoothed_ce_loss(g, p.at("z"), q);
        },
        {{"z", z}}, 1e-5);
    CHECK(err < 1e-6);
}
