#include <catch2/catch_amalgamated.hpp>

#include <swinlet/manifest.hpp>
#include <swinlet/optim.hpp>

using namespace swinlet;

namespace {

OptimConfig paper_profile() {
    OptimConfig cfg;
    cfg.peak_lr = 1e-5;
    cfg.warmup_epochs = 10;
    cfg.total_epochs = 50;
    return cfg;
}

// Textbook Adam, written independently of the AdamW implementation.
struct ReferenceAdam {
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    std::vector<double> m, v;
    int t = 0;
    void step(std::vector<double>& p, const std::vector<double>& g, double lr) {
        if (m.empty()) {
            m.assign(p.size(), 0.0);
            v.assign(p.size(), 0.0);
        }
        ++t;
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            const double mhat = m[i] / (1 - std::pow(b1, t));
            const double vhat = v[i] / (1 - std::pow(b2, t));
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace

TEST_CASE("warmup reaches the peak exactly at the boundary", "[optim]") {
    const OptimConfig cfg = paper_profile();
    CHECK(lr_at(10.0, cfg) == 1e-5);
    CHECK(lr_at(0.0, cfg) == 0.0);
}

TEST_CASE("cosine midpoint halves the peak", "[optim]") {
    const OptimConfig cfg = paper_profile();
    CHECK(std::fabs(lr_at(30.0, cfg) - 5e-6) < 1e-15);
}

TEST_CASE("schedule is continuous at warmup and non-increasing after", "[optim][property]") {
    const OptimConfig cfg = paper_profile();
    CHECK(std::fabs(lr_at(10.0 - 1e-9, cfg) - lr_at(10.0, cfg)) < 1e-12);
    double prev = lr_at(10.0, cfg);
    for (double t = 10.0; t <= 50.0; t += 0.25) {
        const double cur = lr_at(t, cfg);
        CHECK(cur <= prev + 1e-18);
        prev = cur;
    }
    CHECK_THROWS_AS(lr_at(-0.1, cfg), Error);
    CHECK_THROWS_AS(lr_at(50.1, cfg), Error);
}

TEST_CASE("adamw leaves params unchanged for zero gradients without decay", "[optim]") {
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    std::map<std::string, TensorD> params{{"w.weight", TensorD({3}, {1, -2, 3})}};
    const std::map<std::string, TensorD> grads{{"w.weight", TensorD({3})}};
    opt.step(params, grads, 0.1);
    CHECK(params.at("w.weight").data == std::vector<double>{1, -2, 3});
}

TEST_CASE("adamw first step matches the closed form", "[optim]") {
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    std::map<std::string, TensorD> params{{"w.weight", TensorD({1}, {0.5})}};
    const std::map<std::string, TensorD> grads{{"w.weight", TensorD({1}, {1.0})}};
    const double lr = 0.01;
    opt.step(params, grads, lr);
    // mhat = 1, vhat = 1 after bias correction
    CHECK(params.at("w.weight")[0] == Catch::Approx(0.5 - lr * 1.0 / (1.0 + cfg.eps)).margin(1e-15));
}

TEST_CASE("decoupled decay is a pure multiplicative shrink", "[optim]") {
    OptimConfig cfg;
    cfg.weight_decay = 0.05;
    AdamW<double> opt(cfg);
    std::map<std::string, TensorD> params{{"w.weight", TensorD({2}, {2.0, -4.0})}};
    const std::map<std::string, TensorD> grads{{"w.weight", TensorD({2})}};
    const double lr = 0.1;
    opt.step(params, grads, lr);
    CHECK(params.at("w.weight")[0] == Catch::Approx(2.0 * (1 - lr * 0.05)).margin(1e-15));
    CHECK(params.at("w.weight")[1] == Catch::Approx(-4.0 * (1 - lr * 0.05)).margin(1e-15));
}

TEST_CASE("decay skips biases, norm gains, and temperatures", "[optim]") {
    CHECK(decay_exempt("head.bias"));
    CHECK(decay_exempt("norm.gamma"));
    CHECK(decay_exempt("norm.beta"));
    CHECK(decay_exempt("stages.0.blocks.0.attn.tau"));
    CHECK_FALSE(decay_exempt("head.weight"));
    CHECK_FALSE(decay_exempt("stages.0.blocks.0.attn.rpb"));
}

TEST_CASE("adamw with zero decay equals an independent adam", "[optim][oracle]") {
    OptimConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW<double> opt(cfg);
    ReferenceAdam ref;
    Rng rng(77);
    std::vector<double> p_ref = {0.3, -1.2, 2.2, 0.05};
    std::map<std::string, TensorD> params{{"w.weight", TensorD({4}, std::vector<double>(p_ref))}};
    for (int step = 0; step < 10; ++step) {
        std::vector<double> g(4);
        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
        const double lr = rng.uniform(1e-4, 1e-2);
        opt.step(params, {{"w.weight", TensorD({4}, std::vector<double>(g))}}, lr);
        ref.step(p_ref, g, lr);
        for (int i = 0; i < 4; ++i) CHECK(std::fabs(params.at("w.weight")[i] - p_ref[size_t(i)]) < 1e-12);
    }
}

// ---- kfold -------------------------------------------------------------

namespace {
Manifest synthetic_manifest(int per_class_train, int per_class_test = 0) {
    Manifest m;
    for (char subset : {'A', 'B'})
        for (int c = 0; c < kNumClasses; ++c) {
            for (int i = 0; i < per_class_train; ++i) {
                ManifestRow r;
                r.sample_id = std::string(1, subset) + "-tr-" + std::to_string(c) + "-" + std::to_string(i);
                r.relpath = "x.ppm";
                r.subset = subset;
                r.class_id = c;
                r.split = "train";
                m.rows.push_back(r);
            }
            for (int i = 0; i < per_class_test; ++i) {
                ManifestRow r;
                r.sample_id = std::string(1, subset) + "-te-" + std::to_string(c) + "-" + std::to_string(i);
                r.relpath = "x.ppm";
                r.subset = subset;
                r.class_id = c;
                r.split = "test";
                m.rows.push_back(r);
            }
        }
    return m;
}
}  // namespace

TEST_CASE("kfold divides evenly divisible cells exactly", "[optim][kfold]") {
    const Manifest m = synthetic_manifest(10);  // 7 classes x 2 subsets x 10
    const FoldSplit split = kfold_split(m, 5, 123);
    std::map<std::tuple<char, int, int>, int> counts;
    for (const auto& r : m.rows)
        if (r.split == "train") counts[{r.subset, r.class_id, split.assignment.at(r.sample_id)}]++;
    for (const auto& [key, n] : counts) CHECK(n == 2);
}

TEST_CASE("folds partition the train split", "[optim][kfold]") {
    const Manifest m = synthetic_manifest(7, 3);
    const FoldSplit split = kfold_split(m, 5, 9);
    std::set<std::string> train_ids;
    for (const auto& r : m.rows)
        if (r.split == "train") train_ids.insert(r.sample_id);
    std::set<std::string> assigned;
    for (const auto& [id, f] : split.assignment) {
        CHECK(f >= 0);
        CHECK(f < 5);
        assigned.insert(id);
    }
    CHECK(assigned == train_ids);  // covers exactly, and a map cannot overlap
    // per-class counts within each subset differ by at most one
    std::map<std::tuple<char, int, int>, int> counts;
    for (const auto& r : m.rows)
        if (r.split == "train") counts[{r.subset, r.class_id, split.assignment.at(r.sample_id)}]++;
    for (char subset : {'A', 'B'})
        for (int c = 0; c < kNumClasses; ++c) {
            int lo = 1 << 20, hi = 0;
            for (int f = 0; f < 5; ++f) {
                auto it = counts.find({subset, c, f});
                const int n = it == counts.end() ? 0 : it->second;
                lo = std::min(lo, n);
                hi = std::max(hi, n);
            }
            CHECK(hi - lo <= 1);
        }
}

TEST_CASE("kfold is deterministic and order-insensitive", "[optim][kfold]") {
    Manifest m = synthetic_manifest(6);
    const FoldSplit a = kfold_split(m, 3, 55);
    std::reverse(m.rows.begin(), m.rows.end());
    const FoldSplit b = kfold_split(m, 3, 55);
    CHECK(a.assignment == b.assignment);
    const FoldSplit c = kfold_split(m, 3, 56);
    CHECK(a.assignment != c.assignment);
}

TEST_CASE("kfold rejects cells smaller than k", "[optim][kfold]") {
    const Manifest m = synthetic_manifest(4);
    CHECK_THROWS_WITH(kfold_split(m, 5, 1), Catch::Matchers::ContainsSubstring("fewer than k"));
}

TEST_CASE("with_folds writes assignments back and clears test folds", "[optim][kfold]") {
    Manifest m = synthetic_manifest(5, 2);
    for (auto& r : m.rows) r.fold = 99;  // garbage in
    const Manifest folded = with_folds(m, kfold_split(m, 5, 2));
    for (const auto& r : folded.rows) {
        if (r.split == "train") {
            CHECK(r.fold >= 0);
            CHECK(r.fold < 5);
        } else {
            CHECK(r.fold == -1);
        }
    }
}
