#include <catch2/catch_amalgamated.hpp>

#include <swinlet/analysis.hpp>
#include <swinlet/tsne.hpp>

using namespace swinlet;

namespace {

// Three well-separated Gaussian clusters in D dims.
struct GaussianFixture {
    std::vector<double> x;
    std::vector<int> cluster;
    i64 n, d;
};

GaussianFixture three_clusters(i64 per_cluster, i64 d, u64 seed) {
    GaussianFixture f;
    f.n = 3 * per_cluster;
    f.d = d;
    Rng rng(seed);
    const double centers[3] = {0.0, 15.0, 30.0};
    for (int c = 0; c < 3; ++c)
        for (i64 i = 0; i < per_cluster; ++i) {
            f.cluster.push_back(c);
            for (i64 k = 0; k < d; ++k) f.x.push_back(centers[c] * (k % 2 ? 1.0 : -0.5) + rng.normal());
        }
    return f;
}

// Perceptron oracle: returns true when the two point sets are linearly
// separable within the update budget.
bool perceptron_separable(const std::vector<double>& y, const std::vector<i64>& a, const std::vector<i64>& b) {
    double w0 = 0, w1 = 0, bias = 0;
    for (int epoch = 0; epoch < 2000; ++epoch) {
        bool clean = true;
        auto update = [&](i64 idx, double target) {
            const double z = w0 * y[size_t(idx * 2)] + w1 * y[size_t(idx * 2 + 1)] + bias;
            if (target * z <= 0) {
                w0 += target * y[size_t(idx * 2)];
                w1 += target * y[size_t(idx * 2 + 1)];
                bias += target;
                clean = false;
            }
        };
        for (i64 i : a) update(i, 1.0);
        for (i64 i : b) update(i, -1.0);
        if (clean) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("constant image fills one histogram bin per channel", "[analysis]") {
    Image img(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            img.at(y, x, 0) = 0.11f;
            img.at(y, x, 1) = 0.52f;
            img.at(y, x, 2) = 0.93f;
        }
    const HistogramEncoder enc;
    const std::vector<double> f = enc.encode(img);
    REQUIRE(i64(f.size()) == enc.dim());
    int full_bins = 0;
    for (int c = 0; c < 3; ++c)
        for (int b = 0; b < HistogramEncoder::kBins; ++b) {
            const double v = f[size_t(c * HistogramEncoder::kBins + b)];
            if (v == 1.0) ++full_bins;
            CHECK((v == 0.0 || v == 1.0));
        }
    CHECK(full_bins == 3);
}

TEST_CASE("encoder output is deterministic with the declared dimension", "[analysis]") {
    Rng rng(1);
    Image img(16, 16);
    for (auto& v : img.px) v = float(rng.uniform());
    const HistogramEncoder enc;
    CHECK(enc.encode(img) == enc.encode(img));
    CHECK(enc.dim() == 56);
}

TEST_CASE("tsne rejects undersized or oversized inputs", "[analysis][tsne]") {
    TsneConfig cfg;
    std::vector<double> x(9 * 2, 0.0);
    CHECK_THROWS_AS(tsne(x, 9, 2, cfg), Error);
}

TEST_CASE("tsne separates three gaussian clusters", "[analysis][tsne]") {
    const GaussianFixture fix = three_clusters(50, 10, 33);
    TsneConfig cfg;
    cfg.seed = 99;
    const TsneResult res = tsne(fix.x, fix.n, fix.d, cfg);

    // entropy of every conditional row matches log(perplexity)
    const double target = std::log(std::min(cfg.perplexity, double(fix.n - 1) / 3.0));
    for (double h : res.row_entropy) CHECK(std::fabs(h - target) < 1e-5);

    // KL dropped by at least half
    CHECK(res.kl_final < 0.5 * res.kl_initial);
    for (const auto& [iter, kl] : res.kl_log) CHECK(kl >= 0.0);

    // output is centered
    double m0 = 0, m1 = 0;
    for (i64 i = 0; i < fix.n; ++i) {
        m0 += res.coords[size_t(i * 2)];
        m1 += res.coords[size_t(i * 2 + 1)];
    }
    CHECK(std::fabs(m0 / double(fix.n)) < 1e-8);
    CHECK(std::fabs(m1 / double(fix.n)) < 1e-8);

    // pairwise linear separability of the embedded clusters
    std::vector<std::vector<i64>> groups(3);
    for (i64 i = 0; i < fix.n; ++i) groups[size_t(fix.cluster[size_t(i)])].push_back(i);
    CHECK(perceptron_separable(res.coords, groups[0], groups[1]));
    CHECK(perceptron_separable(res.coords, groups[0], groups[2]));
    CHECK(perceptron_separable(res.coords, groups[1], groups[2]));
}

TEST_CASE("tsne is deterministic for a fixed seed", "[analysis][tsne]") {
    const GaussianFixture fix = three_clusters(5, 4, 44);
    TsneConfig cfg;
    cfg.iters = 260;
    cfg.seed = 7;
    const TsneResult a = tsne(fix.x, fix.n, fix.d, cfg);
    const TsneResult b = tsne(fix.x, fix.n, fix.d, cfg);
    CHECK(a.coords == b.coords);
    cfg.seed = 8;
    const TsneResult c = tsne(fix.x, fix.n, fix.d, cfg);
    CHECK(a.coords != c.coords);
}

TEST_CASE("duplicate points are jittered rather than fatal", "[analysis][tsne]") {
    GaussianFixture fix = three_clusters(5, 4, 55);
    for (i64 k = 0; k < fix.d; ++k) fix.x[size_t(fix.d + k)] = fix.x[size_t(k)];  // duplicate row 0 into row 1
    TsneConfig cfg;
    cfg.iters = 250;
    cfg.seed = 7;
    const TsneResult res = tsne(fix.x, fix.n, fix.d, cfg);
    CHECK(res.jittered);
    for (double v : res.coords) CHECK(std::isfinite(v));
}

TEST_CASE("symmetrized affinities form a distribution", "[analysis][tsne]") {
    // exercised through row entropies already; here via a tiny direct run
    const GaussianFixture fix = three_clusters(4, 3, 66);
    TsneConfig cfg;
    cfg.iters = 250;
    cfg.perplexity = 3;
    cfg.seed = 1;
    const TsneResult res = tsne(fix.x, fix.n, fix.d, cfg);
    CHECK(res.kl_initial >= 0.0);
    CHECK(std::isfinite(res.kl_final));
}

TEST_CASE("overlap score vanishes for disjoint clusters", "[analysis][overlap]") {
    EmbeddingSet emb;
    emb.n = 40;
    emb.d = 2;
    std::vector<int> tags;
    Rng rng(5);
    for (i64 i = 0; i < emb.n; ++i) {
        const int t = i < 20 ? 0 : 1;
        tags.push_back(t);
        emb.x.push_back(t * 100.0 + rng.uniform());
        emb.x.push_back(t * 100.0 + rng.uniform());
    }
    CHECK(overlap_score(emb, tags) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("overlap score is high for identically distributed halves", "[analysis][overlap]") {
    EmbeddingSet emb;
    emb.n = 120;
    emb.d = 4;
    std::vector<int> tags;
    Rng rng(6);
    for (i64 i = 0; i < emb.n; ++i) {
        tags.push_back(i % 2);
        for (i64 k = 0; k < emb.d; ++k) emb.x.push_back(rng.normal());
    }
    CHECK(overlap_score(emb, tags) >= 0.6);
}

TEST_CASE("knn ties break toward the smaller index", "[analysis][overlap]") {
    // four coincident points: neighbors are chosen by index, so the vote
    // for point 0 comes from points 1,2,3 (k capped at n-1)
    EmbeddingSet emb;
    emb.n = 4;
    emb.d = 1;
    emb.x = {0, 0, 0, 0};
    const std::vector<int> tags = {0, 1, 0, 1};
    // deterministic: simply must not throw and must be reproducible
    CHECK(overlap_score(emb, tags, 3) == overlap_score(emb, tags, 3));
}

TEST_CASE("class histogram counts per subset and class", "[analysis]") {
    Manifest m;
    auto add = [&](char subset, int cls) {
        ManifestRow r;
        r.sample_id = std::string(1, subset) + std::to_string(m.rows.size());
        r.subset = subset;
        r.class_id = cls;
        r.split = "train";
        m.rows.push_back(r);
    };
    for (int i = 0; i < 5; ++i) add('A', 0);
    for (int i = 0; i < 3; ++i) add('B', 6);
    const auto counts = class_histogram(m);
    CHECK(counts[0][0] == 5);
    CHECK(counts[1][6] == 3);
    i64 total = 0;
    for (const auto& row : counts)
        for (i64 v : row) total += v;
    CHECK(total == i64(m.rows.size()));

    const auto empty_counts = class_histogram(Manifest{});
    for (const auto& row : empty_counts)
        for (i64 v : row) CHECK(v == 0);
}
