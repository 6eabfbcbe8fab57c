// Data-distribution analysis: pluggable feature encoders, class histogram,
// and a k-NN overlap score quantifying how separable two tag values are.
#pragma once

#include <algorithm>
#include <array>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "augment.hpp"
#include "dataset.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "model.hpp"
#include "tsne.hpp"

namespace swinlet {

struct EmbeddingSet {
    i64 n = 0, d = 0;
    std::vector<double> x;  // n x d
    std::vector<std::string> ids;
    std::vector<char> subset;
    std::vector<std::string> split;
    std::vector<int> cls;
};

struct FeatureEncoder {
    virtual ~FeatureEncoder() = default;
    virtual int dim() const = 0;
    virtual std::vector<double> encode(const Image& img) const = 0;
};

// 16-bin per-channel histograms plus 8 radial power-spectrum bands (D=56);
// needs no trained model.
class HistogramEncoder : public FeatureEncoder {
public:
    static constexpr int kBins = 16;
    static constexpr int kBands = 8;
    static constexpr int kFftSide = 64;

    int dim() const override { return 3 * kBins + kBands; }

    std::vector<double> encode(const Image& img) const override {
        std::vector<double> out(size_t(dim()), 0.0);
        const i64 npx = i64(img.h) * i64(img.w);
        for (i64 i = 0; i < npx; ++i)
            for (int c = 0; c < 3; ++c) {
                const float v = img.px[size_t(i * 3 + c)];
                const int bin = std::min(kBins - 1, int(v * kBins));
                out[size_t(c * kBins + bin)] += 1.0 / double(npx);
            }
        // radial spectrum of the luma channel at a fixed side
        Image small = (img.h == kFftSide && img.w == kFftSide) ? img : resize_bilinear(img, kFftSide, kFftSide);
        std::vector<std::complex<double>> f(size_t(kFftSide) * size_t(kFftSide));
        for (int y = 0; y < kFftSide; ++y)
            for (int x = 0; x < kFftSide; ++x)
                f[size_t(y) * kFftSide + size_t(x)] =
                    double(luma(small.at(y, x, 0), small.at(y, x, 1), small.at(y, x, 2)));
        fft2d(f, kFftSide);
        std::array<double, kBands> power{};
        std::array<i64, kBands> count{};
        for (int y = 0; y < kFftSide; ++y) {
            for (int x = 0; x < kFftSide; ++x) {
                if (x == 0 && y == 0) continue;  // skip DC
                const double fy = y <= kFftSide / 2 ? y : y - kFftSide;
                const double fx = x <= kFftSide / 2 ? x : x - kFftSide;
                const double r = std::sqrt(fy * fy + fx * fx) / double(kFftSide);  // [0, ~0.707]
                const int band = std::min(kBands - 1, int(r / 0.70710678118654752440 * kBands));
                power[size_t(band)] += std::norm(f[size_t(y) * kFftSide + size_t(x)]);
                count[size_t(band)]++;
            }
        }
        for (int b = 0; b < kBands; ++b)
            out[size_t(3 * kBins + b)] = std::log1p(power[size_t(b)] / double(std::max<i64>(1, count[size_t(b)])));
        return out;
    }

private:
    // Iterative radix-2 over rows then columns.
    static void fft1d(std::complex<double>* a, int n, int stride) {
        // bit-reversal permutation
        for (int i = 1, j = 0; i < n; ++i) {
            int bit = n >> 1;
            for (; j & bit; bit >>= 1) j ^= bit;
            j ^= bit;
            if (i < j) std::swap(a[i * stride], a[j * stride]);
        }
        for (int len = 2; len <= n; len <<= 1) {
            const double ang = -2.0 * M_PI / len;
            const std::complex<double> wl(std::cos(ang), std::sin(ang));
            for (int i = 0; i < n; i += len) {
                std::complex<double> w(1.0);
                for (int k = 0; k < len / 2; ++k) {
                    const std::complex<double> u = a[(i + k) * stride];
                    const std::complex<double> v = a[(i + k + len / 2) * stride] * w;
                    a[(i + k) * stride] = u + v;
                    a[(i + k + len / 2) * stride] = u - v;
                    w *= wl;
                }
            }
        }
    }
    static void fft2d(std::vector<std::complex<double>>& f, int side) {
        for (int y = 0; y < side; ++y) fft1d(f.data() + size_t(y) * size_t(side), side, 1);
        for (int x = 0; x < side; ++x) fft1d(f.data() + x, side, side);
    }
};

// Pooled penultimate features of a trained classifier.
class SwinletEncoder : public FeatureEncoder {
public:
    explicit SwinletEncoder(SwinletF model, AugConfig aug = {}) : model_(std::move(model)), aug_(std::move(aug)) {}

    int dim() const override { return model_.cfg.final_dim(); }

    std::vector<double> encode(const Image& img) const override {
        Image im = img;
        if (im.h != model_.cfg.input_size || im.w != model_.cfg.input_size)
            im = resize_bilinear(im, model_.cfg.input_size, model_.cfg.input_size);
        im = normalize(im, aug_.normalize_mean, aug_.normalize_std);
        GraphF g;
        const auto h = model_.forward(g, batch_tensor({im}));
        const TensorF& feat = g.val(h.features);
        return std::vector<double>(feat.data.begin(), feat.data.end());
    }

private:
    SwinletF model_;
    AugConfig aug_;
};

inline EmbeddingSet extract_features(const FeatureEncoder& encoder, const Manifest& manifest, ImageStore& store) {
    std::vector<const ManifestRow*> rows;
    for (const auto& r : manifest.rows) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(),
              [](const ManifestRow* a, const ManifestRow* b) { return a->sample_id < b->sample_id; });
    EmbeddingSet out;
    out.n = i64(rows.size());
    out.d = encoder.dim();
    out.x.reserve(size_t(out.n) * size_t(out.d));
    for (const ManifestRow* r : rows) {
        const std::vector<double> f = encoder.encode(store.get(*r));
        check(i64(f.size()) == out.d, "extract_features: encoder returned wrong dimension");
        out.x.insert(out.x.end(), f.begin(), f.end());
        out.ids.push_back(r->sample_id);
        out.subset.push_back(r->subset);
        out.split.push_back(r->split);
        out.cls.push_back(r->class_id);
    }
    return out;
}

// ---- class histogram -------------------------------------------------------

// counts[subset 0=A,1=B][class]
inline std::array<std::array<i64, kNumClasses>, 2> class_histogram(const Manifest& manifest) {
    std::array<std::array<i64, kNumClasses>, 2> counts{};
    for (const auto& r : manifest.rows) counts[r.subset == 'B' ? 1 : 0][size_t(r.class_id)]++;
    return counts;
}

inline void save_class_histogram(const std::array<std::array<i64, kNumClasses>, 2>& counts,
                                 const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "save_class_histogram: cannot open " + path.string());
    f << "subset";
    for (const auto& name : class_names()) f << ',' << name;
    f << "\n";
    const char* tags[2] = {"A", "B"};
    for (int s = 0; s < 2; ++s) {
        f << tags[s];
        for (int c = 0; c < kNumClasses; ++c) f << ',' << counts[size_t(s)][size_t(c)];
        f << "\n";
    }
}

// ---- overlap score -----------------------------------------------------------

// 1 when a 5-NN classifier cannot separate the two tag values at all
// (balanced accuracy 0.5), 0 when it separates them perfectly:
// score = 2 * (1 - max(bal_acc, 0.5)).
inline double overlap_score(const EmbeddingSet& emb, const std::vector<int>& binary_tags, int k = 5) {
    check(i64(binary_tags.size()) == emb.n, "overlap_score: tag count mismatch");
    bool has0 = false, has1 = false;
    for (int t : binary_tags) {
        check(t == 0 || t == 1, "overlap_score: tags must be 0/1");
        has0 = has0 || t == 0;
        has1 = has1 || t == 1;
    }
    check(has0 && has1, "overlap_score: both tag values must be present");
    const i64 n = emb.n, d = emb.d;
    i64 correct[2] = {0, 0}, total[2] = {0, 0};
    std::vector<std::pair<double, i64>> cand(n);
    for (i64 i = 0; i < n; ++i) {
        for (i64 j = 0; j < n; ++j) {
            double s = 0;
            for (i64 c = 0; c < d; ++c) {
                const double diff = emb.x[size_t(i * d + c)] - emb.x[size_t(j * d + c)];
                s += diff * diff;
            }
            cand[size_t(j)] = {s, j};
        }
        cand[size_t(i)] = {std::numeric_limits<double>::infinity(), i};  // exclude self
        // distance ties break toward the smaller index
        std::partial_sort(cand.begin(), cand.begin() + std::min<i64>(k, n - 1), cand.end());
        int votes = 0;
        const i64 kk = std::min<i64>(k, n - 1);
        for (i64 j = 0; j < kk; ++j) votes += binary_tags[size_t(cand[size_t(j)].second)];
        const int predicted = votes * 2 > kk ? 1 : 0;  // vote ties go to tag 0
        const int truth = binary_tags[size_t(i)];
        total[truth]++;
        correct[truth] += predicted == truth;
    }
    const double bal_acc =
        0.5 * (double(correct[0]) / double(total[0]) + double(correct[1]) / double(total[1]));
    return 2.0 * (1.0 - std::max(bal_acc, 0.5));
}

// ---- output files ------------------------------------------------------------

inline void save_tsne_csv(const EmbeddingSet& emb, const TsneResult& t, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "save_tsne_csv: cannot open " + path.string());
    f << "sample_id,x,y,subset,split,class\n";
    for (i64 i = 0; i < emb.n; ++i)
        f << emb.ids[size_t(i)] << ',' << format_g9(t.coords[size_t(i * 2)]) << ','
          << format_g9(t.coords[size_t(i * 2 + 1)]) << ',' << emb.subset[size_t(i)] << ',' << emb.split[size_t(i)]
          << ',' << class_names()[size_t(emb.cls[size_t(i)])] << "\n";
}

// Three-panel scatter mirroring the distribution-analysis figure:
// train/test per subset, then subset A vs B.
inline void save_tsne_svg(const EmbeddingSet& emb, const TsneResult& t, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "save_tsne_svg: cannot open " + path.string());
    const int panel = 320, margin = 24;
    const int width = 3 * panel + 4 * margin, height = panel + 2 * margin + 20;
    double lo = 1e300, hi = -1e300;
    for (double v : t.coords) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    auto sx = [&](int panel_idx, double v) {
        return margin + panel_idx * (panel + margin) + (v - lo) / span * (panel - 8) + 4;
    };
    auto sy = [&](double v) { return margin + (hi - v) / span * (panel - 8) + 4; };
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    const char* titles[3] = {"subset A: train vs test", "subset B: train vs test", "A vs B"};
    for (int pnl = 0; pnl < 3; ++pnl) {
        f << "<text x=\"" << margin + pnl * (panel + margin) << "\" y=\"" << margin - 8
          << "\" font-size=\"12\" font-family=\"sans-serif\">" << titles[pnl] << "</text>\n";
        for (i64 i = 0; i < emb.n; ++i) {
            const char sub = emb.subset[size_t(i)];
            bool orange = false;
            if (pnl == 0) {
                if (sub != 'A') continue;
                orange = emb.split[size_t(i)] == "test";
            } else if (pnl == 1) {
                if (sub != 'B') continue;
                orange = emb.split[size_t(i)] == "test";
            } else {
                orange = sub == 'B';
            }
            f << "<circle cx=\"" << sx(pnl, t.coords[size_t(i * 2)]) << "\" cy=\"" << sy(t.coords[size_t(i * 2 + 1)])
              << "\" r=\"2\" fill=\"" << (orange ? "#ff7f0e" : "#1f77b4") << "\" fill-opacity=\"0.6\"/>\n";
        }
    }
    f << "</svg>\n";
}

}  // namespace swinlet
