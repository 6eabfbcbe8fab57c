// Test-time augmentation, prediction-score matrices, data-soups averaging,
// and the per-subset accuracy metrics.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "augment.hpp"
#include "dataset.hpp"
#include "image.hpp"
#include "manifest.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace swinlet {

struct TtaConfig {
    bool enabled = true;
    std::vector<double> scales{1.0, 1.125, 1.25};
    double crop_lo = 0.6, crop_hi = 1.4;  // random-crop area ratio range
    bool flip = true;
    int n_views = 2;  // random resized-crop views

    void validate() const {
        check(!scales.empty(), "TtaConfig: scales must be non-empty");
        bool has_one = false;
        for (double s : scales) {
            check(s > 0, "TtaConfig: scales must be positive");
            has_one = has_one || s == 1.0;
        }
        check(has_one, "TtaConfig: scales must contain 1.0");
        check(crop_lo <= crop_hi && crop_lo > 0, "TtaConfig: crop ratio range must be ordered and positive");
        check(n_views >= 0, "TtaConfig: n_views must be non-negative");
    }
};

// Deterministic enumeration first (scale x flip, identity leading), then
// n random resized-crop views. Every variant has the source dimensions.
inline std::vector<Image> tta_variants(const Image& img, const TtaConfig& cfg, Rng& rng) {
    cfg.validate();
    check(img.h == img.w, "tta_variants: expects square input");
    const int side = img.h;
    std::vector<double> scales = cfg.scales;
    std::stable_partition(scales.begin(), scales.end(), [](double s) { return s == 1.0; });
    std::vector<Image> out;
    if (!cfg.enabled) {
        out.push_back(img);
        return out;
    }
    for (double s : scales) {
        Image base = img;
        if (s != 1.0) {
            const int scaled = std::max(side, int(std::lround(side * s)));
            base = center_crop(resize_bilinear(img, scaled, scaled), side);
        }
        out.push_back(base);
        if (cfg.flip) out.push_back(hflip(base));
    }
    for (int i = 0; i < cfg.n_views; ++i) {
        const double ratio = rng.uniform(cfg.crop_lo, cfg.crop_hi);
        if (ratio <= 1.0) {
            const int cside = std::max(1, std::min(side, int(std::lround(side * std::sqrt(ratio)))));
            const int y0 = int(rng.range(0, side - cside));
            const int x0 = int(rng.range(0, side - cside));
            out.push_back(resize_bilinear(crop(img, y0, x0, cside, cside), side, side));
        } else {
            // zoom-out: reflect-pad to the enlarged canvas, then resize down
            const int canvas = int(std::lround(side * std::sqrt(ratio)));
            const int pad = canvas - side;
            const int top = int(rng.range(0, pad));
            const int left = int(rng.range(0, pad));
            out.push_back(resize_bilinear(reflect_pad(img, top, pad - top, left, pad - left), side, side));
        }
    }
    return out;
}

struct PredictionMatrix {
    std::vector<std::string> sample_ids;  // sorted ascending
    int num_classes = kNumClasses;
    std::vector<double> scores;  // N x K, rows sum to 1

    double at(i64 row, int k) const { return scores[size_t(row) * size_t(num_classes) + size_t(k)]; }

    int argmax_row(i64 row) const {
        int best = 0;
        for (int k = 1; k < num_classes; ++k)
            if (at(row, k) > at(row, best)) best = k;  // ties keep the lowest class index
        return best;
    }
};

// Softmax per TTA variant, arithmetic mean over variants.
template <typename T>
PredictionMatrix predict_scores(const Swinlet<T>& model, const std::vector<const ManifestRow*>& rows,
                                ImageStore& store, const TtaConfig& tta, const AugConfig& aug, u64 seed) {
    std::vector<const ManifestRow*> ordered = rows;
    std::sort(ordered.begin(), ordered.end(),
              [](const ManifestRow* a, const ManifestRow* b) { return a->sample_id < b->sample_id; });
    PredictionMatrix out;
    out.num_classes = model.cfg.num_classes;
    out.scores.resize(ordered.size() * size_t(out.num_classes), 0.0);
    for (size_t i = 0; i < ordered.size(); ++i) {
        const ManifestRow& row = *ordered[i];
        out.sample_ids.push_back(row.sample_id);
        Rng rng = StreamKey(seed).with("tta").with(row.sample_id).rng();
        std::vector<Image> views = tta_variants(store.get(row), tta, rng);
        for (Image& v : views) {
            check(v.h == model.cfg.input_size && v.w == model.cfg.input_size,
                  "predict_scores: variant size mismatch for sample " + row.sample_id);
            v = normalize(v, aug.normalize_mean, aug.normalize_std);
        }
        Graph<T> g;
        const auto handles = model.forward(g, batch_tensor(views).template cast<T>());
        const Tensor<T>& logits = g.val(handles.logits);
        const i64 K = out.num_classes;
        for (i64 v = 0; v < i64(views.size()); ++v) {
            double mx = -1e300;
            for (i64 k = 0; k < K; ++k) mx = std::max(mx, double(logits[v * K + k]));
            double denom = 0;
            for (i64 k = 0; k < K; ++k) denom += std::exp(double(logits[v * K + k]) - mx);
            for (i64 k = 0; k < K; ++k)
                out.scores[i * size_t(K) + size_t(k)] +=
                    std::exp(double(logits[v * K + k]) - mx) / denom / double(views.size());
        }
    }
    return out;
}

// Elementwise mean across matrices. Per-entry values are summed in sorted
// order so the result is bit-exact under any permutation of the inputs.
inline PredictionMatrix soup(const std::vector<PredictionMatrix>& mats) {
    check(!mats.empty(), "soup: need at least one prediction matrix");
    const PredictionMatrix& first = mats[0];
    for (const auto& m : mats) {
        check(m.sample_ids == first.sample_ids, "soup: sample id sets differ");
        check(m.num_classes == first.num_classes, "soup: class count differs");
    }
    PredictionMatrix out;
    out.sample_ids = first.sample_ids;
    out.num_classes = first.num_classes;
    out.scores.resize(first.scores.size());
    std::vector<double> vals(mats.size());
    for (size_t e = 0; e < out.scores.size(); ++e) {
        for (size_t m = 0; m < mats.size(); ++m) vals[m] = mats[m].scores[e];
        std::sort(vals.begin(), vals.end());
        if (vals.front() == vals.back()) {  // mean of equal values is exact
            out.scores[e] = vals.front();
            continue;
        }
        double s = 0;
        for (double v : vals) s += v;
        out.scores[e] = s / double(mats.size());
    }
    return out;
}

// ---- metrics -----------------------------------------------------------------

// Exact-rational per-subset accuracy; percentages derive from the integer
// counts.
struct Metrics {
    i64 correct_a = 0, total_a = 0;
    i64 correct_b = 0, total_b = 0;

    double acc_a() const { return 100.0 * double(correct_a) / double(total_a); }
    double acc_b() const { return 100.0 * double(correct_b) / double(total_b); }
    double macc() const {
        const auto [num, den] = macc_rational();
        return double(num) / double(den);
    }
    // 100*(ca*tb + cb*ta) / (2*ta*tb)
    std::pair<i64, i64> macc_rational() const {
        return {100 * (correct_a * total_b + correct_b * total_a), 2 * total_a * total_b};
    }
};

// Half-up to one decimal, the display convention for report tables.
inline std::string display_pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", std::floor(v * 10.0 + 0.5) / 10.0);
    return buf;
}

inline Metrics evaluate(const PredictionMatrix& pred, const std::map<std::string, int>& labels,
                        const std::map<std::string, char>& subset_of) {
    Metrics m;
    for (size_t i = 0; i < pred.sample_ids.size(); ++i) {
        const std::string& id = pred.sample_ids[i];
        const auto lit = labels.find(id);
        check(lit != labels.end(), "evaluate: missing label for sample '" + id + "'");
        const auto sit = subset_of.find(id);
        check(sit != subset_of.end(), "evaluate: missing subset for sample '" + id + "'");
        const bool correct = pred.argmax_row(i64(i)) == lit->second;
        if (sit->second == 'A') {
            m.total_a++;
            m.correct_a += correct;
        } else {
            m.total_b++;
            m.correct_b += correct;
        }
    }
    check(m.total_a > 0 && m.total_b > 0, "evaluate: both subsets must be present");
    return m;
}

// ---- score files ----------------------------------------------------------------

inline void save_scores(const PredictionMatrix& m, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "save_scores: cannot open " + path.string());
    f << "sample_id";
    for (int k = 0; k < m.num_classes; ++k) f << ",p" << k;
    f << "\n";
    for (size_t i = 0; i < m.sample_ids.size(); ++i) {
        f << m.sample_ids[i];
        for (int k = 0; k < m.num_classes; ++k) f << ',' << format_g9(m.at(i64(i), k));
        f << "\n";
    }
    check(bool(f), "save_scores: short write");
}

inline PredictionMatrix load_scores(const std::filesystem::path& path) {
    std::ifstream f(path);
    check(bool(f), "load_scores: cannot open " + path.string());
    std::string line;
    check(bool(std::getline(f, line)), "load_scores: empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split_csv_line(line);
    check(header.size() >= 2 && header[0] == "sample_id", "load_scores: bad header in " + path.string());
    PredictionMatrix out;
    out.num_classes = int(header.size()) - 1;
    for (int k = 0; k < out.num_classes; ++k)
        check(header[size_t(k) + 1] == "p" + std::to_string(k), "load_scores: bad header column");
    while (std::getline(f, line)) {
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        check(int(fields.size()) == out.num_classes + 1, "load_scores: bad row width");
        out.sample_ids.push_back(fields[0]);
        for (int k = 0; k < out.num_classes; ++k) out.scores.push_back(std::stod(fields[size_t(k) + 1]));
    }
    check(std::is_sorted(out.sample_ids.begin(), out.sample_ids.end()), "load_scores: rows must be sorted by id");
    return out;
}

}  // namespace swinlet
