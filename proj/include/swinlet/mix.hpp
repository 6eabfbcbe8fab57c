// Batch-level CutMix / MixUp with soft targets, and label-smoothed
// cross entropy on the graph.
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "graph.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace swinlet {

struct MixConfig {
    bool enabled = true;
    double cutmix_alpha = 0.8;
    double mixup_alpha = 1.0;
    double smoothing_eps = 0.1;

    void validate() const {
        check(cutmix_alpha > 0 && mixup_alpha > 0, "MixConfig: alphas must be positive");
        check(smoothing_eps >= 0 && smoothing_eps < 1, "MixConfig: smoothing eps must be in [0,1)");
    }
};

enum class MixMode { CutMix, MixUp };

struct MixOutcome {
    std::vector<Image> batch;
    TensorF targets;  // [B,K], rows sum to 1
    double lambda = 1.0;
    MixMode mode = MixMode::MixUp;
    bool degenerate = false;  // batch of one, mixing skipped
};

// q = (1-eps)*onehot + eps/K
inline TensorF smooth_targets(const std::vector<int>& class_ids, double eps, int num_classes) {
    TensorF out({i64(class_ids.size()), num_classes});
    for (size_t b = 0; b < class_ids.size(); ++b) {
        check(class_ids[b] >= 0 && class_ids[b] < num_classes, "smooth_targets: class id out of range");
        for (int k = 0; k < num_classes; ++k)
            out[i64(b) * num_classes + k] = float(eps / num_classes + (k == class_ids[b] ? 1.0 - eps : 0.0));
    }
    return out;
}

namespace detail {
// Partner pairing is the reversed batch order.
inline i64 partner(i64 b, i64 n) { return n - 1 - b; }
}  // namespace detail

inline MixOutcome mixup_with_lambda(const std::vector<Image>& batch, const TensorF& targets, double lambda) {
    const i64 n = i64(batch.size());
    const i64 k = targets.dims[1];
    MixOutcome out;
    out.mode = MixMode::MixUp;
    out.lambda = lambda;
    out.targets = TensorF({n, k});
    out.batch.resize(size_t(n));
    for (i64 b = 0; b < n; ++b) {
        const i64 p = detail::partner(b, n);
        const Image& a = batch[size_t(b)];
        const Image& q = batch[size_t(p)];
        Image m(a.h, a.w);
        for (size_t i = 0; i < m.px.size(); ++i)
            m.px[i] = float(lambda * double(a.px[i]) + (1.0 - lambda) * double(q.px[i]));
        out.batch[size_t(b)] = std::move(m);
        for (i64 c = 0; c < k; ++c)
            out.targets[b * k + c] = float(lambda * double(targets[b * k + c]) + (1.0 - lambda) * double(targets[p * k + c]));
    }
    return out;
}

inline MixOutcome mixup(const std::vector<Image>& batch, const TensorF& targets, double alpha, Rng& rng) {
    check(!batch.empty(), "mixup: empty batch");
    if (batch.size() == 1) {
        MixOutcome out;
        out.batch = batch;
        out.targets = targets;
        out.lambda = 1.0;
        out.mode = MixMode::MixUp;
        out.degenerate = true;
        return out;
    }
    return mixup_with_lambda(batch, targets, rng.beta(alpha, alpha));
}

// Pastes [y0,y1)x[x0,x1) from the reversed partner; target weight is the
// exact surviving-pixel fraction.
inline MixOutcome cutmix_with_rect(const std::vector<Image>& batch, const TensorF& targets, double lambda, int y0,
                                   int y1, int x0, int x1) {
    const i64 n = i64(batch.size());
    const i64 k = targets.dims[1];
    const int h = batch[0].h, w = batch[0].w;
    check(y0 >= 0 && x0 >= 0 && y1 <= h && x1 <= w && y0 <= y1 && x0 <= x1, "cutmix: rectangle out of bounds");
    const double cut_area = double(y1 - y0) * double(x1 - x0);
    const double lambda_adj = 1.0 - cut_area / (double(h) * double(w));
    MixOutcome out;
    out.mode = MixMode::CutMix;
    out.lambda = lambda_adj;
    out.targets = TensorF({n, k});
    out.batch.resize(size_t(n));
    for (i64 b = 0; b < n; ++b) {
        const i64 p = detail::partner(b, n);
        Image m = batch[size_t(b)];
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int c = 0; c < 3; ++c) m.at(y, x, c) = batch[size_t(p)].at(y, x, c);
        out.batch[size_t(b)] = std::move(m);
        for (i64 c = 0; c < k; ++c)
            out.targets[b * k + c] =
                float(lambda_adj * double(targets[b * k + c]) + (1.0 - lambda_adj) * double(targets[p * k + c]));
    }
    (void)lambda;
    return out;
}

inline MixOutcome cutmix(const std::vector<Image>& batch, const TensorF& targets, double alpha, Rng& rng) {
    check(batch.size() >= 2, "cutmix: batch must have at least 2 samples");
    const int h = batch[0].h, w = batch[0].w;
    const double lambda = rng.beta(alpha, alpha);
    const double frac = std::sqrt(1.0 - lambda);
    const int cut_h = int(std::lround(h * frac));
    const int cut_w = int(std::lround(w * frac));
    const int cy = int(rng.below(u64(h)));
    const int cx = int(rng.below(u64(w)));
    const int y0 = std::clamp(cy - cut_h / 2, 0, h);
    const int y1 = std::clamp(cy - cut_h / 2 + cut_h, 0, h);
    const int x0 = std::clamp(cx - cut_w / 2, 0, w);
    const int x1 = std::clamp(cx - cut_w / 2 + cut_w, 0, w);
    return cutmix_with_rect(batch, targets, lambda, y0, y1, x0, x1);
}

// Per-batch choice between the two mixers, equal probability.
inline MixOutcome apply_batch_mix(const std::vector<Image>& batch, const TensorF& targets, const MixConfig& cfg,
                                  Rng& rng) {
    if (rng.uniform() < 0.5) return cutmix(batch, targets, cfg.cutmix_alpha, rng);
    return mixup(batch, targets, cfg.mixup_alpha, rng);
}

// mean over batch of -sum_k q_k log softmax(z)_k
template <typename T>
NodeId smoothed_ce_loss(Graph<T>& g, NodeId logits, const Tensor<T>& targets) {
    check(g.val(logits).dims == targets.dims, "smoothed_ce: logits/targets shape mismatch");
    const NodeId q = g.value(targets);
    const NodeId ls = g.log_softmax(logits);
    const NodeId per_sample = g.sum_axis(g.mul(ls, q), 1);  // [B]
    return g.mul_scalar(g.mean_axis(per_sample, 0), T(-1));
}

}  // namespace swinlet
