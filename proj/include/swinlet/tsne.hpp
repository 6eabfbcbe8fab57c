// Exact (O(N^2)) t-SNE with per-point bandwidth search, early exaggeration,
// momentum + adaptive gains, as in the original reference implementation.
#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace swinlet {

struct TsneConfig {
    double perplexity = 30.0;  // clamped to (N-1)/3
    int iters = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double step_size = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    u64 seed = 0;

    void validate() const {
        check(perplexity >= 2.0, "TsneConfig: perplexity must be >= 2");
        check(iters >= 250, "TsneConfig: iters must be >= 250");
    }
};

struct TsneResult {
    std::vector<double> coords;  // N x 2, centered
    double kl_initial = 0;
    double kl_final = 0;
    std::vector<std::pair<int, double>> kl_log;  // (iter, KL) every 50 iters
    bool jittered = false;
    std::vector<double> row_entropy;  // per-point conditional entropy (nats)
};

namespace detail {

inline std::vector<double> pairwise_sqdist(const std::vector<double>& x, i64 n, i64 d) {
    std::vector<double> dist(size_t(n) * size_t(n), 0.0);
    for (i64 i = 0; i < n; ++i)
        for (i64 j = i + 1; j < n; ++j) {
            double s = 0;
            for (i64 k = 0; k < d; ++k) {
                const double diff = x[size_t(i * d + k)] - x[size_t(j * d + k)];
                s += diff * diff;
            }
            dist[size_t(i * n + j)] = dist[size_t(j * n + i)] = s;
        }
    return dist;
}

}  // namespace detail

// embeddings: row-major N x D.
inline TsneResult tsne(const std::vector<double>& embeddings, i64 n, i64 d, const TsneConfig& cfg) {
    cfg.validate();
    check(n >= 10, "tsne: need at least 10 points");
    check(n <= 5000, "tsne: exact algorithm capped at 5000 points");
    check(i64(embeddings.size()) == n * d, "tsne: embedding buffer size mismatch");
    for (double v : embeddings) check(std::isfinite(v), "tsne: non-finite embedding value");

    TsneResult res;
    std::vector<double> x = embeddings;
    std::vector<double> dist = detail::pairwise_sqdist(x, n, d);

    // Duplicate points make the bandwidth search degenerate; jitter once.
    bool dup = false;
    for (i64 i = 0; i < n && !dup; ++i)
        for (i64 j = i + 1; j < n; ++j)
            if (dist[size_t(i * n + j)] == 0.0) {
                dup = true;
                break;
            }
    if (dup) {
        Rng jrng = StreamKey(cfg.seed).with("tsne-jitter").rng();
        for (auto& v : x) v += 1e-10 * jrng.normal();
        dist = detail::pairwise_sqdist(x, n, d);
        res.jittered = true;
    }

    const double perplexity = std::min(cfg.perplexity, double(n - 1) / 3.0);
    const double target_entropy = std::log(perplexity);

    // Conditional affinities via binary search on precision beta = 1/(2 sigma^2).
    std::vector<double> p(size_t(n) * size_t(n), 0.0);
    res.row_entropy.resize(size_t(n));
    for (i64 i = 0; i < n; ++i) {
        double beta = 1.0, beta_min = -1e300, beta_max = 1e300;
        double entropy = 0;
        std::vector<double> row(size_t(n), 0.0);
        for (int iter = 0; iter < 50; ++iter) {
            double sum_p = 0, sum_dp = 0;
            for (i64 j = 0; j < n; ++j) {
                if (j == i) {
                    row[size_t(j)] = 0;
                    continue;
                }
                const double pj = std::exp(-beta * dist[size_t(i * n + j)]);
                row[size_t(j)] = pj;
                sum_p += pj;
                sum_dp += dist[size_t(i * n + j)] * pj;
            }
            check(sum_p > 0, "tsne: bandwidth search degenerated at point " + std::to_string(i));
            entropy = std::log(sum_p) + beta * sum_dp / sum_p;
            const double diff = entropy - target_entropy;
            if (std::fabs(diff) < 1e-5) break;
            if (diff > 0) {
                beta_min = beta;
                beta = beta_max >= 1e300 ? beta * 2.0 : (beta + beta_max) / 2.0;
            } else {
                beta_max = beta;
                beta = beta_min <= -1e300 ? beta / 2.0 : (beta + beta_min) / 2.0;
            }
        }
        res.row_entropy[size_t(i)] = entropy;
        double sum_p = 0;
        for (i64 j = 0; j < n; ++j) sum_p += row[size_t(j)];
        for (i64 j = 0; j < n; ++j) p[size_t(i * n + j)] = row[size_t(j)] / sum_p;
    }

    // Symmetrize: P = (P + P^T) / 2N, so the whole matrix sums to 1.
    for (i64 i = 0; i < n; ++i)
        for (i64 j = i + 1; j < n; ++j) {
            const double v = (p[size_t(i * n + j)] + p[size_t(j * n + i)]) / (2.0 * double(n));
            p[size_t(i * n + j)] = p[size_t(j * n + i)] = v;
        }
    for (i64 i = 0; i < n; ++i) p[size_t(i * n + i)] = 0;

    // init Y ~ 1e-4 * N(0,1)
    std::vector<double> y(size_t(n) * 2), vel(size_t(n) * 2, 0.0), gains(size_t(n) * 2, 1.0);
    {
        Rng yrng = StreamKey(cfg.seed).with("tsne-init").rng();
        for (auto& v : y) v = 1e-4 * yrng.normal();
    }

    std::vector<double> q(size_t(n) * size_t(n), 0.0);
    std::vector<double> grad(size_t(n) * 2, 0.0);
    auto compute_q = [&]() {
        double sum_w = 0;
        for (i64 i = 0; i < n; ++i)
            for (i64 j = i + 1; j < n; ++j) {
                const double dy0 = y[size_t(i * 2)] - y[size_t(j * 2)];
                const double dy1 = y[size_t(i * 2 + 1)] - y[size_t(j * 2 + 1)];
                const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
                q[size_t(i * n + j)] = q[size_t(j * n + i)] = w;
                sum_w += 2.0 * w;
            }
        return sum_w;
    };
    auto kl_divergence = [&](double sum_w) {
        double kl = 0;
        for (i64 i = 0; i < n; ++i)
            for (i64 j = 0; j < n; ++j) {
                if (i == j) continue;
                const double pij = p[size_t(i * n + j)];
                if (pij <= 0) continue;
                const double qij = std::max(q[size_t(i * n + j)] / sum_w, 1e-300);
                kl += pij * std::log(pij / qij);
            }
        return kl;
    };

    {
        const double sw = compute_q();
        res.kl_initial = kl_divergence(sw);
        res.kl_log.emplace_back(0, res.kl_initial);
    }

    for (int iter = 0; iter < cfg.iters; ++iter) {
        const double exaggeration = iter < cfg.exaggeration_iters ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;
        const double sum_w = compute_q();
        std::fill(grad.begin(), grad.end(), 0.0);
        for (i64 i = 0; i < n; ++i) {
            for (i64 j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = q[size_t(i * n + j)];
                const double mult = (exaggeration * p[size_t(i * n + j)] - w / sum_w) * w;
                grad[size_t(i * 2)] += 4.0 * mult * (y[size_t(i * 2)] - y[size_t(j * 2)]);
                grad[size_t(i * 2 + 1)] += 4.0 * mult * (y[size_t(i * 2 + 1)] - y[size_t(j * 2 + 1)]);
            }
        }
        for (size_t e = 0; e < y.size(); ++e) {
            // adaptive per-component gains, as in the reference implementation
            gains[e] = (grad[e] > 0) != (vel[e] > 0) ? gains[e] + 0.2 : gains[e] * 0.8;
            gains[e] = std::max(gains[e], 0.01);
            vel[e] = momentum * vel[e] - cfg.step_size * gains[e] * grad[e];
            y[e] += vel[e];
        }
        double mean0 = 0, mean1 = 0;
        for (i64 i = 0; i < n; ++i) {
            mean0 += y[size_t(i * 2)];
            mean1 += y[size_t(i * 2 + 1)];
        }
        mean0 /= double(n);
        mean1 /= double(n);
        for (i64 i = 0; i < n; ++i) {
            y[size_t(i * 2)] -= mean0;
            y[size_t(i * 2 + 1)] -= mean1;
        }
        if ((iter + 1) % 50 == 0 || iter + 1 == cfg.iters) {
            const double sw = compute_q();
            const double kl = kl_divergence(sw);
            check(std::isfinite(kl), "tsne: KL diverged at iteration " + std::to_string(iter + 1));
            res.kl_log.emplace_back(iter + 1, kl);
        }
    }
    res.kl_final = res.kl_log.back().second;
    res.coords = std::move(y);
    return res;
}

}  // namespace swinlet
