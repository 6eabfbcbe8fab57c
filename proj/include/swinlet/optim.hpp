// AdamW with decoupled weight decay and the warmup + cosine-annealing
// learning-rate schedule.
#pragma once

#include <cmath>
#include <map>
#include <string>

#include "common.hpp"
#include "tensor.hpp"

namespace swinlet {

struct OptimConfig {
    double peak_lr = 1e-5;  // paper profile; the desk preset raises this
    int warmup_epochs = 10;
    int total_epochs = 50;
    int batch_size = 8;
    double weight_decay = 0.05;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double eta_min = 0.0;

    void validate() const {
        check(warmup_epochs >= 0 && warmup_epochs < total_epochs, "OptimConfig: warmup must precede total epochs");
        check(batch_size >= 2, "OptimConfig: batch size must be at least 2 (mixing needs pairs)");
        check(peak_lr >= 0 && beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && eps > 0,
              "OptimConfig: bad optimizer constants");
    }
};

// Linear 0->peak over warmup, then cosine to eta_min. t is a fractional
// epoch position in [0, total].
inline double lr_at(double t, const OptimConfig& cfg) {
    check(t >= 0.0 && t <= double(cfg.total_epochs), "lr_at: t outside [0, total_epochs]");
    if (t < double(cfg.warmup_epochs)) return cfg.peak_lr * t / double(cfg.warmup_epochs);
    const double span = double(cfg.total_epochs - cfg.warmup_epochs);
    const double progress = (t - double(cfg.warmup_epochs)) / span;
    return cfg.eta_min + 0.5 * (cfg.peak_lr - cfg.eta_min) * (1.0 + std::cos(M_PI * progress));
}

// Decoupled decay is skipped for biases, norm gains/shifts, and the
// attention temperatures.
inline bool decay_exempt(const std::string& name) {
    auto ends_with = [&](const char* suffix) {
        const std::string s(suffix);
        return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    return ends_with(".bias") || ends_with(".gamma") || ends_with(".beta") || ends_with(".tau");
}

template <typename T>
class AdamW {
public:
    explicit AdamW(const OptimConfig& cfg) : cfg_(cfg) {}

    // p <- p - lr * mhat/(sqrt(vhat)+eps) - lr * wd * p
    void step(std::map<std::string, Tensor<T>>& params, const std::map<std::string, Tensor<T>>& grads, double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (auto& [name, p] : params) {
            const auto git = grads.find(name);
            check(git != grads.end(), "AdamW: missing gradient for '" + name + "'");
            const Tensor<T>& g = git->second;
            check(g.dims == p.dims, "AdamW: gradient shape mismatch for '" + name + "'");
            auto& m = moment(m_, name, p.dims);
            auto& v = moment(v_, name, p.dims);
            const double wd = decay_exempt(name) ? 0.0 : cfg_.weight_decay;
            for (i64 i = 0; i < p.numel(); ++i) {
                const double gi = double(g[i]);
                const double mi = cfg_.beta1 * double(m[i]) + (1.0 - cfg_.beta1) * gi;
                const double vi = cfg_.beta2 * double(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                m[i] = T(mi);
                v[i] = T(vi);
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                p[i] = T(double(p[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps) - lr * wd * double(p[i]));
            }
        }
    }

    i64 step_count() const { return t_; }

private:
    OptimConfig cfg_;
    i64 t_ = 0;
    std::map<std::string, Tensor<T>> m_, v_;

    Tensor<T>& moment(std::map<std::string, Tensor<T>>& store, const std::string& name, const Dims& dims) {
        auto it = store.find(name);
        if (it == store.end()) it = store.emplace(name, Tensor<T>(dims)).first;
        check(it->second.dims == dims, "AdamW: moment shape mismatch for '" + name + "'");
        return it->second;
    }
};

}  // namespace swinlet
