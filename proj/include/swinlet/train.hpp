// Training stages: the joint run over both subsets and the per-subset
// K-fold continuous fine-tuning, with the CSV metrics log.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "augment.hpp"
#include "dataset.hpp"
#include "manifest.hpp"
#include "mix.hpp"
#include "model.hpp"
#include "optim.hpp"

namespace swinlet {

struct StageSpec {
    enum class Kind { Joint, FineTune };
    Kind kind = Kind::Joint;
    char subset = '*';  // FineTune only
    int val_fold = -1;  // FineTune only: held-out fold

    std::string name() const {
        if (kind == Kind::Joint) return "joint";
        return std::string("finetune-") + subset + std::to_string(val_fold);
    }
};

struct EpochLog {
    int epoch = 0;
    std::string stage;
    std::string subset;  // "AB" for joint
    int fold = -1;
    double train_loss = 0;
    double val_acc = std::numeric_limits<double>::quiet_NaN();  // percent; NaN when no held-out set
    double lr = 0;
};

constexpr const char* kMetricsHeader = "epoch,stage,subset,fold,train_loss,val_acc,lr";

inline void append_metrics_csv(const std::vector<EpochLog>& logs, std::ostream& os) {
    for (const auto& e : logs) {
        os << e.epoch << ',' << e.stage << ',' << e.subset << ',' << e.fold << ',' << format_g9(e.train_loss)
           << ',';
        if (std::isnan(e.val_acc))
            os << "nan";
        else
            os << format_g9(e.val_acc);
        os << ',' << format_g9(e.lr) << "\n";
    }
}

struct TrainResult {
    std::map<std::string, TensorF> best_params;
    std::map<std::string, TensorF> final_params;
    int best_epoch = -1;
    double best_val_acc = std::numeric_limits<double>::quiet_NaN();
    std::vector<EpochLog> log;
};

namespace detail {

template <typename T>
double eval_accuracy(const Swinlet<T>& model, const std::vector<const ManifestRow*>& rows, ImageStore& store,
                     const AugConfig& aug) {
    if (rows.empty()) return std::numeric_limits<double>::quiet_NaN();
    i64 correct = 0;
    const i64 batch = 16;
    for (size_t start = 0; start < rows.size(); start += size_t(batch)) {
        const size_t end = std::min(rows.size(), start + size_t(batch));
        std::vector<Image> imgs;
        for (size_t i = start; i < end; ++i) {
            Image im = store.get(*rows[i]);
            if (im.h != model.cfg.input_size || im.w != model.cfg.input_size)
                im = resize_bilinear(im, model.cfg.input_size, model.cfg.input_size);
            imgs.push_back(normalize(im, aug.normalize_mean, aug.normalize_std));
        }
        Graph<T> g;
        const auto h = model.forward(g, batch_tensor(imgs).template cast<T>());
        const Tensor<T>& logits = g.val(h.logits);
        const i64 K = model.cfg.num_classes;
        for (size_t i = start; i < end; ++i) {
            const i64 r = i64(i - start);
            int best = 0;
            for (int k = 1; k < K; ++k)
                if (logits[r * K + k] > logits[r * K + best]) best = k;
            correct += best == rows[i]->class_id;
        }
    }
    return 100.0 * double(correct) / double(rows.size());
}

}  // namespace detail

// One optimization stage: augment -> mix -> forward -> smoothed CE ->
// AdamW. Emits the best-held-out and final parameter sets plus the log.
template <typename T>
TrainResult train_stage(Swinlet<T>& model, const Manifest& manifest, const StageSpec& spec,
                        const OptimConfig& optim_cfg, const AugConfig& aug_cfg, const MixConfig& mix_cfg,
                        u64 seed, ImageStore& store) {
    optim_cfg.validate();
    aug_cfg.validate();
    mix_cfg.validate();

    std::vector<const ManifestRow*> train_rows, val_rows;
    if (spec.kind == StageSpec::Kind::Joint) {
        train_rows = manifest.select('*', "train");
    } else {
        train_rows = manifest.select(spec.subset, "train", spec.val_fold);
        val_rows = manifest.select(spec.subset, "train", -2, spec.val_fold);
    }
    check(!train_rows.empty(), "train_stage: stage '" + spec.name() + "' selects no training data");
    std::sort(train_rows.begin(), train_rows.end(),
              [](const ManifestRow* a, const ManifestRow* b) { return a->sample_id < b->sample_id; });
    std::sort(val_rows.begin(), val_rows.end(),
              [](const ManifestRow* a, const ManifestRow* b) { return a->sample_id < b->sample_id; });

    const StreamKey stage_key = StreamKey(seed).with(spec.name());
    AdamW<T> opt(optim_cfg);
    TrainResult res;
    const int K = model.cfg.num_classes;

    for (int epoch = 0; epoch < optim_cfg.total_epochs; ++epoch) {
        std::vector<size_t> order(train_rows.size());
        std::iota(order.begin(), order.end(), size_t(0));
        Rng shuffle_rng = stage_key.with("shuffle").with(epoch).rng();
        for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[size_t(shuffle_rng.below(i))]);

        double loss_sum = 0;
        i64 loss_count = 0;
        const i64 nbatches = std::max<i64>(1, i64(order.size()) / optim_cfg.batch_size);
        double first_lr = 0;
        i64 batch_idx = 0;
        for (size_t start = 0; start < order.size(); start += size_t(optim_cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + size_t(optim_cfg.batch_size));
            if (end - start < 2) break;  // mixing needs pairs; drop the tail singleton
            std::vector<Image> imgs;
            std::vector<int> classes;
            for (size_t i = start; i < end; ++i) {
                const ManifestRow& row = *train_rows[order[i]];
                Rng aug_rng = stage_key.with("aug").with(row.sample_id).with(epoch).rng();
                imgs.push_back(augment_sample(store.get(row), aug_cfg, aug_rng));
                classes.push_back(row.class_id);
            }
            TensorF targets = smooth_targets(classes, mix_cfg.smoothing_eps, K);
            double lambda = 1.0;
            if (mix_cfg.enabled) {
                Rng mix_rng = stage_key.with("mix").with(epoch).with(batch_idx).rng();
                MixOutcome mo = apply_batch_mix(imgs, targets, mix_cfg, mix_rng);
                imgs = std::move(mo.batch);
                targets = std::move(mo.targets);
                lambda = mo.lambda;
            }
            (void)lambda;
            for (auto& im : imgs) im = normalize(im, aug_cfg.normalize_mean, aug_cfg.normalize_std);

            Graph<T> g;
            Rng dp_rng = stage_key.with("droppath").with(epoch).with(batch_idx).rng();
            const auto handles = model.forward(g, batch_tensor(imgs).template cast<T>(), true, &dp_rng);
            const NodeId loss = smoothed_ce_loss(g, handles.logits, targets.template cast<T>());
            g.backward(loss);
            std::map<std::string, Tensor<T>> grads;
            for (const auto& [name, _] : model.params) grads[name] = g.grad(name);

            const double t = double(epoch) + double(batch_idx) / double(nbatches);
            const double lr = lr_at(std::min(t, double(optim_cfg.total_epochs)), optim_cfg);
            if (batch_idx == 0) first_lr = lr;
            opt.step(model.params, grads, lr);

            loss_sum += double(g.val(loss)[0]) * double(end - start);
            loss_count += i64(end - start);
            ++batch_idx;
        }

        EpochLog el;
        el.epoch = epoch;
        el.stage = spec.kind == StageSpec::Kind::Joint ? "joint" : "finetune";
        el.subset = spec.kind == StageSpec::Kind::Joint ? "AB" : std::string(1, spec.subset);
        el.fold = spec.kind == StageSpec::Kind::Joint ? -1 : spec.val_fold;
        el.train_loss = loss_count ? loss_sum / double(loss_count) : 0.0;
        el.lr = first_lr;
        if (!val_rows.empty()) {
            el.val_acc = detail::eval_accuracy(model, val_rows, store, aug_cfg);
            // ties go to the later epoch
            if (std::isnan(res.best_val_acc) || el.val_acc >= res.best_val_acc) {
                res.best_val_acc = el.val_acc;
                res.best_epoch = epoch;
                res.best_params = model.params;
            }
        }
        res.log.push_back(el);
    }
    res.final_params = model.params;
    if (res.best_params.empty()) {  // no held-out set: best is final
        res.best_params = res.final_params;
        res.best_epoch = optim_cfg.total_epochs - 1;
    }
    return res;
}

struct FinetuneRun {
    char subset = 'A';
    int fold = 0;
    std::map<std::string, TensorF> best_params;
    double best_val_acc = 0;
    std::vector<EpochLog> log;
};

struct ContinuousFinetuneResult {
    std::map<std::string, TensorF> joint_params;
    std::vector<EpochLog> joint_log;
    std::vector<FinetuneRun> runs;  // A folds 0..k-1, then B folds 0..k-1
};

// Stage 1 trains once on the union of both subsets; stage 2 fine-tunes a
// copy per (subset, fold), initialized from the joint parameters. The 2k
// runs are independent and may execute on `threads` workers.
inline ContinuousFinetuneResult continuous_finetune(const Manifest& manifest, int k, const ModelConfig& model_cfg,
                                                    const OptimConfig& joint_cfg, const OptimConfig& ft_cfg,
                                                    const AugConfig& aug_cfg, const MixConfig& mix_cfg, u64 seed,
                                                    ImageStore& store, int threads = 1,
                                                    const std::function<void(const std::string&)>& progress = {}) {
    check(k >= 2, "continuous_finetune: k must be >= 2");
    bool has_a = false, has_b = false;
    for (const auto& r : manifest.rows) {
        has_a = has_a || r.subset == 'A';
        has_b = has_b || r.subset == 'B';
    }
    check(has_a && has_b, "continuous_finetune: manifest must contain both subsets");
    for (const auto& r : manifest.rows)
        if (r.split == "train")
            check(r.fold >= 0 && r.fold < k, "continuous_finetune: train sample '" + r.sample_id +
                                                 "' lacks a fold assignment in [0," + std::to_string(k) + ")");
    store.preload();  // shared read-only across workers afterwards

    ContinuousFinetuneResult out;
    {
        if (progress) progress("stage joint: training on both subsets");
        SwinletF model = SwinletF::build(model_cfg, StreamKey(seed).with("joint-init").value());
        StageSpec spec;
        spec.kind = StageSpec::Kind::Joint;
        TrainResult r = train_stage(model, manifest, spec, joint_cfg, aug_cfg, mix_cfg, seed, store);
        out.joint_params = std::move(r.final_params);
        out.joint_log = std::move(r.log);
    }

    std::vector<StageSpec> specs;
    for (char subset : {'A', 'B'})
        for (int f = 0; f < k; ++f) {
            StageSpec s;
            s.kind = StageSpec::Kind::FineTune;
            s.subset = subset;
            s.val_fold = f;
            specs.push_back(s);
        }
    out.runs.resize(specs.size());

    std::atomic<size_t> next{0};
    std::mutex progress_mu;
    auto report = [&](const std::string& msg) {
        if (!progress) return;
        std::lock_guard<std::mutex> lock(progress_mu);
        progress(msg);
    };
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= specs.size()) return;
            const StageSpec& spec = specs[i];
            report("stage " + spec.name() + ": fine-tuning");
            SwinletF model = SwinletF::from_params(model_cfg, out.joint_params);
            TrainResult r = train_stage(model, manifest, spec, ft_cfg, aug_cfg, mix_cfg, seed, store);
            FinetuneRun& run = out.runs[i];
            run.subset = spec.subset;
            run.fold = spec.val_fold;
            run.best_params = std::move(r.best_params);
            run.best_val_acc = r.best_val_acc;
            run.log = std::move(r.log);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    return out;
}

}  // namespace swinlet
