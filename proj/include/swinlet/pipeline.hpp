// The full workflow: analyze -> joint train -> per-subset K-fold fine-tune
// -> TTA predictions per fold -> soups -> evaluation report.
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "ensemble.hpp"
#include "train.hpp"

namespace swinlet {

struct StageEvaluation {
    std::string stage;
    Metrics metrics;
};

struct PipelineResult {
    std::vector<StageEvaluation> evaluations;
    double joint_plain_macc = 0;
    double joint_tta_macc = 0;
    std::vector<double> fold_maccs;
    double soup_macc = 0;
    std::filesystem::path report_path;
};

namespace detail {

inline std::string backbone_string(const ModelConfig& m) {
    // no commas: these strings land in CSV fields
    std::string s = "swinlet-" + std::to_string(m.input_size) + "-p" + std::to_string(m.patch) + "-w" +
                    std::to_string(m.window) + "-d" + std::to_string(m.embed_dim) + "-[";
    for (size_t i = 0; i < m.depths.size(); ++i) s += (i ? "x" : "") + std::to_string(m.depths[i]);
    return s + "]";
}

inline std::string augmentation_string(const AugConfig& a, const MixConfig& mix) {
    if (!a.enabled && !mix.enabled) return "none";
    std::string s;
    if (a.enabled) {
        s = "rrc+flip+randaug(" + std::to_string(a.randaug_n) + "@" + format_g9(a.randaug_level) + ")+erase(" +
            format_g9(a.erase_prob) + ")";
    } else {
        s = "none";
    }
    if (mix.enabled) s += "+cutmix/mixup";
    return s;
}

inline std::string tta_string(const TtaConfig& t) {
    if (!t.enabled) return "none";
    std::string s = "multiscale(";
    for (size_t i = 0; i < t.scales.size(); ++i) s += (i ? "/" : "") + format_g9(t.scales[i]);
    s += ")";
    if (t.flip) s += "+flip";
    if (t.n_views > 0) s += "+crop(" + std::to_string(t.n_views) + ")";
    return s;
}

inline PredictionMatrix merge_predictions(const PredictionMatrix& a, const PredictionMatrix& b) {
    check(a.num_classes == b.num_classes, "merge_predictions: class count mismatch");
    struct Row {
        std::string id;
        const PredictionMatrix* src;
        i64 idx;
    };
    std::vector<Row> rows;
    for (size_t i = 0; i < a.sample_ids.size(); ++i) rows.push_back({a.sample_ids[i], &a, i64(i)});
    for (size_t i = 0; i < b.sample_ids.size(); ++i) rows.push_back({b.sample_ids[i], &b, i64(i)});
    std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) { return x.id < y.id; });
    PredictionMatrix out;
    out.num_classes = a.num_classes;
    for (const Row& r : rows) {
        check(out.sample_ids.empty() || out.sample_ids.back() != r.id,
              "merge_predictions: duplicate sample '" + r.id + "'");
        out.sample_ids.push_back(r.id);
        for (int k = 0; k < out.num_classes; ++k) out.scores.push_back(r.src->at(r.idx, k));
    }
    return out;
}

}  // namespace detail

struct AnalysisOutputs {
    std::array<std::array<i64, kNumClasses>, 2> class_counts{};
    double overlap_split_a = 0;  // train vs test within subset A
    double overlap_split_b = 0;
    double overlap_subsets = 0;  // A vs B
    TsneResult tsne_result;
};

// The distribution-analysis step over every sample in the manifest.
inline AnalysisOutputs run_analysis(const Manifest& manifest, ImageStore& store,
                                    const std::filesystem::path& out_dir, u64 seed,
                                    const FeatureEncoder* encoder = nullptr) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    check(!ec, "run_analysis: cannot create " + out_dir.string());

    AnalysisOutputs out;
    out.class_counts = class_histogram(manifest);
    save_class_histogram(out.class_counts, out_dir / "class_hist.csv");

    HistogramEncoder fallback;
    const FeatureEncoder& enc = encoder ? *encoder : fallback;
    EmbeddingSet emb = extract_features(enc, manifest, store);

    TsneConfig tcfg;
    tcfg.seed = StreamKey(seed).with("tsne").value();
    out.tsne_result = tsne(emb.x, emb.n, emb.d, tcfg);
    save_tsne_csv(emb, out.tsne_result, out_dir / "tsne.csv");
    save_tsne_svg(emb, out.tsne_result, out_dir / "tsne.svg");

    auto subset_split_tags = [&](char subset) {
        EmbeddingSet sub;
        sub.d = emb.d;
        std::vector<int> tags;
        for (i64 i = 0; i < emb.n; ++i) {
            if (emb.subset[size_t(i)] != subset) continue;
            sub.n++;
            sub.x.insert(sub.x.end(), emb.x.begin() + i * emb.d, emb.x.begin() + (i + 1) * emb.d);
            tags.push_back(emb.split[size_t(i)] == "test" ? 1 : 0);
        }
        return std::make_pair(sub, tags);
    };
    {
        auto [sub, tags] = subset_split_tags('A');
        out.overlap_split_a = overlap_score(sub, tags);
    }
    {
        auto [sub, tags] = subset_split_tags('B');
        out.overlap_split_b = overlap_score(sub, tags);
    }
    {
        std::vector<int> tags;
        for (i64 i = 0; i < emb.n; ++i) tags.push_back(emb.subset[size_t(i)] == 'B' ? 1 : 0);
        out.overlap_subsets = overlap_score(emb, tags);
    }
    std::ofstream f(out_dir / "overlap.csv", std::ios::binary);
    f << "comparison,overlap_score\n";
    f << "A_train_vs_test," << format_g9(out.overlap_split_a) << "\n";
    f << "B_train_vs_test," << format_g9(out.overlap_split_b) << "\n";
    f << "A_vs_B," << format_g9(out.overlap_subsets) << "\n";
    return out;
}

// Re-throws with the failing stage named; partial artifacts stay on disk.
template <typename F>
auto pipeline_stage(const char* stage, F&& body) {
    try {
        return body();
    } catch (const std::exception& e) {
        fail("pipeline stage '" + std::string(stage) + "' failed: " + e.what());
    }
}

// Emitted CSVs are re-read and validated against their own headers.
inline void validate_csv(const std::filesystem::path& path, const std::string& header) {
    std::ifstream f(path);
    check(bool(f), "self-validation: cannot reopen " + path.string());
    std::string line;
    check(bool(std::getline(f, line)) && line == header,
          "self-validation: bad header in " + path.string());
    const size_t fields = std::count(header.begin(), header.end(), ',') + 1;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        check(size_t(std::count(line.begin(), line.end(), ',')) + 1 == fields,
              "self-validation: ragged row in " + path.string());
    }
}

inline PipelineResult run_pipeline(const AppConfig& cfg, const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& out_dir, u64 seed,
                                   const std::function<void(const std::string&)>& progress = {}) {
    namespace fs = std::filesystem;
    auto report = [&](const std::string& msg) {
        if (progress) progress(msg);
    };
    std::error_code ec;
    fs::create_directories(out_dir / "checkpoints", ec);
    fs::create_directories(out_dir / "scores", ec);
    check(!ec, "run_pipeline: cannot create output directories");

    Manifest manifest = pipeline_stage("load", [&] { return load_manifest(manifest_path); });
    ImageStore store(manifest);

    report("analyzing data distribution");
    pipeline_stage("analyze", [&] { return run_analysis(manifest, store, out_dir / "analysis", seed); });

    report("assigning " + std::to_string(cfg.run.k) + " folds");
    Manifest folded = pipeline_stage(
        "kfold", [&] { return with_folds(manifest, kfold_split(manifest, cfg.run.k, seed)); });
    save_manifest(folded, out_dir / "manifest_folds.csv");
    ImageStore folded_store(folded);

    const OptimConfig joint_cfg = cfg.stage_optim(true);
    const OptimConfig ft_cfg = cfg.stage_optim(false);
    ContinuousFinetuneResult cft = pipeline_stage("train", [&] {
        return continuous_finetune(folded, cfg.run.k, cfg.model, joint_cfg, ft_cfg, cfg.augment, cfg.mix, seed,
                                   folded_store, cfg.run.threads, progress);
    });

    save_checkpoint(cft.joint_params, out_dir / "checkpoints" / "joint_final.ckpt");
    for (const FinetuneRun& run : cft.runs)
        save_checkpoint(run.best_params,
                        out_dir / "checkpoints" / ("ft_" + std::string(1, run.subset) + std::to_string(run.fold) +
                                                   ".ckpt"));
    {
        std::ofstream f(out_dir / "metrics.csv", std::ios::binary);
        f << kMetricsHeader << "\n";
        append_metrics_csv(cft.joint_log, f);
        for (const FinetuneRun& run : cft.runs) append_metrics_csv(run.log, f);
    }

    report("predicting test sets");
    TtaConfig plain;
    plain.enabled = false;
    const SwinletF joint_model = SwinletF::from_params(cfg.model, cft.joint_params);
    std::map<char, PredictionMatrix> joint_plain, joint_tta, soup_by_subset;
    std::map<char, std::vector<PredictionMatrix>> fold_preds;
    pipeline_stage("predict", [&] {
        for (char subset : {'A', 'B'}) {
            const auto rows = folded.select(subset, "test");
            check(!rows.empty(), "no test rows for subset " + std::string(1, subset));
            joint_plain[subset] = predict_scores(joint_model, rows, folded_store, plain, cfg.augment, seed);
            joint_tta[subset] = predict_scores(joint_model, rows, folded_store, cfg.tta, cfg.augment, seed);
            save_scores(joint_plain[subset],
                        out_dir / "scores" / ("joint_plain_" + std::string(1, subset) + ".csv"));
            save_scores(joint_tta[subset],
                        out_dir / "scores" / ("joint_tta_" + std::string(1, subset) + ".csv"));
        }
        for (const FinetuneRun& run : cft.runs) {
            const SwinletF m = SwinletF::from_params(cfg.model, run.best_params);
            const auto rows = folded.select(run.subset, "test");
            PredictionMatrix pm = predict_scores(m, rows, folded_store, cfg.tta, cfg.augment, seed);
            save_scores(pm, out_dir / "scores" /
                                ("ft_" + std::string(1, run.subset) + std::to_string(run.fold) + ".csv"));
            fold_preds[run.subset].push_back(std::move(pm));
        }
        return 0;
    });
    pipeline_stage("soup", [&] {
        for (char subset : {'A', 'B'}) {
            soup_by_subset[subset] = soup(fold_preds[subset]);
            save_scores(soup_by_subset[subset],
                        out_dir / "scores" / ("soup_" + std::string(1, subset) + ".csv"));
        }
        return 0;
    });

    report("evaluating");
    std::map<std::string, int> labels;
    std::map<std::string, char> subset_of;
    for (const auto& r : folded.rows)
        if (r.split == "test") {
            labels[r.sample_id] = r.class_id;
            subset_of[r.sample_id] = r.subset;
        }

    PipelineResult result;
    auto add_eval = [&](const std::string& stage, const PredictionMatrix& pm) {
        StageEvaluation ev;
        ev.stage = stage;
        ev.metrics = evaluate(pm, labels, subset_of);
        result.evaluations.push_back(ev);
        return ev.metrics.macc();
    };
    pipeline_stage("evaluate", [&] {
        result.joint_plain_macc =
            add_eval("joint-plain", detail::merge_predictions(joint_plain['A'], joint_plain['B']));
        result.joint_tta_macc = add_eval("joint-tta", detail::merge_predictions(joint_tta['A'], joint_tta['B']));
        for (int f = 0; f < cfg.run.k; ++f)
            result.fold_maccs.push_back(add_eval(
                "finetune-f" + std::to_string(f),
                detail::merge_predictions(fold_preds['A'][size_t(f)], fold_preds['B'][size_t(f)])));
        result.soup_macc = add_eval("soup", detail::merge_predictions(soup_by_subset['A'], soup_by_subset['B']));
        return 0;
    });

    // report.csv mirrors the milestone-table columns; accuracies are
    // display-rounded there, exact values live in evaluations.csv.
    const std::string backbone = detail::backbone_string(cfg.model);
    const std::string aug_str = detail::augmentation_string(cfg.augment, cfg.mix);
    const std::string tta_str = detail::tta_string(cfg.tta);
    result.report_path = out_dir / "report.csv";
    {
        std::ofstream f(result.report_path, std::ios::binary);
        f << "stage,backbone,augmentation,tta,soups,acc_A,acc_B,mAcc\n";
        for (const StageEvaluation& ev : result.evaluations) {
            const bool plain_row = ev.stage == "joint-plain";
            const bool soup_row = ev.stage == "soup";
            f << ev.stage << ',' << backbone << ',' << aug_str << ',' << (plain_row ? "none" : tta_str) << ','
              << (soup_row ? "yes" : "no") << ',' << display_pct(ev.metrics.acc_a()) << ','
              << display_pct(ev.metrics.acc_b()) << ',' << display_pct(ev.metrics.macc()) << "\n";
        }
    }
    {
        std::ofstream f(out_dir / "evaluations.csv", std::ios::binary);
        f << "stage,correct_a,total_a,correct_b,total_b,acc_A,acc_B,mAcc\n";
        for (const StageEvaluation& ev : result.evaluations) {
            const Metrics& m = ev.metrics;
            f << ev.stage << ',' << m.correct_a << ',' << m.total_a << ',' << m.correct_b << ',' << m.total_b
              << ',' << format_g9(m.acc_a()) << ',' << format_g9(m.acc_b()) << ',' << format_g9(m.macc()) << "\n";
        }
    }
    pipeline_stage("self-validate", [&] {
        validate_csv(result.report_path, "stage,backbone,augmentation,tta,soups,acc_A,acc_B,mAcc");
        validate_csv(out_dir / "evaluations.csv", "stage,correct_a,total_a,correct_b,total_b,acc_A,acc_B,mAcc");
        validate_csv(out_dir / "metrics.csv", kMetricsHeader);
        validate_csv(out_dir / "manifest_folds.csv", kManifestHeader);
        for (const auto& entry : fs::directory_iterator(out_dir / "scores")) load_scores(entry.path());
        return 0;
    });
    report("report written to " + result.report_path.string());
    return result;
}

}  // namespace swinlet
