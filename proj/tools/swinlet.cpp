// Command-line surface for the pipeline: dataset synthesis, analysis,
// training, fine-tuning, prediction, soups, evaluation, and gradcheck.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <swinlet/swinlet.hpp>

namespace fs = std::filesystem;
using namespace swinlet;

namespace {

struct GlobalOpts {
    std::string config_path;
    u64 seed = 0;
    std::string out_dir = "out";
    int threads = 0;  // 0: take from config
};

AppConfig load_app_config(const GlobalOpts& g) {
    AppConfig cfg = g.config_path.empty() ? AppConfig{} : load_config(g.config_path);
    if (g.threads > 0) cfg.run.threads = g.threads;
    return cfg;
}

void print_progress(const std::string& msg) { std::printf("[swinlet] %s\n", msg.c_str()); }

void save_stage_outputs(const TrainResult& r, const fs::path& out_dir, const std::string& tag) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    save_checkpoint(r.final_params, out_dir / (tag + "_final.ckpt"));
    save_checkpoint(r.best_params, out_dir / (tag + "_best.ckpt"));
    std::ofstream f(out_dir / (tag + "_metrics.csv"), std::ios::binary);
    f << kMetricsHeader << "\n";
    append_metrics_csv(r.log, f);
}

std::map<std::string, int> test_labels(const Manifest& m) {
    std::map<std::string, int> labels;
    for (const auto& r : m.rows) labels[r.sample_id] = r.class_id;
    return labels;
}

std::map<std::string, char> subsets_of(const Manifest& m) {
    std::map<std::string, char> s;
    for (const auto& r : m.rows) s[r.sample_id] = r.subset;
    return s;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"swinlet: windowed-attention image classification with K-fold data soups"};
    app.require_subcommand(0, 1);
    app.fallthrough();  // global flags may follow the subcommand

    GlobalOpts g;
    std::string schema_out;
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--seed", g.seed, "master seed")->default_val(0);
    app.add_option("--out-dir", g.out_dir, "output directory")->default_val("out");
    app.add_option("--threads", g.threads, "worker threads for independent fine-tune runs");
    app.add_flag_function(
        "--dump-config-schema",
        [&](i64) {
            std::cout << config_schema_markdown();
            std::exit(0);
        },
        "print the config schema as markdown and exit");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate the seeded synthetic two-subset dataset");
    // analyze
    std::string manifest_path, checkpoint_path;
    auto* analyze_cmd = app.add_subcommand("analyze", "class histogram, t-SNE embedding, overlap scores");
    analyze_cmd->add_option("--manifest", manifest_path, "manifest.csv")->required();
    analyze_cmd->add_option("--checkpoint", checkpoint_path, "use a trained model as the feature encoder");
    // kfold
    std::string kfold_out;
    int k_override = 0;
    auto* kfold_cmd = app.add_subcommand("kfold", "assign stratified folds to the train split");
    kfold_cmd->add_option("--manifest", manifest_path, "manifest.csv")->required();
    kfold_cmd->add_option("--k", k_override, "fold count (default from config)");
    kfold_cmd->add_option("--out", kfold_out, "output manifest path (default <out-dir>/manifest_folds.csv)");
    // train
    auto* train_cmd = app.add_subcommand("train", "joint training on both subsets");
    train_cmd->add_option("--manifest", manifest_path, "manifest.csv")->required();
    // finetune
    std::string subset_str = "A";
    int fold = 0;
    auto* ft_cmd = app.add_subcommand("finetune", "fine-tune one (subset, fold) from a joint checkpoint");
    ft_cmd->add_option("--manifest", manifest_path, "manifest.csv with folds assigned")->required();
    ft_cmd->add_option("--checkpoint", checkpoint_path, "joint checkpoint")->required();
    ft_cmd->add_option("--subset", subset_str, "A or B")->required();
    ft_cmd->add_option("--fold", fold, "held-out fold")->required();
    // predict
    std::string scores_out = "scores.csv", split = "test";
    bool no_tta = false;
    auto* predict_cmd = app.add_subcommand("predict", "TTA prediction scores for one subset");
    predict_cmd->add_option("--manifest", manifest_path, "manifest.csv")->required();
    predict_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    predict_cmd->add_option("--subset", subset_str, "A or B")->required();
    predict_cmd->add_option("--split", split, "train or test")->default_val("test");
    predict_cmd->add_option("--out", scores_out, "score CSV path")->default_val("scores.csv");
    predict_cmd->add_flag("--no-tta", no_tta, "single identity view");
    // soup
    std::vector<std::string> soup_inputs;
    std::string soup_out = "soup.csv";
    auto* soup_cmd = app.add_subcommand("soup", "average prediction-score files");
    soup_cmd->add_option("--out", soup_out, "output CSV")->default_val("soup.csv");
    soup_cmd->add_option("scores", soup_inputs, "input score CSVs")->required()->expected(-1);
    // eval
    std::string eval_scores;
    auto* eval_cmd = app.add_subcommand("eval", "per-subset accuracy and mAcc for a score file");
    eval_cmd->add_option("--scores", eval_scores, "score CSV")->required();
    eval_cmd->add_option("--manifest", manifest_path, "manifest.csv with labels")->required();
    // pipeline
    auto* pipeline_cmd = app.add_subcommand("pipeline", "full run: analyze, train, fine-tune, TTA, soups, report");
    pipeline_cmd->add_option("--manifest", manifest_path, "manifest.csv (default from config data.manifest)");
    // gradcheck
    std::string op_filter;
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference checks for every op");
    gradcheck_cmd->add_option("--op", op_filter, "run only the named check");

    CLI11_PARSE(app, argc, argv);

    try {
        const AppConfig cfg = load_app_config(g);
        const fs::path out_dir = g.out_dir;

        if (*synth_cmd) {
            SynthConfig sc = cfg.data.synth;
            sc.seed = g.seed;
            const Manifest m = generate_synthetic(sc, out_dir);
            std::printf("wrote %zu samples under %s (manifest.csv)\n", m.rows.size(), out_dir.string().c_str());
        } else if (*analyze_cmd) {
            const Manifest m = load_manifest(manifest_path);
            ImageStore store(m);
            std::unique_ptr<FeatureEncoder> enc;
            if (!checkpoint_path.empty())
                enc = std::make_unique<SwinletEncoder>(SwinletF::from_checkpoint(cfg.model, checkpoint_path),
                                                       cfg.augment);
            const AnalysisOutputs a = run_analysis(m, store, out_dir / "analysis", g.seed, enc.get());
            std::printf("overlap A train/test: %.3f\noverlap B train/test: %.3f\noverlap A vs B: %.3f\n",
                        a.overlap_split_a, a.overlap_split_b, a.overlap_subsets);
            std::printf("t-SNE KL %.4f -> %.4f (outputs in %s)\n", a.tsne_result.kl_initial,
                        a.tsne_result.kl_final, (out_dir / "analysis").string().c_str());
        } else if (*kfold_cmd) {
            const Manifest m = load_manifest(manifest_path);
            const int k = k_override > 0 ? k_override : cfg.run.k;
            const Manifest folded = with_folds(m, kfold_split(m, k, g.seed));
            fs::path outp = kfold_out.empty() ? out_dir / "manifest_folds.csv" : fs::path(kfold_out);
            std::error_code ec;
            fs::create_directories(outp.parent_path(), ec);
            save_manifest(folded, outp);
            std::printf("wrote %s (k=%d)\n", outp.string().c_str(), k);
        } else if (*train_cmd) {
            const Manifest m = load_manifest(manifest_path);
            ImageStore store(m);
            SwinletF model = SwinletF::build(cfg.model, StreamKey(g.seed).with("joint-init").value());
            StageSpec spec;
            spec.kind = StageSpec::Kind::Joint;
            OptimConfig oc = cfg.optim;
            oc.peak_lr = cfg.profile_peak_lr();
            print_progress("joint training (" + std::to_string(oc.total_epochs) + " epochs)");
            const TrainResult r = train_stage(model, m, spec, oc, cfg.augment, cfg.mix, g.seed, store);
            save_stage_outputs(r, out_dir, "joint");
            std::printf("final train loss %.5f; checkpoints under %s\n", r.log.back().train_loss,
                        out_dir.string().c_str());
        } else if (*ft_cmd) {
            check(subset_str == "A" || subset_str == "B", "--subset must be A or B");
            const Manifest m = load_manifest(manifest_path);
            ImageStore store(m);
            SwinletF model = SwinletF::from_checkpoint(cfg.model, checkpoint_path);
            StageSpec spec;
            spec.kind = StageSpec::Kind::FineTune;
            spec.subset = subset_str[0];
            spec.val_fold = fold;
            OptimConfig oc = cfg.stage_optim(false);
            print_progress("fine-tuning " + spec.name());
            const TrainResult r = train_stage(model, m, spec, oc, cfg.augment, cfg.mix, g.seed, store);
            save_stage_outputs(r, out_dir, "ft_" + subset_str + std::to_string(fold));
            std::printf("best val acc %.2f%% at epoch %d\n", r.best_val_acc, r.best_epoch);
        } else if (*predict_cmd) {
            check(subset_str == "A" || subset_str == "B", "--subset must be A or B");
            const Manifest m = load_manifest(manifest_path);
            ImageStore store(m);
            const SwinletF model = SwinletF::from_checkpoint(cfg.model, checkpoint_path);
            TtaConfig tta = cfg.tta;
            if (no_tta) tta.enabled = false;
            const auto rows = m.select(subset_str[0], split);
            check(!rows.empty(), "predict: no rows selected");
            const PredictionMatrix pm = predict_scores(model, rows, store, tta, cfg.augment, g.seed);
            save_scores(pm, scores_out);
            std::printf("wrote %s (%zu samples, %d views per sample)\n", scores_out.c_str(),
                        pm.sample_ids.size(), tta.enabled ? int(tta.scales.size()) * (tta.flip ? 2 : 1) + tta.n_views : 1);
        } else if (*soup_cmd) {
            std::vector<PredictionMatrix> mats;
            for (const auto& p : soup_inputs) mats.push_back(load_scores(p));
            save_scores(soup(mats), soup_out);
            std::printf("wrote %s (mean of %zu files)\n", soup_out.c_str(), mats.size());
        } else if (*eval_cmd) {
            const Manifest m = load_manifest(manifest_path, false);
            const PredictionMatrix pm = load_scores(eval_scores);
            const Metrics metrics = evaluate(pm, test_labels(m), subsets_of(m));
            const auto [num, den] = metrics.macc_rational();
            std::printf("acc A: %s%% (%lld/%lld)  acc B: %s%% (%lld/%lld)\n", format_g9(metrics.acc_a()).c_str(),
                        (long long)metrics.correct_a, (long long)metrics.total_a,
                        format_g9(metrics.acc_b()).c_str(), (long long)metrics.correct_b,
                        (long long)metrics.total_b);
            std::printf("mAcc: %s%% (display %s, exact %lld/%lld)\n", format_g9(metrics.macc()).c_str(),
                        display_pct(metrics.macc()).c_str(), (long long)num, (long long)den);
        } else if (*pipeline_cmd) {
            std::string mpath = manifest_path.empty() ? cfg.data.manifest : manifest_path;
            check(!mpath.empty(), "pipeline: pass --manifest or set data.manifest in the config");
            const PipelineResult r = run_pipeline(cfg, mpath, out_dir, g.seed, print_progress);
            for (const auto& ev : r.evaluations)
                std::printf("%-12s accA %s  accB %s  mAcc %s\n", ev.stage.c_str(),
                            display_pct(ev.metrics.acc_a()).c_str(), display_pct(ev.metrics.acc_b()).c_str(),
                            display_pct(ev.metrics.macc()).c_str());
        } else if (*gradcheck_cmd) {
            bool all_ok = true;
            for (const auto& [name, err] : run_gradcheck_suite()) {
                if (!op_filter.empty() && name != op_filter) continue;
                const bool ok = err < 1e-5;
                all_ok = all_ok && ok;
                std::printf("%-18s max rel err %.3e  %s\n", name.c_str(), err, ok ? "ok" : "FAIL");
            }
            return all_ok ? 0 : 1;
        } else {
            std::cout << app.help();
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
