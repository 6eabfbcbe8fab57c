#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include <swinlet/synth.hpp>
#include <swinlet/train.hpp>

using namespace swinlet;
namespace fs = std::filesystem;

namespace {

struct TrainFixture {
    fs::path dir;
    Manifest manifest;
    ModelConfig model_cfg;

    explicit TrainFixture(int train_per_class, int test_per_class, int k = 0, u64 seed = 5) {
        dir = fs::temp_directory_path() /
              ("swinlet_train_" + std::to_string(train_per_class) + "_" + std::to_string(seed));
        std::error_code ec;
        fs::remove_all(dir, ec);
        SynthConfig scfg;
        scfg.side = 32;
        scfg.train_per_class = train_per_class;
        scfg.test_per_class = test_per_class;
        scfg.seed = seed;
        manifest = generate_synthetic(scfg, dir);
        if (k > 0) manifest = with_folds(manifest, kfold_split(manifest, k, seed));
        model_cfg.input_size = 32;
        model_cfg.embed_dim = 8;
        model_cfg.depths = {1};
        model_cfg.heads = {1};
        model_cfg.drop_path_rate = 0.0;
    }
    ~TrainFixture() {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
};

OptimConfig fast_optim(int epochs, double lr) {
    OptimConfig cfg;
    cfg.total_epochs = epochs;
    cfg.warmup_epochs = epochs > 1 ? 1 : 0;
    cfg.batch_size = 4;
    cfg.peak_lr = lr;
    return cfg;
}

}  // namespace

TEST_CASE("two epochs of training reduce the loss", "[train]") {
    TrainFixture fix(1, 1);  // 7 samples per subset
    ImageStore store(fix.manifest);
    SwinletF model = SwinletF::build(fix.model_cfg, 1);
    StageSpec spec;  // joint
    AugConfig aug;
    aug.enabled = false;
    aug.crop_scale_out = 32;
    MixConfig mix;
    mix.enabled = false;
    const TrainResult r = train_stage(model, fix.manifest, spec, fast_optim(2, 3e-3), aug, mix, 3, store);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log.back().train_loss < r.log.front().train_loss);
}

TEST_CASE("no-op training keeps the loss constant", "[train]") {
    TrainFixture fix(1, 1);
    // keep exactly 8 samples so batches of 4 tile every epoch: subset A only
    Manifest sub = fix.manifest;
    sub.rows.clear();
    for (const auto& r : fix.manifest.rows)
        if (r.subset == 'A' && r.split == "train") sub.rows.push_back(r);
    {  // pad to 8 with one test-split promotion to keep pairs even
        for (const auto& r : fix.manifest.rows)
            if (r.subset == 'A' && r.split == "test" && sub.rows.size() < 8) {
                ManifestRow promoted = r;
                promoted.split = "train";
                sub.rows.push_back(promoted);
            }
    }
    REQUIRE(sub.rows.size() == 8);
    ImageStore store(sub);
    SwinletF model = SwinletF::build(fix.model_cfg, 2);
    StageSpec spec;
    AugConfig aug;
    aug.enabled = false;
    aug.crop_scale_out = 32;
    MixConfig mix;
    mix.enabled = false;
    const TrainResult r = train_stage(model, sub, spec, fast_optim(3, 0.0), aug, mix, 4, store);
    REQUIRE(r.log.size() == 3);
    for (const auto& e : r.log) CHECK(e.train_loss == Catch::Approx(r.log[0].train_loss).margin(1e-6));
}

TEST_CASE("training is bitwise deterministic per seed", "[train]") {
    TrainFixture fix(2, 1);
    ImageStore store(fix.manifest);
    AugConfig aug;
    aug.crop_scale_out = 32;
    MixConfig mix;
    auto run = [&]() {
        SwinletF model = SwinletF::build(fix.model_cfg, 7);
        StageSpec spec;
        const TrainResult r = train_stage(model, fix.manifest, spec, fast_optim(2, 1e-3), aug, mix, 11, store);
        return std::make_pair(r, model.params);
    };
    const auto [r1, p1] = run();
    const auto [r2, p2] = run();
    for (size_t i = 0; i < r1.log.size(); ++i) CHECK(r1.log[i].train_loss == r2.log[i].train_loss);
    for (const auto& [name, t] : p1) CHECK(t.data == p2.at(name).data);
}

TEST_CASE("fine-tune stages exclude and validate the held-out fold", "[train]") {
    TrainFixture fix(2, 1, /*k=*/2);
    ImageStore store(fix.manifest);
    SwinletF model = SwinletF::build(fix.model_cfg, 9);
    StageSpec spec;
    spec.kind = StageSpec::Kind::FineTune;
    spec.subset = 'A';
    spec.val_fold = 0;
    AugConfig aug;
    aug.enabled = false;
    aug.crop_scale_out = 32;
    MixConfig mix;
    mix.enabled = false;
    const TrainResult r = train_stage(model, fix.manifest, spec, fast_optim(2, 1e-3), aug, mix, 13, store);
    REQUIRE(r.log.size() == 2);
    for (const auto& e : r.log) {
        CHECK(e.subset == "A");
        CHECK(e.fold == 0);
        CHECK(!std::isnan(e.val_acc));
    }
    CHECK(r.best_epoch >= 0);
}

TEST_CASE("continuous fine-tuning needs k of at least 2", "[train]") {
    TrainFixture fix(2, 1, 2);
    ImageStore store(fix.manifest);
    CHECK_THROWS_WITH(continuous_finetune(fix.manifest, 1, fix.model_cfg, fast_optim(1, 1e-3),
                                          fast_optim(1, 1e-3), AugConfig{}, MixConfig{}, 1, store),
                      Catch::Matchers::ContainsSubstring("k must be >= 2"));
}

TEST_CASE("continuous fine-tuning yields 2k diverged checkpoints", "[train]") {
    TrainFixture fix(2, 1, 2);
    ImageStore store(fix.manifest);
    AugConfig aug;
    aug.enabled = false;
    aug.crop_scale_out = 32;
    MixConfig mix;
    mix.enabled = false;
    const ContinuousFinetuneResult r = continuous_finetune(fix.manifest, 2, fix.model_cfg, fast_optim(1, 1e-3),
                                                           fast_optim(1, 1e-3), aug, mix, 21, store);
    REQUIRE(r.runs.size() == 4);  // 2 subsets x 2 folds
    for (const auto& run : r.runs) {
        double delta = 0;
        for (const auto& [name, t] : run.best_params) {
            const TensorF& joint = r.joint_params.at(name);
            for (i64 i = 0; i < t.numel(); ++i) delta += std::fabs(double(t[i]) - double(joint[i]));
        }
        INFO("subset " << run.subset << " fold " << run.fold);
        CHECK(delta > 0.0);
    }
    // runs come back ordered: A folds ascending, then B
    CHECK(r.runs[0].subset == 'A');
    CHECK(r.runs[0].fold == 0);
    CHECK(r.runs[3].subset == 'B');
    CHECK(r.runs[3].fold == 1);
}

TEST_CASE("parallel fine-tuning matches the sequential result", "[train]") {
    TrainFixture fix(2, 1, 2);
    ImageStore s1(fix.manifest), s2(fix.manifest);
    AugConfig aug;
    aug.crop_scale_out = 32;
    MixConfig mix;
    const auto seq = continuous_finetune(fix.manifest, 2, fix.model_cfg, fast_optim(1, 1e-3),
                                         fast_optim(1, 1e-3), aug, mix, 31, s1, 1);
    const auto par = continuous_finetune(fix.manifest, 2, fix.model_cfg, fast_optim(1, 1e-3),
                                         fast_optim(1, 1e-3), aug, mix, 31, s2, 3);
    REQUIRE(seq.runs.size() == par.runs.size());
    for (size_t i = 0; i < seq.runs.size(); ++i)
        for (const auto& [name, t] : seq.runs[i].best_params) CHECK(t.data == par.runs[i].best_params.at(name).data);
}

TEST_CASE("training rejects an empty stage selection", "[train]") {
    TrainFixture fix(2, 1, 2);
    ImageStore store(fix.manifest);
    SwinletF model = SwinletF::build(fix.model_cfg, 9);
    StageSpec spec;
    spec.kind = StageSpec::Kind::FineTune;
    spec.subset = 'A';
    spec.val_fold = 7;  // no such fold: training data exists, but exclusion leaves val empty
    Manifest only_b = fix.manifest;
    only_b.rows.erase(std::remove_if(only_b.rows.begin(), only_b.rows.end(),
                                     [](const ManifestRow& r) { return r.subset == 'A'; }),
                      only_b.rows.end());
    CHECK_THROWS_WITH(
        train_stage(model, only_b, spec, fast_optim(1, 1e-3), AugConfig{}, MixConfig{}, 1, store),
        Catch::Matchers::ContainsSubstring("no training data"));
}

TEST_CASE("metrics log lines carry the schema fields", "[train]") {
    std::vector<EpochLog> logs(1);
    logs[0].epoch = 3;
    logs[0].stage = "joint";
    logs[0].subset = "AB";
    logs[0].fold = -1;
    logs[0].train_loss = 1.5;
    logs[0].lr = 2.5e-4;
    std::ostringstream os;
    append_metrics_csv(logs, os);
    CHECK(os.str() == "3,joint,AB,-1,1.5,nan,0.00025\n");
}
