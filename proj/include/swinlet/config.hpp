// JSON configuration: one document with sections mirroring the module
// configs, plus the generated schema doc listing every default.
#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "augment.hpp"
#include "manifest.hpp"
#include "mix.hpp"
#include "model.hpp"
#include "optim.hpp"
#include "synth.hpp"
#include "tsne.hpp"
#include "ensemble.hpp"

namespace swinlet {

struct RunConfig {
    int k = 5;
    int joint_epochs = 15;
    int joint_warmup_epochs = 2;
    int finetune_epochs = 10;
    int finetune_warmup_epochs = 1;
    int threads = 1;
    std::string lr_profile = "desk";  // "desk" (3e-4) or "paper" (1e-5)

    void validate() const {
        check(k >= 2, "RunConfig: k must be >= 2");
        check(joint_epochs > joint_warmup_epochs && finetune_epochs > finetune_warmup_epochs,
              "RunConfig: warmup must precede total epochs");
        check(threads >= 1, "RunConfig: threads must be >= 1");
        check(lr_profile == "desk" || lr_profile == "paper", "RunConfig: lr_profile must be desk or paper");
    }
};

struct DataConfig {
    std::string manifest;  // path to manifest.csv
    SynthConfig synth;
};

struct AppConfig {
    DataConfig data;
    ModelConfig model;
    AugConfig augment;
    MixConfig mix;
    OptimConfig optim;
    bool optim_peak_lr_set = false;  // explicit peak_lr overrides the profile
    TtaConfig tta;
    RunConfig run;

    double profile_peak_lr() const {
        if (optim_peak_lr_set) return optim.peak_lr;
        return run.lr_profile == "paper" ? 1e-5 : 3e-4;
    }

    OptimConfig stage_optim(bool joint) const {
        OptimConfig o = optim;
        o.peak_lr = profile_peak_lr();
        o.total_epochs = joint ? run.joint_epochs : run.finetune_epochs;
        o.warmup_epochs = joint ? run.joint_warmup_epochs : run.finetune_warmup_epochs;
        return o;
    }
};

namespace cfgjson {

using nlohmann::json;

template <typename T>
void get_to(const json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

inline void parse(const json& j, DataConfig& c) {
    get_to(j, "manifest", c.manifest);
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        get_to(s, "side", c.synth.side);
        get_to(s, "train_per_class", c.synth.train_per_class);
        get_to(s, "test_per_class", c.synth.test_per_class);
        get_to(s, "subset_hue_shift", c.synth.subset_hue_shift);
        get_to(s, "subset_contrast", c.synth.subset_contrast);
    }
}

inline void parse(const json& j, ModelConfig& c) {
    get_to(j, "input_size", c.input_size);
    get_to(j, "patch", c.patch);
    get_to(j, "window", c.window);
    get_to(j, "embed_dim", c.embed_dim);
    get_to(j, "depths", c.depths);
    get_to(j, "heads", c.heads);
    get_to(j, "num_classes", c.num_classes);
    get_to(j, "drop_path_rate", c.drop_path_rate);
}

inline void parse(const json& j, AugConfig& c) {
    get_to(j, "enabled", c.enabled);
    get_to(j, "crop_scale_out", c.crop_scale_out);
    get_to(j, "crop_scale_lo", c.crop_scale_lo);
    get_to(j, "crop_scale_hi", c.crop_scale_hi);
    get_to(j, "flip_prob", c.flip_prob);
    get_to(j, "randaug_n", c.randaug_n);
    get_to(j, "randaug_level", c.randaug_level);
    get_to(j, "erase_prob", c.erase_prob);
    get_to(j, "erase_area_lo", c.erase_area_lo);
    get_to(j, "erase_area_hi", c.erase_area_hi);
    get_to(j, "normalize_mean", c.normalize_mean);
    get_to(j, "normalize_std", c.normalize_std);
}

inline void parse(const json& j, MixConfig& c) {
    get_to(j, "enabled", c.enabled);
    get_to(j, "cutmix_alpha", c.cutmix_alpha);
    get_to(j, "mixup_alpha", c.mixup_alpha);
    get_to(j, "smoothing_eps", c.smoothing_eps);
}

inline void parse(const json& j, OptimConfig& c, bool& peak_set) {
    peak_set = j.contains("peak_lr");
    get_to(j, "peak_lr", c.peak_lr);
    get_to(j, "warmup_epochs", c.warmup_epochs);
    get_to(j, "total_epochs", c.total_epochs);
    get_to(j, "batch_size", c.batch_size);
    get_to(j, "weight_decay", c.weight_decay);
    get_to(j, "beta1", c.beta1);
    get_to(j, "beta2", c.beta2);
    get_to(j, "eps", c.eps);
    get_to(j, "eta_min", c.eta_min);
}

inline void parse(const json& j, TtaConfig& c) {
    get_to(j, "enabled", c.enabled);
    get_to(j, "scales", c.scales);
    get_to(j, "crop_lo", c.crop_lo);
    get_to(j, "crop_hi", c.crop_hi);
    get_to(j, "flip", c.flip);
    get_to(j, "n_views", c.n_views);
}

inline void parse(const json& j, RunConfig& c) {
    get_to(j, "k", c.k);
    get_to(j, "joint_epochs", c.joint_epochs);
    get_to(j, "joint_warmup_epochs", c.joint_warmup_epochs);
    get_to(j, "finetune_epochs", c.finetune_epochs);
    get_to(j, "finetune_warmup_epochs", c.finetune_warmup_epochs);
    get_to(j, "threads", c.threads);
    get_to(j, "lr_profile", c.lr_profile);
}

}  // namespace cfgjson

inline AppConfig parse_config(const nlohmann::json& j) {
    AppConfig c;
    if (j.contains("data")) cfgjson::parse(j.at("data"), c.data);
    if (j.contains("model")) cfgjson::parse(j.at("model"), c.model);
    if (j.contains("augment")) cfgjson::parse(j.at("augment"), c.augment);
    if (j.contains("mix")) cfgjson::parse(j.at("mix"), c.mix);
    if (j.contains("optim")) cfgjson::parse(j.at("optim"), c.optim, c.optim_peak_lr_set);
    if (j.contains("tta")) cfgjson::parse(j.at("tta"), c.tta);
    if (j.contains("run")) cfgjson::parse(j.at("run"), c.run);
    c.model.validate();
    c.augment.validate();
    c.mix.validate();
    c.tta.validate();
    c.run.validate();
    return c;
}

inline AppConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    check(bool(f), "load_config: cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const std::exception& e) {
        fail("load_config: " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

// Markdown doc of every config key and its default.
inline std::string config_schema_markdown() {
    const AppConfig d;
    std::ostringstream os;
    os << "# Configuration schema\n\n"
       << "One JSON document with the sections below. Every key is optional;\n"
       << "omitted keys take the listed default.\n\n";
    auto section = [&](const char* name) { os << "## `" << name << "`\n\n| key | default | notes |\n|---|---|---|\n"; };
    auto row = [&](const char* key, const std::string& def, const char* notes) {
        os << "| `" << key << "` | `" << def << "` | " << notes << " |\n";
    };
    auto num = [](double v) {
        std::ostringstream s;
        s << v;
        return s.str();
    };

    section("data");
    row("manifest", "\"\"", "path to manifest.csv; required by train/predict/pipeline");
    os << "\n### `data.synth`\n\n| key | default | notes |\n|---|---|---|\n";
    row("side", num(d.data.synth.side), "image side in pixels");
    row("train_per_class", num(d.data.synth.train_per_class), "per subset");
    row("test_per_class", num(d.data.synth.test_per_class), "per subset");
    row("subset_hue_shift", num(d.data.synth.subset_hue_shift), "hue offset applied to subset B");
    row("subset_contrast", num(d.data.synth.subset_contrast), "value-contrast scale for subset B");
    os << "\n";

    section("model");
    row("input_size", num(d.model.input_size), "square input side");
    row("patch", num(d.model.patch), "patch side");
    row("window", num(d.model.window), "attention window side in tokens");
    row("embed_dim", num(d.model.embed_dim), "stage-0 channel width");
    row("depths", "[2,2]", "blocks per stage");
    row("heads", "[2,4]", "attention heads per stage");
    row("num_classes", num(d.model.num_classes), "");
    row("drop_path_rate", num(d.model.drop_path_rate), "stochastic depth, linearly decayed over blocks");
    os << "\n";

    section("augment");
    row("enabled", "true", "disable for the augmentation-free profile");
    row("crop_scale_out", num(d.augment.crop_scale_out), "RandomResizedCrop output side");
    row("crop_scale_lo", num(d.augment.crop_scale_lo), "area-fraction range low");
    row("crop_scale_hi", num(d.augment.crop_scale_hi), "area-fraction range high (clamped to 1.0 of source)");
    row("flip_prob", num(d.augment.flip_prob), "");
    row("randaug_n", num(d.augment.randaug_n), "policies drawn per sample");
    row("randaug_level", num(d.augment.randaug_level), "magnitude level of 10");
    row("erase_prob", num(d.augment.erase_prob), "");
    row("erase_area_lo", num(d.augment.erase_area_lo), "");
    row("erase_area_hi", num(d.augment.erase_area_hi), "");
    row("normalize_mean", "[0.485,0.456,0.406]", "ImageNet mean");
    row("normalize_std", "[0.229,0.224,0.225]", "ImageNet std");
    os << "\n";

    section("mix");
    row("enabled", "true", "");
    row("cutmix_alpha", num(d.mix.cutmix_alpha), "");
    row("mixup_alpha", num(d.mix.mixup_alpha), "");
    row("smoothing_eps", num(d.mix.smoothing_eps), "label smoothing");
    os << "\n";

    section("optim");
    row("peak_lr", num(d.optim.peak_lr), "explicit value overrides run.lr_profile");
    row("warmup_epochs", num(d.optim.warmup_epochs), "used by the bare train subcommand");
    row("total_epochs", num(d.optim.total_epochs), "used by the bare train subcommand");
    row("batch_size", num(d.optim.batch_size), "");
    row("weight_decay", num(d.optim.weight_decay), "decoupled; skipped for bias/gamma/beta/tau");
    row("beta1", num(d.optim.beta1), "");
    row("beta2", num(d.optim.beta2), "");
    row("eps", num(d.optim.eps), "");
    row("eta_min", num(d.optim.eta_min), "cosine floor");
    os << "\n";

    section("tta");
    row("enabled", "true", "");
    row("scales", "[1.0,1.125,1.25]", "multiscale resize factors; must contain 1.0");
    row("crop_lo", num(d.tta.crop_lo), "random crop area ratio low");
    row("crop_hi", num(d.tta.crop_hi), "random crop area ratio high; >1 zooms out with reflect padding");
    row("flip", "true", "cross every scale with a horizontal flip");
    row("n_views", num(d.tta.n_views), "random resized-crop views per image");
    os << "\n";

    section("run");
    row("k", num(d.run.k), "folds");
    row("joint_epochs", num(d.run.joint_epochs), "");
    row("joint_warmup_epochs", num(d.run.joint_warmup_epochs), "");
    row("finetune_epochs", num(d.run.finetune_epochs), "");
    row("finetune_warmup_epochs", num(d.run.finetune_warmup_epochs), "");
    row("threads", num(d.run.threads), "fine-tune runs execute in parallel");
    row("lr_profile", "\"desk\"", "desk = peak 3e-4 (from-scratch), paper = peak 1e-5");
    return os.str();
}

}  // namespace swinlet
