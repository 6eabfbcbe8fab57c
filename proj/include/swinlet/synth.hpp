// Seeded synthetic two-subset dataset: class-conditional striped textures
// with a global hue/contrast shift on subset B, emulating two sub-datasets
// that look similar but are distributed differently.
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "image.hpp"
#include "manifest.hpp"
#include "rng.hpp"

namespace swinlet {

struct ClassTexture {
    double hue = 0;          // base hue in [0,1)
    double stripe_freq = 3;  // cycles across the image
    double noise = 0.04;     // value-channel gaussian noise
};

struct SynthConfig {
    int side = 64;
    int train_per_class = 50;
    int test_per_class = 20;
    double subset_hue_shift = 0.06;  // applied to subset B
    double subset_contrast = 0.85;   // value contrast scale for subset B
    std::vector<ClassTexture> classes;  // defaults to 7 generated textures
    u64 seed = 0;

    void validate() const {
        check(side >= 8, "SynthConfig: side must be >= 8");
        check(train_per_class >= 1 && test_per_class >= 1, "SynthConfig: counts must be >= 1");
        check(classes.empty() || int(classes.size()) == kNumClasses,
              "SynthConfig: classes must be empty (defaults) or exactly 7");
    }

    // Distinct hues carry most of the class signal; stripe frequency is a
    // secondary texture cue. Hue jitter is wide enough that the subset-B
    // shift pushes classes toward their neighbors, so a joint model faces
    // real cross-subset ambiguity that per-subset fine-tuning removes.
    std::vector<ClassTexture> effective_classes() const {
        if (!classes.empty()) return classes;
        std::vector<ClassTexture> out;
        for (int c = 0; c < kNumClasses; ++c)
            out.push_back({double(c) / kNumClasses, 2.0 + 1.5 * c, 0.05 + 0.01 * (c % 3)});
        return out;
    }
};

inline Image synth_image(const SynthConfig& cfg, char subset, int class_id, const std::string& split, int index) {
    const std::vector<ClassTexture> classes = cfg.effective_classes();
    const ClassTexture& tex = classes[size_t(class_id)];
    Rng rng = StreamKey(cfg.seed)
                  .with("synth")
                  .with(u64(subset))
                  .with(class_id)
                  .with(split)
                  .with(index)
                  .rng();
    const double theta = rng.uniform(0.0, M_PI);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.20, 0.35);
    const double sat = rng.uniform(0.45, 0.85);
    const double val0 = rng.uniform(0.42, 0.60);
    const double hue_jitter = rng.uniform(-0.05, 0.05);
    const bool is_b = subset == 'B';
    const double hue = tex.hue + hue_jitter + (is_b ? cfg.subset_hue_shift : 0.0);
    const double contrast = is_b ? cfg.subset_contrast : 1.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double ct2 = std::cos(theta + 1.1), st2 = std::sin(theta + 1.1);

    Image img(cfg.side, cfg.side);
    for (int y = 0; y < cfg.side; ++y) {
        for (int x = 0; x < cfg.side; ++x) {
            const double u = double(x) / cfg.side, v = double(y) / cfg.side;
            const double s1 = std::sin(2.0 * M_PI * tex.stripe_freq * (u * ct + v * st) + phase);
            const double s2 = std::sin(2.0 * M_PI * tex.stripe_freq * 2.3 * (u * ct2 + v * st2) + phase * 1.7);
            double val = val0 + 0.5 * amp * s1 + 0.2 * amp * s2 + tex.noise * rng.normal();
            val = 0.5 + (val - 0.5) * contrast;
            float r, g, b;
            hsv_to_rgb(hue, sat, std::clamp(val, 0.0, 1.0), r, g, b);
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    }
    return img;
}

// Writes PPM images plus manifest.csv under out_dir; returns the manifest.
inline Manifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    check(!ec && fs::is_directory(out_dir), "generate_synthetic: cannot create " + out_dir.string());

    Manifest m;
    m.base_dir = out_dir;
    char idbuf[96], pathbuf[128];
    for (char subset : {'A', 'B'}) {
        for (const char* split : {"train", "test"}) {
            const int count = std::string(split) == "train" ? cfg.train_per_class : cfg.test_per_class;
            const fs::path dir = out_dir / "images" / std::string(1, subset) / split;
            fs::create_directories(dir, ec);
            check(!ec, "generate_synthetic: cannot create " + dir.string());
            for (int c = 0; c < kNumClasses; ++c) {
                for (int i = 0; i < count; ++i) {
                    std::snprintf(idbuf, sizeof idbuf, "%c-%s-c%d-%04d", subset, split, c, i);
                    std::snprintf(pathbuf, sizeof pathbuf, "images/%c/%s/c%d_%04d.ppm", subset, split, c, i);
                    write_ppm(synth_image(cfg, subset, c, split, i), out_dir / pathbuf);
                    ManifestRow row;
                    row.sample_id = idbuf;
                    row.relpath = pathbuf;
                    row.subset = subset;
                    row.class_id = c;
                    row.split = split;
                    row.fold = -1;
                    m.rows.push_back(std::move(row));
                }
            }
        }
    }
    save_manifest(m, out_dir / "manifest.csv");
    return m;
}

}  // namespace swinlet
