// Training-time augmentations: RandomResizedCrop, HorizontalFlip, a
// 15-policy RandAugment pool, RandomErasing, and input normalization.
//
// Pool policies compute on the integerized view round(p*255) and then
// renormalize, which keeps Posterize/Equalize well-defined and lets tests
// compare against a per-pixel reference bit-exactly.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace swinlet {

struct AugConfig {
    bool enabled = true;
    int crop_scale_out = 64;
    double crop_scale_lo = 0.4, crop_scale_hi = 1.6;  // area fraction range
    double flip_prob = 0.5;
    int randaug_n = 2;
    double randaug_level = 9.0;  // of 10
    double erase_prob = 0.25;
    double erase_area_lo = 0.01, erase_area_hi = 0.1;
    std::array<double, 3> normalize_mean{0.485, 0.456, 0.406};
    std::array<double, 3> normalize_std{0.229, 0.224, 0.225};

    void validate() const {
        check(crop_scale_lo <= crop_scale_hi && erase_area_lo <= erase_area_hi, "AugConfig: ranges must be ordered");
        check(flip_prob >= 0 && flip_prob <= 1 && erase_prob >= 0 && erase_prob <= 1,
              "AugConfig: probabilities must be in [0,1]");
        check(randaug_level >= 0 && randaug_level <= 10, "AugConfig: level must be in [0,10]");
        for (double s : normalize_std) check(s > 0, "AugConfig: normalize std must be positive");
    }
};

enum class Policy {
    AutoContrast,
    Equalize,
    Invert,
    Rotate,
    Posterize,
    Solarize,
    SolarizeAdd,
    ColorTransform,
    Contrast,
    Brightness,
    Sharpness,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
};

inline const std::array<Policy, 15>& policy_pool() {
    static const std::array<Policy, 15> pool = {
        Policy::AutoContrast, Policy::Equalize,  Policy::Invert,     Policy::Rotate,     Policy::Posterize,
        Policy::Solarize,     Policy::SolarizeAdd, Policy::ColorTransform, Policy::Contrast, Policy::Brightness,
        Policy::Sharpness,    Policy::ShearX,    Policy::ShearY,     Policy::TranslateX, Policy::TranslateY,
    };
    return pool;
}

inline const char* policy_name(Policy p) {
    switch (p) {
        case Policy::AutoContrast: return "AutoContrast";
        case Policy::Equalize: return "Equalize";
        case Policy::Invert: return "Invert";
        case Policy::Rotate: return "Rotate";
        case Policy::Posterize: return "Posterize";
        case Policy::Solarize: return "Solarize";
        case Policy::SolarizeAdd: return "SolarizeAdd";
        case Policy::ColorTransform: return "ColorTransform";
        case Policy::Contrast: return "Contrast";
        case Policy::Brightness: return "Brightness";
        case Policy::Sharpness: return "Sharpness";
        case Policy::ShearX: return "ShearX";
        case Policy::ShearY: return "ShearY";
        case Policy::TranslateX: return "TranslateX";
        case Policy::TranslateY: return "TranslateY";
    }
    fail("unknown policy");
}

inline Policy policy_from_name(const std::string& name) {
    for (Policy p : policy_pool())
        if (name == policy_name(p)) return p;
    fail("unknown policy name '" + name + "'");
}

// Level-to-parameter mappings, monotone in level m of [0,10].
namespace aug_level {
inline double rotate_deg(double m) { return 30.0 * m / 10.0; }
inline double shear(double m) { return 0.3 * m / 10.0; }
inline double translate_frac(double m) { return 0.45 * m / 10.0; }
inline int posterize_bits(double m) { return 8 - int(std::floor(4.0 * m / 10.0)); }
inline int solarize_threshold(double m) { return std::clamp(255 - int(std::floor(255.0 * m / 10.0)), 0, 255); }
inline int solarize_add(double m) { return int(std::floor(110.0 * m / 10.0)); }
inline double blend_delta(double m) { return 0.9 * m / 10.0; }
}  // namespace aug_level

// ---- integerized view --------------------------------------------------------

struct U8Image {
    int h = 0, w = 0;
    std::vector<int> px;  // values 0..255

    U8Image() = default;
    U8Image(int height, int width) : h(height), w(width), px(size_t(height) * size_t(width) * 3, 0) {}
    int& at(int y, int x, int c) { return px[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(c)]; }
    int at(int y, int x, int c) const { return px[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(c)]; }
};

inline U8Image to_u8(const Image& img) {
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = quantize255(img.px[i]);
    return out;
}

inline Image from_u8(const U8Image& img) {
    Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = float(img.px[i]) / 255.f;
    return out;
}

namespace detail {

constexpr int kAffineFill = 128;

// Inverse-mapped affine: out(y,x) samples src at A*(x,y)+t, bilinear with
// constant fill outside.
inline U8Image affine_u8(const U8Image& src, double a00, double a01, double a10, double a11, double tx, double ty) {
    U8Image out(src.h, src.w);
    auto tap = [&](int y, int x, int c) -> double {
        if (y < 0 || y >= src.h || x < 0 || x >= src.w) return double(kAffineFill);
        return double(src.at(y, x, c));
    };
    for (int y = 0; y < src.h; ++y) {
        for (int x = 0; x < src.w; ++x) {
            const double sx = a00 * x + a01 * y + tx;
            const double sy = a10 * x + a11 * y + ty;
            const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
            const double wx = sx - x0, wy = sy - y0;
            for (int c = 0; c < 3; ++c) {
                const double top = tap(y0, x0, c) * (1 - wx) + tap(y0, x0 + 1, c) * wx;
                const double bot = tap(y0 + 1, x0, c) * (1 - wx) + tap(y0 + 1, x0 + 1, c) * wx;
                const double v = top * (1 - wy) + bot * wy;
                out.at(y, x, c) = std::clamp(int(std::lround(v)), 0, 255);
            }
        }
    }
    return out;
}

inline U8Image blend_u8(const U8Image& degenerate, const U8Image& img, double f) {
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) {
        const double v = (1.0 - f) * double(degenerate.px[i]) + f * double(img.px[i]);
        out.px[i] = std::clamp(int(std::lround(v)), 0, 255);
    }
    return out;
}

inline U8Image gray_constant(const U8Image& img) {
    // mean of per-pixel luma, one constant gray
    double sum = 0;
    const size_t n = size_t(img.h) * size_t(img.w);
    for (size_t i = 0; i < n; ++i)
        sum += 0.299 * img.px[i * 3] + 0.587 * img.px[i * 3 + 1] + 0.114 * img.px[i * 3 + 2];
    const int g = std::clamp(int(std::lround(sum / double(n))), 0, 255);
    U8Image out(img.h, img.w);
    std::fill(out.px.begin(), out.px.end(), g);
    return out;
}

inline U8Image grayscale(const U8Image& img) {
    U8Image out(img.h, img.w);
    const size_t n = size_t(img.h) * size_t(img.w);
    for (size_t i = 0; i < n; ++i) {
        const int g = std::clamp(
            int(std::lround(0.299 * img.px[i * 3] + 0.587 * img.px[i * 3 + 1] + 0.114 * img.px[i * 3 + 2])), 0, 255);
        out.px[i * 3] = out.px[i * 3 + 1] = out.px[i * 3 + 2] = g;
    }
    return out;
}

// 3x3 kernel [[1,1,1],[1,5,1],[1,1,1]]/13 with clamped edges.
inline U8Image smooth3x3(const U8Image& img) {
    U8Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double acc = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = std::clamp(y + dy, 0, img.h - 1);
                        const int xx = std::clamp(x + dx, 0, img.w - 1);
                        acc += double(img.at(yy, xx, c)) * ((dy == 0 && dx == 0) ? 5.0 : 1.0);
                    }
                }
                out.at(y, x, c) = std::clamp(int(std::lround(acc / 13.0)), 0, 255);
            }
        }
    }
    return out;
}

}  // namespace detail

// ---- point policies (exposed for the oracle tests) ---------------------------

inline U8Image invert_u8(const U8Image& img) {
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = 255 - img.px[i];
    return out;
}

inline U8Image solarize_u8(const U8Image& img, int threshold) {
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i] >= threshold ? 255 - img.px[i] : img.px[i];
    return out;
}

inline U8Image solarize_add_u8(const U8Image& img, int add) {
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = img.px[i] < 128 ? std::min(img.px[i] + add, 255) : img.px[i];
    return out;
}

inline U8Image posterize_u8(const U8Image& img, int bits) {
    check(bits >= 1 && bits <= 8, "posterize: bits in [1,8]");
    const int mask = ~((1 << (8 - bits)) - 1);
    U8Image out(img.h, img.w);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i] & mask;
    return out;
}

inline U8Image autocontrast_u8(const U8Image& img) {
    U8Image out(img.h, img.w);
    const size_t n = size_t(img.h) * size_t(img.w);
    for (int c = 0; c < 3; ++c) {
        int lo = 255, hi = 0;
        for (size_t i = 0; i < n; ++i) {
            lo = std::min(lo, img.px[i * 3 + size_t(c)]);
            hi = std::max(hi, img.px[i * 3 + size_t(c)]);
        }
        for (size_t i = 0; i < n; ++i) {
            const int v = img.px[i * 3 + size_t(c)];
            out.px[i * 3 + size_t(c)] =
                hi <= lo ? v : std::clamp(int(std::lround(double(v - lo) * 255.0 / double(hi - lo))), 0, 255);
        }
    }
    return out;
}

inline U8Image equalize_u8(const U8Image& img) {
    // PIL-style per-channel histogram equalization
    U8Image out(img.h, img.w);
    const size_t n = size_t(img.h) * size_t(img.w);
    for (int c = 0; c < 3; ++c) {
        std::array<i64, 256> hist{};
        for (size_t i = 0; i < n; ++i) hist[size_t(img.px[i * 3 + size_t(c)])]++;
        i64 total = 0, last_nonzero = 0;
        for (int v = 0; v < 256; ++v) {
            if (hist[size_t(v)]) {
                total += hist[size_t(v)];
                last_nonzero = hist[size_t(v)];
            }
        }
        std::array<int, 256> lut{};
        const i64 step = (total - last_nonzero) / 255;
        if (step == 0) {
            for (int v = 0; v < 256; ++v) lut[size_t(v)] = v;
        } else {
            i64 acc = step / 2;
            for (int v = 0; v < 256; ++v) {
                lut[size_t(v)] = int(std::clamp<i64>(acc / step, 0, 255));
                acc += hist[size_t(v)];
            }
        }
        for (size_t i = 0; i < n; ++i) out.px[i * 3 + size_t(c)] = lut[size_t(img.px[i * 3 + size_t(c)])];
    }
    return out;
}

// ---- ops ----------------------------------------------------------------

struct AugLog {
    int center_crop_fallbacks = 0;
};

inline Image random_resized_crop(const Image& img, const AugConfig& cfg, Rng& rng, AugLog* log = nullptr) {
    check(img.h >= 8 && img.w >= 8, "random_resized_crop: image must be at least 8x8");
    const double src_area = double(img.h) * double(img.w);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double frac = std::min(rng.uniform(cfg.crop_scale_lo, cfg.crop_scale_hi), 1.0);
        const double area = frac * src_area;
        const double aspect = std::exp(rng.uniform(std::log(3.0 / 4.0), std::log(4.0 / 3.0)));
        const int cw = int(std::lround(std::sqrt(area * aspect)));
        const int ch = int(std::lround(std::sqrt(area / aspect)));
        if (cw >= 1 && ch >= 1 && cw <= img.w && ch <= img.h) {
            const int y0 = int(rng.range(0, img.h - ch));
            const int x0 = int(rng.range(0, img.w - cw));
            return resize_bilinear(crop(img, y0, x0, ch, cw), cfg.crop_scale_out, cfg.crop_scale_out);
        }
    }
    if (log) log->center_crop_fallbacks++;
    const int side = std::min(img.h, img.w);
    return resize_bilinear(center_crop(img, side), cfg.crop_scale_out, cfg.crop_scale_out);
}

// Crop with the area fraction and aspect pinned instead of sampled.
inline Image resized_crop_forced(const Image& img, const AugConfig& cfg, double area_frac, double aspect,
                                 int y0 = 0, int x0 = 0) {
    const double area = std::min(area_frac, 1.0) * double(img.h) * double(img.w);
    const int cw = int(std::lround(std::sqrt(area * aspect)));
    const int ch = int(std::lround(std::sqrt(area / aspect)));
    return resize_bilinear(crop(img, y0, x0, ch, cw), cfg.crop_scale_out, cfg.crop_scale_out);
}

inline Image horizontal_flip(const Image& img) { return hflip(img); }

inline Image apply_policy(const Image& img, Policy policy, double level, Rng& rng) {
    check(level >= 0 && level <= 10, "apply_policy: level must be in [0,10]");
    const U8Image u = to_u8(img);
    const double cx = (img.w - 1) / 2.0, cy = (img.h - 1) / 2.0;
    switch (policy) {
        case Policy::AutoContrast: return from_u8(autocontrast_u8(u));
        case Policy::Equalize: return from_u8(equalize_u8(u));
        case Policy::Invert: return from_u8(invert_u8(u));
        case Policy::Posterize: return from_u8(posterize_u8(u, aug_level::posterize_bits(level)));
        case Policy::Solarize: return from_u8(solarize_u8(u, aug_level::solarize_threshold(level)));
        case Policy::SolarizeAdd: return from_u8(solarize_add_u8(u, aug_level::solarize_add(level)));
        case Policy::Rotate: {
            const double sign = rng.coin() ? 1.0 : -1.0;
            const double a = sign * aug_level::rotate_deg(level) * M_PI / 180.0;
            // inverse rotation about the center
            const double ca = std::cos(a), sa = std::sin(a);
            return from_u8(detail::affine_u8(u, ca, sa, -sa, ca, cx - ca * cx - sa * cy, cy + sa * cx - ca * cy));
        }
        case Policy::ShearX: {
            const double s = (rng.coin() ? 1.0 : -1.0) * aug_level::shear(level);
            return from_u8(detail::affine_u8(u, 1, -s, 0, 1, s * cy, 0));
        }
        case Policy::ShearY: {
            const double s = (rng.coin() ? 1.0 : -1.0) * aug_level::shear(level);
            return from_u8(detail::affine_u8(u, 1, 0, -s, 1, 0, s * cx));
        }
        case Policy::TranslateX: {
            const double t = (rng.coin() ? 1.0 : -1.0) * aug_level::translate_frac(level) * img.w;
            return from_u8(detail::affine_u8(u, 1, 0, 0, 1, -t, 0));
        }
        case Policy::TranslateY: {
            const double t = (rng.coin() ? 1.0 : -1.0) * aug_level::translate_frac(level) * img.h;
            return from_u8(detail::affine_u8(u, 1, 0, 0, 1, 0, -t));
        }
        case Policy::Brightness:
        case Policy::Contrast:
        case Policy::ColorTransform:
        case Policy::Sharpness: {
            const double f = 1.0 + (rng.coin() ? 1.0 : -1.0) * aug_level::blend_delta(level);
            U8Image degenerate;
            if (policy == Policy::Brightness)
                degenerate = U8Image(img.h, img.w);  // black
            else if (policy == Policy::Contrast)
                degenerate = detail::gray_constant(u);
            else if (policy == Policy::ColorTransform)
                degenerate = detail::grayscale(u);
            else
                degenerate = detail::smooth3x3(u);
            return from_u8(detail::blend_u8(degenerate, u, f));
        }
    }
    fail("apply_policy: unknown policy");
}

// Draws n policies uniformly with replacement and applies them in order.
inline Image rand_augment(const Image& img, const AugConfig& cfg, Rng& rng,
                          const std::vector<Policy>& pool = {}) {
    const auto& full = policy_pool();
    const std::vector<Policy> use = pool.empty() ? std::vector<Policy>(full.begin(), full.end()) : pool;
    check(!use.empty(), "rand_augment: empty policy pool");
    Image out = img;
    for (int i = 0; i < cfg.randaug_n; ++i) {
        const Policy p = use[size_t(rng.below(use.size()))];
        out = apply_policy(out, p, cfg.randaug_level, rng);
    }
    return out;
}

inline Image random_erasing(const Image& img, const AugConfig& cfg, Rng& rng) {
    if (rng.uniform() >= cfg.erase_prob) return img;
    Image out = img;
    const double src_area = double(img.h) * double(img.w);
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double area = rng.uniform(cfg.erase_area_lo, cfg.erase_area_hi) * src_area;
        const double aspect = std::exp(rng.uniform(std::log(0.3), std::log(3.3)));
        const int ew = int(std::lround(std::sqrt(area * aspect)));
        const int eh = int(std::lround(std::sqrt(area / aspect)));
        if (ew >= 1 && eh >= 1 && ew <= img.w && eh <= img.h) {
            const int y0 = int(rng.range(0, img.h - eh));
            const int x0 = int(rng.range(0, img.w - ew));
            for (int y = y0; y < y0 + eh; ++y)
                for (int x = x0; x < x0 + ew; ++x)
                    for (int c = 0; c < 3; ++c) out.at(y, x, c) = float(rng.uniform());
            return out;
        }
    }
    return out;  // no feasible rectangle found
}

// Output values are unbounded; this is the last step before the model.
inline Image normalize(const Image& img, const std::array<double, 3>& mean, const std::array<double, 3>& std) {
    for (double s : std) check(s > 0, "normalize: std must be positive");
    Image out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = float((double(img.at(y, x, c)) - mean[size_t(c)]) / std[size_t(c)]);
    return out;
}

// The full per-sample train-time chain (before normalization).
inline Image augment_sample(const Image& img, const AugConfig& cfg, Rng& rng, AugLog* log = nullptr) {
    if (!cfg.enabled) {
        if (img.h == cfg.crop_scale_out && img.w == cfg.crop_scale_out) return img;
        return resize_bilinear(img, cfg.crop_scale_out, cfg.crop_scale_out);
    }
    Image out = random_resized_crop(img, cfg, rng, log);
    if (rng.uniform() < cfg.flip_prob) out = horizontal_flip(out);
    out = rand_augment(out, cfg, rng);
    out = random_erasing(out, cfg, rng);
    return out;
}

}  // namespace swinlet
