// Float RGB images in [0,1], PPM (P6) io, and resampling helpers.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"
#include "tensor.hpp"

namespace swinlet {

struct Image {
    int h = 0, w = 0;
    std::vector<float> px;  // h*w*3 row-major, RGB

    Image() = default;
    Image(int height, int width) : h(height), w(width), px(size_t(height) * size_t(width) * 3, 0.f) {}

    float& at(int y, int x, int c) { return px[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(c)]; }
    float at(int y, int x, int c) const { return px[(size_t(y) * size_t(w) + size_t(x)) * 3 + size_t(c)]; }

    bool in_unit_range() const {
        for (float v : px)
            if (!(v >= 0.f && v <= 1.f)) return false;
        return true;
    }
};

inline int quantize255(float v) {
    const float c = std::min(1.f, std::max(0.f, v));
    return int(std::lround(double(c) * 255.0));
}

// ---- PPM (P6, 8-bit) ------------------------------------------------------

inline void write_ppm(const Image& img, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    check(bool(f), "write_ppm: cannot open " + path.string());
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) row[size_t(x) * 3 + size_t(c)] = (unsigned char)quantize255(img.at(y, x, c));
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    check(bool(f), "write_ppm: short write to " + path.string());
}

namespace detail {
inline int ppm_token(std::istream& in) {
    // skips whitespace and '#' comments
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            int v = 0;
            check(std::isdigit(c), "read_ppm: malformed header");
            while (c != EOF && std::isdigit(c)) {
                v = v * 10 + (c - '0');
                c = in.get();
            }
            return v;
        }
    }
    fail("read_ppm: unexpected end of header");
}
}  // namespace detail

inline Image read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    check(bool(f), "read_ppm: cannot open " + path.string());
    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    check(m0 == 'P' && m1 == '6', "read_ppm: not a P6 file: " + path.string());
    const int w = detail::ppm_token(f);
    const int h = detail::ppm_token(f);
    const int maxval = detail::ppm_token(f);
    check(maxval == 255, "read_ppm: only maxval 255 supported: " + path.string());
    // single whitespace byte after maxval is already consumed by token scan
    Image img(h, w);
    std::vector<unsigned char> buf(size_t(w) * size_t(h) * 3);
    f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
    check(f.gcount() == std::streamsize(buf.size()), "read_ppm: truncated pixel data: " + path.string());
    for (size_t i = 0; i < buf.size(); ++i) img.px[i] = float(buf[i]) / 255.f;
    return img;
}

// ---- resampling -------------------------------------------------------------

// Output pixel centers map to input coordinates, edges clamped.
inline Image resize_bilinear(const Image& src, int oh, int ow) {
    check(oh > 0 && ow > 0, "resize_bilinear: output must be positive");
    Image out(oh, ow);
    const double sy = double(src.h) / double(oh);
    const double sx = double(src.w) / double(ow);
    for (int y = 0; y < oh; ++y) {
        const double fy = (double(y) + 0.5) * sy - 0.5;
        const int y0 = std::clamp(int(std::floor(fy)), 0, src.h - 1);
        const int y1 = std::min(y0 + 1, src.h - 1);
        const double wy = std::clamp(fy - double(y0), 0.0, 1.0);
        for (int x = 0; x < ow; ++x) {
            const double fx = (double(x) + 0.5) * sx - 0.5;
            const int x0 = std::clamp(int(std::floor(fx)), 0, src.w - 1);
            const int x1 = std::min(x0 + 1, src.w - 1);
            const double wx = std::clamp(fx - double(x0), 0.0, 1.0);
            for (int c = 0; c < 3; ++c) {
                const double top = double(src.at(y0, x0, c)) * (1 - wx) + double(src.at(y0, x1, c)) * wx;
                const double bot = double(src.at(y1, x0, c)) * (1 - wx) + double(src.at(y1, x1, c)) * wx;
                out.at(y, x, c) = float(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

inline Image crop(const Image& src, int y0, int x0, int ch, int cw) {
    check(y0 >= 0 && x0 >= 0 && ch > 0 && cw > 0 && y0 + ch <= src.h && x0 + cw <= src.w,
          "crop: window out of bounds");
    Image out(ch, cw);
    for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
    return out;
}

inline Image center_crop(const Image& src, int side) {
    return crop(src, (src.h - side) / 2, (src.w - side) / 2, side, side);
}

inline Image hflip(const Image& src) {
    Image out(src.h, src.w);
    for (int y = 0; y < src.h; ++y)
        for (int x = 0; x < src.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(y, src.w - 1 - x, c);
    return out;
}

// np.pad-style reflection (edge pixel not repeated).
inline Image reflect_pad(const Image& src, int top, int bottom, int left, int right) {
    auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        const int period = 2 * (n - 1);
        int m = std::abs(i) % period;
        return m < n ? m : period - m;
    };
    Image out(src.h + top + bottom, src.w + left + right);
    for (int y = 0; y < out.h; ++y) {
        const int sy = reflect(y - top, src.h);
        for (int x = 0; x < out.w; ++x) {
            const int sx = reflect(x - left, src.w);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
        }
    }
    return out;
}

// ---- color ------------------------------------------------------------------

inline float luma(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

// h in [0,1) wraps; s, v clamped to [0,1].
inline void hsv_to_rgb(double h, double s, double v, float& r, float& g, float& b) {
    h = h - std::floor(h);
    s = std::clamp(s, 0.0, 1.0);
    v = std::clamp(v, 0.0, 1.0);
    const double hh = h * 6.0;
    const int i = int(hh) % 6;
    const double f = hh - std::floor(hh);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double rr = 0, gg = 0, bb = 0;
    switch (i) {
        case 0: rr = v; gg = t; bb = p; break;
        case 1: rr = q; gg = v; bb = p; break;
        case 2: rr = p; gg = v; bb = t; break;
        case 3: rr = p; gg = q; bb = v; break;
        case 4: rr = t; gg = p; bb = v; break;
        default: rr = v; gg = p; bb = q; break;
    }
    r = float(rr);
    g = float(gg);
    b = float(bb);
}

// Stacks images into a [B,H,W,3] tensor.
inline TensorF batch_tensor(const std::vector<Image>& imgs) {
    check(!imgs.empty(), "batch_tensor: empty batch");
    const int h = imgs[0].h, w = imgs[0].w;
    TensorF out({i64(imgs.size()), h, w, 3});
    float* dst = out.ptr();
    for (const Image& im : imgs) {
        check(im.h == h && im.w == w, "batch_tensor: mixed image sizes");
        std::copy(im.px.begin(), im.px.end(), dst);
        dst += im.px.size();
    }
    return out;
}

}  // namespace swinlet
