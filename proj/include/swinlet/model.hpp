// "swinlet": a small SwinV2-flavored windowed-attention classifier.
//
// Keeps the V2 stability signatures (scaled cosine attention with a
// learnable clamped per-head temperature, residual post-norm) at desk
// scale, with a learned relative-position-bias table and alternating
// regular/shifted windows.
#pragma once

#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "graph.hpp"
#include "rng.hpp"

namespace swinlet {

struct ModelConfig {
    int input_size = 64;
    int patch = 4;
    int window = 4;
    int embed_dim = 32;
    std::vector<int> depths{2, 2};
    std::vector<int> heads{2, 4};
    int num_classes = 7;
    double drop_path_rate = 0.2;

    int num_stages() const { return int(depths.size()); }
    int grid(int stage) const { return (input_size / patch) >> stage; }
    int dim(int stage) const { return embed_dim << stage; }
    int final_dim() const { return dim(num_stages() - 1); }
    int total_blocks() const { return std::accumulate(depths.begin(), depths.end(), 0); }

    void validate() const {
        check(!depths.empty() && depths.size() == heads.size(), "ModelConfig: depths/heads must align");
        check(input_size > 0 && patch > 0 && input_size % patch == 0, "ModelConfig: patch must divide input size");
        check(drop_path_rate >= 0 && drop_path_rate < 1, "ModelConfig: drop_path_rate must be in [0,1)");
        check(num_classes >= 2, "ModelConfig: need at least 2 classes");
        for (int s = 0; s < num_stages(); ++s) {
            check(grid(s) >= window && grid(s) % window == 0,
                  "ModelConfig: token grid at stage " + std::to_string(s) + " (" + std::to_string(grid(s)) +
                      ") must be divisible by window " + std::to_string(window));
            check(dim(s) % heads[size_t(s)] == 0, "ModelConfig: stage dim must divide across heads");
        }
    }
};

// ---- token-grid index maps (pure permutations) -----------------------------

inline std::vector<i64> patchify_map(int b, int side, int patch) {
    const int g = side / patch;
    std::vector<i64> map;
    map.reserve(size_t(b) * size_t(side) * size_t(side) * 3);
    for (int bi = 0; bi < b; ++bi)
        for (int gy = 0; gy < g; ++gy)
            for (int gx = 0; gx < g; ++gx)
                for (int py = 0; py < patch; ++py)
                    for (int px = 0; px < patch; ++px)
                        for (int c = 0; c < 3; ++c)
                            map.push_back(((i64(bi) * side + (gy * patch + py)) * side + (gx * patch + px)) * 3 + c);
    return map;
}

inline std::vector<i64> window_partition_map(int b, int grid, int window, int ch) {
    const int nw = grid / window;
    std::vector<i64> map;
    map.reserve(size_t(b) * size_t(grid) * size_t(grid) * size_t(ch));
    for (int bi = 0; bi < b; ++bi)
        for (int wy = 0; wy < nw; ++wy)
            for (int wx = 0; wx < nw; ++wx)
                for (int iy = 0; iy < window; ++iy)
                    for (int ix = 0; ix < window; ++ix)
                        for (int c = 0; c < ch; ++c)
                            map.push_back(((i64(bi) * grid + (wy * window + iy)) * grid + (wx * window + ix)) * ch + c);
    return map;
}

inline std::vector<i64> window_reverse_map(int b, int grid, int window, int ch) {
    const int nw = grid / window;
    const int n = window * window;
    std::vector<i64> map;
    map.reserve(size_t(b) * size_t(grid) * size_t(grid) * size_t(ch));
    for (int bi = 0; bi < b; ++bi)
        for (int y = 0; y < grid; ++y)
            for (int x = 0; x < grid; ++x)
                for (int c = 0; c < ch; ++c) {
                    const i64 wi = i64(y / window) * nw + x / window;
                    const i64 tok = i64(y % window) * window + x % window;
                    map.push_back(((i64(bi) * (i64(nw) * nw) + wi) * n + tok) * ch + c);
                }
    return map;
}

// Cyclic shift: out(y,x) = in(y-dy mod g, x-dx mod g).
inline std::vector<i64> roll_map(int b, int grid, int ch, int dy, int dx) {
    auto wrap = [grid](int v) { return ((v % grid) + grid) % grid; };
    std::vector<i64> map;
    map.reserve(size_t(b) * size_t(grid) * size_t(grid) * size_t(ch));
    for (int bi = 0; bi < b; ++bi)
        for (int y = 0; y < grid; ++y)
            for (int x = 0; x < grid; ++x)
                for (int c = 0; c < ch; ++c)
                    map.push_back(((i64(bi) * grid + wrap(y - dy)) * grid + wrap(x - dx)) * ch + c);
    return map;
}

// 2x2 neighborhood gather for patch merging: [B,g,g,C] -> [B*(g/2)*(g/2), 4C]
// with channel groups ordered (y0x0, y1x0, y0x1, y1x1).
inline std::vector<i64> merge_map(int b, int grid, int ch) {
    const int h = grid / 2;
    std::vector<i64> map;
    map.reserve(size_t(b) * size_t(h) * size_t(h) * size_t(4 * ch));
    const int offs[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
    for (int bi = 0; bi < b; ++bi)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < h; ++x)
                for (const auto& o : offs)
                    for (int c = 0; c < ch; ++c)
                        map.push_back(((i64(bi) * grid + (2 * y + o[0])) * grid + (2 * x + o[1])) * ch + c);
    return map;
}

inline std::vector<i64> relative_position_index(int window) {
    const int n = window * window;
    const int span = 2 * window - 1;
    std::vector<i64> idx;
    idx.reserve(size_t(n) * size_t(n));
    for (int i = 0; i < n; ++i) {
        const int iy = i / window, ix = i % window;
        for (int j = 0; j < n; ++j) {
            const int jy = j / window, jx = j % window;
            idx.push_back(i64(iy - jy + window - 1) * span + (ix - jx + window - 1));
        }
    }
    return idx;
}

// Additive mask separating the regions that a cyclic shift packs into one
// window; 0 within a region, -1e4 across.
template <typename T>
Tensor<T> shift_window_mask(int grid, int window, int shift) {
    const int nw = grid / window;
    const int n = window * window;
    std::vector<int> region(size_t(grid) * size_t(grid));
    auto region_of = [&](int v) { return v < grid - window ? 0 : (v < grid - shift ? 1 : 2); };
    for (int y = 0; y < grid; ++y)
        for (int x = 0; x < grid; ++x) region[size_t(y) * size_t(grid) + size_t(x)] = region_of(y) * 3 + region_of(x);
    Tensor<T> mask({1, i64(nw) * nw, 1, n, n});
    i64 o = 0;
    for (int wy = 0; wy < nw; ++wy)
        for (int wx = 0; wx < nw; ++wx) {
            std::vector<int> ids(n, 0);
            for (int iy = 0; iy < window; ++iy)
                for (int ix = 0; ix < window; ++ix)
                    ids[size_t(iy * window + ix)] =
                        region[size_t(wy * window + iy) * size_t(grid) + size_t(wx * window + ix)];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) mask[o++] = ids[size_t(i)] == ids[size_t(j)] ? T(0) : T(-1e4);
        }
    return mask;
}

// ---- scaled cosine attention ------------------------------------------------

// q,k,v: [..., heads, N, dh] with heads at rank-3. tau: [heads], clamped at
// 0.01 in the forward. bias/mask broadcast onto the [..., heads, N, N]
// similarity logits.
template <typename T>
NodeId cosine_attention(Graph<T>& g, NodeId q, NodeId k, NodeId v, NodeId tau, NodeId bias = -1,
                        const Tensor<T>* mask = nullptr) {
    const int r = g.val(q).rank();
    check(r >= 3, "cosine_attention: q must have rank >= 3");
    const i64 h = g.val(q).dims[size_t(r - 3)];
    check(g.val(tau).numel() == h, "cosine_attention: tau must have one entry per head");
    const NodeId qn = g.cosine_normalize(q);
    const NodeId kn = g.cosine_normalize(k);
    NodeId sim = g.bmm(qn, kn, false, true);
    const NodeId inv_tau = g.reciprocal(g.clamp_min(tau, T(0.01)));
    sim = g.mul(sim, g.reshape(inv_tau, {h, 1, 1}));
    if (bias >= 0) sim = g.add(sim, bias);
    if (mask) sim = g.add(sim, g.value(*mask));
    return g.bmm(g.softmax(sim), v);
}

// ---- the model ----------------------------------------------------------------

template <typename T>
class Swinlet {
public:
    ModelConfig cfg;
    std::map<std::string, Tensor<T>> params;

    struct Handles {
        std::map<std::string, NodeId> param_ids;
        NodeId features = -1;  // pooled penultimate, [B, C_final]
        NodeId logits = -1;    // [B, num_classes]
    };

    static Swinlet build(const ModelConfig& cfg, u64 seed) {
        cfg.validate();
        Swinlet m;
        m.cfg = cfg;
        const StreamKey root = StreamKey(seed).with("init");
        auto w_init = [&](const std::string& name, Dims dims) {
            Tensor<T> t(dims);
            Rng rng = root.with(name).rng();
            for (auto& v : t.data) v = T(rng.truncated_normal(0.02));
            m.params.emplace(name, std::move(t));
        };
        auto fill = [&](const std::string& name, Dims dims, T value) {
            m.params.emplace(name, Tensor<T>::full(std::move(dims), value));
        };

        const int P = cfg.patch;
        w_init("patch_embed.weight", {i64(P) * P * 3, cfg.embed_dim});
        fill("patch_embed.bias", {cfg.embed_dim}, 0);
        fill("patch_embed.norm.gamma", {cfg.embed_dim}, 1);
        fill("patch_embed.norm.beta", {cfg.embed_dim}, 0);
        const int span2 = (2 * cfg.window - 1) * (2 * cfg.window - 1);
        for (int s = 0; s < cfg.num_stages(); ++s) {
            const i64 C = cfg.dim(s);
            const i64 H = cfg.heads[size_t(s)];
            for (int b = 0; b < cfg.depths[size_t(s)]; ++b) {
                const std::string pfx = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".";
                w_init(pfx + "attn.qkv.weight", {C, 3 * C});
                fill(pfx + "attn.qkv.bias", {3 * C}, 0);
                w_init(pfx + "attn.proj.weight", {C, C});
                fill(pfx + "attn.proj.bias", {C}, 0);
                fill(pfx + "attn.tau", {H}, 1);
                w_init(pfx + "attn.rpb", {span2, H});
                fill(pfx + "norm1.gamma", {C}, 1);
                fill(pfx + "norm1.beta", {C}, 0);
                w_init(pfx + "mlp.fc1.weight", {C, 4 * C});
                fill(pfx + "mlp.fc1.bias", {4 * C}, 0);
                w_init(pfx + "mlp.fc2.weight", {4 * C, C});
                fill(pfx + "mlp.fc2.bias", {C}, 0);
                fill(pfx + "norm2.gamma", {C}, 1);
                fill(pfx + "norm2.beta", {C}, 0);
            }
            if (s + 1 < cfg.num_stages()) {
                const std::string pfx = "merges." + std::to_string(s) + ".";
                w_init(pfx + "weight", {4 * C, 2 * C});
                fill(pfx + "bias", {2 * C}, 0);
                fill(pfx + "norm.gamma", {2 * C}, 1);
                fill(pfx + "norm.beta", {2 * C}, 0);
            }
        }
        fill("norm.gamma", {cfg.final_dim()}, 1);
        fill("norm.beta", {cfg.final_dim()}, 0);
        w_init("head.weight", {cfg.final_dim(), cfg.num_classes});
        fill("head.bias", {cfg.num_classes}, 0);
        return m;
    }

    static Swinlet from_params(const ModelConfig& cfg, std::map<std::string, Tensor<T>> loaded) {
        Swinlet ref = build(cfg, 0);
        check(loaded.size() == ref.params.size(), "model load: tensor count mismatch");
        for (const auto& [name, t] : ref.params) {
            auto it = loaded.find(name);
            check(it != loaded.end(), "model load: missing tensor '" + name + "'");
            check(it->second.dims == t.dims, "model load: shape mismatch for '" + name + "'");
        }
        ref.params = std::move(loaded);
        return ref;
    }

    static Swinlet from_checkpoint(const ModelConfig& cfg, const std::filesystem::path& path) {
        return from_params(cfg, load_checkpoint<T>(path));
    }

    void save(const std::filesystem::path& path) const { save_checkpoint(params, path); }

    i64 param_count() const {
        i64 n = 0;
        for (const auto& [_, t] : params) n += t.numel();
        return n;
    }

    // Train mode applies per-sample drop-path with rates linearly spaced
    // from 0 to drop_path_rate across blocks; dp_rng must be provided then.
    Handles forward(Graph<T>& g, const Tensor<T>& images, bool train = false, Rng* dp_rng = nullptr) const {
        Handles h;
        for (const auto& [name, t] : params) h.param_ids[name] = g.param(name, t);
        return forward_with_ids(g, std::move(h.param_ids), images, train, dp_rng);
    }

    // Same forward, but against parameter nodes registered by the caller
    // (the finite-difference harness perturbs those).
    Handles forward_with_ids(Graph<T>& g, std::map<std::string, NodeId> param_ids, const Tensor<T>& images,
                             bool train = false, Rng* dp_rng = nullptr) const {
        check(images.rank() == 4 && images.dims[3] == 3, "forward: images must be [B,S,S,3]");
        check(images.dims[1] == cfg.input_size && images.dims[2] == cfg.input_size,
              "forward: expected input size " + std::to_string(cfg.input_size) + ", got " +
                  dims_str(images.dims));
        check(!train || dp_rng || cfg.drop_path_rate == 0, "forward: train mode needs a drop-path rng");
        check(param_ids.size() == params.size(), "forward: parameter id set mismatch");
        Handles h;
        h.param_ids = std::move(param_ids);
        const int B = int(images.dims[0]);

        // patch embed
        const int g0 = cfg.grid(0);
        NodeId x = g.value(images);
        x = g.index_map(x, patchify_map(B, cfg.input_size, cfg.patch),
                        {i64(B) * g0 * g0, i64(cfg.patch) * cfg.patch * 3});
        x = g.add(g.matmul(x, h.param_ids.at("patch_embed.weight")), h.param_ids.at("patch_embed.bias"));
        x = g.layernorm(x, h.param_ids.at("patch_embed.norm.gamma"), h.param_ids.at("patch_embed.norm.beta"));
        x = g.reshape(x, {B, g0, g0, cfg.embed_dim});

        int block_index = 0;
        const int total = cfg.total_blocks();
        for (int s = 0; s < cfg.num_stages(); ++s) {
            const int grid = cfg.grid(s);
            const i64 C = cfg.dim(s);
            for (int b = 0; b < cfg.depths[size_t(s)]; ++b) {
                const double rate =
                    total > 1 ? cfg.drop_path_rate * double(block_index) / double(total - 1) : 0.0;
                NodeId a = attention_sublayer(g, h.param_ids, x, s, b, B);
                a = g.layernorm(a, pid(h, s, b, "norm1.gamma"), pid(h, s, b, "norm1.beta"));
                x = g.add(x, drop_path(g, a, B, rate, train, dp_rng));
                NodeId m = mlp_sublayer(g, h.param_ids, x, s, b, B);
                m = g.layernorm(m, pid(h, s, b, "norm2.gamma"), pid(h, s, b, "norm2.beta"));
                x = g.add(x, drop_path(g, m, B, rate, train, dp_rng));
                ++block_index;
            }
            if (s + 1 < cfg.num_stages()) {
                const std::string pfx = "merges." + std::to_string(s) + ".";
                const int half = grid / 2;
                x = g.index_map(x, merge_map(B, grid, int(C)), {i64(B) * half * half, 4 * C});
                x = g.add(g.matmul(x, h.param_ids.at(pfx + "weight")), h.param_ids.at(pfx + "bias"));
                x = g.layernorm(x, h.param_ids.at(pfx + "norm.gamma"), h.param_ids.at(pfx + "norm.beta"));
                x = g.reshape(x, {B, half, half, 2 * C});
            }
        }

        const int gf = cfg.grid(cfg.num_stages() - 1);
        const i64 Cf = cfg.final_dim();
        x = g.reshape(x, {B, i64(gf) * gf, Cf});
        x = g.layernorm(x, h.param_ids.at("norm.gamma"), h.param_ids.at("norm.beta"));
        h.features = g.mean_axis(x, 1);  // [B, Cf]
        h.logits = g.add(g.matmul(h.features, h.param_ids.at("head.weight")), h.param_ids.at("head.bias"));
        return h;
    }

    // Windowed scaled-cosine attention for one block; exposed so tests can
    // compare the shifted path against a direct neighborhood-mask oracle.
    NodeId attention_sublayer(Graph<T>& g, const std::map<std::string, NodeId>& pids, NodeId x, int s, int b,
                              int B) const {
        const int grid = cfg.grid(s);
        const i64 C = cfg.dim(s);
        const int w = cfg.window;
        const int heads = cfg.heads[size_t(s)];
        const i64 dh = C / heads;
        const int shift = (b % 2 == 1 && grid > w) ? w / 2 : 0;
        const i64 nw = i64(grid / w) * i64(grid / w);
        const i64 n = i64(w) * w;
        const std::string pfx = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".attn.";

        if (shift > 0) x = g.index_map(x, roll_map(B, grid, int(C), -shift, -shift), {B, grid, grid, C});
        x = g.index_map(x, window_partition_map(B, grid, w, int(C)), {B, nw, n, C});
        NodeId flat = g.reshape(x, {i64(B) * nw * n, C});
        NodeId qkv = g.add(g.matmul(flat, pids.at(pfx + "qkv.weight")), pids.at(pfx + "qkv.bias"));
        auto head_split = [&](NodeId part) {
            part = g.reshape(part, {B, nw, n, heads, dh});
            return g.transpose(part, {0, 1, 3, 2, 4});  // [B,nW,h,N,dh]
        };
        const NodeId q = head_split(g.slice(qkv, 1, 0, C));
        const NodeId k = head_split(g.slice(qkv, 1, C, C));
        const NodeId v = head_split(g.slice(qkv, 1, 2 * C, C));

        NodeId bias = g.gather_rows(pids.at(pfx + "rpb"), relative_position_index(w));  // [N*N, h]
        bias = g.reshape(g.transpose(bias, {1, 0}), {1, 1, heads, n, n});

        Tensor<T> mask;
        const Tensor<T>* mask_ptr = nullptr;
        if (shift > 0) {
            mask = shift_window_mask<T>(grid, w, shift);
            mask_ptr = &mask;
        }
        NodeId out = cosine_attention(g, q, k, v, pids.at(pfx + "tau"), bias, mask_ptr);
        out = g.reshape(g.transpose(out, {0, 1, 3, 2, 4}), {i64(B) * nw * n, C});
        out = g.add(g.matmul(out, pids.at(pfx + "proj.weight")), pids.at(pfx + "proj.bias"));
        out = g.index_map(g.reshape(out, {B, nw, n, C}), window_reverse_map(B, grid, w, int(C)),
                          {B, grid, grid, C});
        if (shift > 0) out = g.index_map(out, roll_map(B, grid, int(C), shift, shift), {B, grid, grid, C});
        return out;
    }

    NodeId mlp_sublayer(Graph<T>& g, const std::map<std::string, NodeId>& pids, NodeId x, int s, int b,
                        int B) const {
        const int grid = cfg.grid(s);
        const i64 C = cfg.dim(s);
        const std::string pfx = "stages." + std::to_string(s) + ".blocks." + std::to_string(b) + ".mlp.";
        NodeId t = g.reshape(x, {i64(B) * grid * grid, C});
        t = g.add(g.matmul(t, pids.at(pfx + "fc1.weight")), pids.at(pfx + "fc1.bias"));
        t = g.gelu(t);
        t = g.add(g.matmul(t, pids.at(pfx + "fc2.weight")), pids.at(pfx + "fc2.bias"));
        return g.reshape(t, {B, grid, grid, C});
    }

private:
    static NodeId pid(const Handles& h, int s, int b, const std::string& suffix) {
        return h.param_ids.at("stages." + std::to_string(s) + ".blocks." + std::to_string(b) + "." + suffix);
    }

    NodeId drop_path(Graph<T>& g, NodeId branch, int B, double rate, bool train, Rng* rng) const {
        if (!train || rate <= 0.0) return branch;
        const double keep = 1.0 - rate;
        Tensor<T> mask({B, 1, 1, 1});
        for (i64 i = 0; i < B; ++i) mask[i] = rng->uniform() < keep ? T(1.0 / keep) : T(0);
        return g.mul(branch, g.value(std::move(mask)));
    }
};

template <typename T>
Swinlet<T> build_model(const ModelConfig& cfg, u64 seed) {
    return Swinlet<T>::build(cfg, seed);
}

using SwinletF = Swinlet<float>;
using SwinletD = Swinlet<double>;

}  // namespace swinlet
