// Named finite-difference checks covering every primitive op plus the full
// tiny classifier composed with the smoothed cross entropy. Shared by the
// unit tests, the acceptance suite, and the gradcheck CLI subcommand.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gradcheck.hpp"
#include "mix.hpp"
#include "model.hpp"
#include "rng.hpp"

namespace swinlet {

namespace gcdetail {

inline TensorD rand_tensor(Dims dims, Rng& rng, double lo = 0.5, double hi = 1.5) {
    TensorD t(std::move(dims));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Scalarize with a fixed random weighting so every output element has an
// O(1) contribution.
inline NodeId dot_with(Graph<double>& g, NodeId x, Rng& rng) {
    TensorD w(g.val(x).dims);
    for (auto& v : w.data) v = rng.uniform(0.5, 1.5);
    return g.sum_all(g.mul(x, g.value(std::move(w))));
}

}  // namespace gcdetail

// Returns (name, max relative error) per check.
inline std::vector<std::pair<std::string, double>> run_gradcheck_suite(u64 seed = 20240901) {
    using gcdetail::dot_with;
    using gcdetail::rand_tensor;
    std::vector<std::pair<std::string, double>> results;

    auto run = [&](const std::string& name, const std::map<std::string, TensorD>& point,
                   const GradCheckBuilder& build, double eps = 1e-5) {
        results.emplace_back(name, grad_check(build, point, eps));
    };
    auto key = [&](const std::string& name) { return StreamKey(seed).with(name); };
    auto rt = [&](const std::string& name, Dims dims, double lo = 0.5, double hi = 1.5) {
        Rng rng = key(name + "-point").rng();
        return gcdetail::rand_tensor(std::move(dims), rng, lo, hi);
    };

    // elementwise binaries, including a broadcast on each
    run("add", {{"x", rt("add", {3, 4})}, {"y", rt("add-y", {4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("add-w").rng();
            return dot_with(g, g.add(p.at("x"), p.at("y")), rng);
        });
    run("sub", {{"x", rt("sub", {3, 4})}, {"y", rt("sub-y", {3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("sub-w").rng();
            return dot_with(g, g.sub(p.at("x"), p.at("y")), rng);
        });
    run("mul", {{"x", rt("mul", {2, 3, 4})}, {"y", rt("mul-y", {3, 1})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("mul-w").rng();
            return dot_with(g, g.mul(p.at("x"), p.at("y")), rng);
        });
    run("div", {{"x", rt("div", {3, 4})}, {"y", rt("div-y", {4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("div-w").rng();
            return dot_with(g, g.div(p.at("x"), p.at("y")), rng);
        });
    run("add_scalar", {{"x", rt("add_scalar", {5})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("add_scalar-w").rng();
            return dot_with(g, g.add_scalar(p.at("x"), 0.7), rng);
        });
    run("mul_scalar", {{"x", rt("mul_scalar", {5})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("mul_scalar-w").rng();
            return dot_with(g, g.mul_scalar(p.at("x"), -1.3), rng);
        });

    // elementwise unaries
    run("exp", {{"x", rt("exp", {3, 3})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("exp-w").rng();
            return dot_with(g, g.exp(p.at("x")), rng);
        });
    run("log", {{"x", rt("log", {3, 3})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("log-w").rng();
            return dot_with(g, g.log(p.at("x")), rng);
        });
    run("sqrt", {{"x", rt("sqrt", {3, 3})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("sqrt-w").rng();
            return dot_with(g, g.sqrt(p.at("x")), rng);
        });
    run("reciprocal", {{"x", rt("reciprocal", {3, 3})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("reciprocal-w").rng();
            return dot_with(g, g.reciprocal(p.at("x")), rng);
        });
    run("gelu", {{"x", rt("gelu", {4, 4}, -2.0, 2.0)}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("gelu-w").rng();
            return dot_with(g, g.gelu(p.at("x")), rng);
        });
    {
        // keep points away from the clamp kink
        TensorD x = rt("clamp_min", {4, 4}, 0.2, 1.8);
        for (auto& v : x.data)
            if (std::fabs(v - 1.0) < 0.05) v += 0.1;
        run("clamp_min", {{"x", x}}, [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("clamp_min-w").rng();
            return dot_with(g, g.clamp_min(p.at("x"), 1.0), rng);
        });
    }

    // reductions
    run("sum", {{"x", rt("sum", {3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) { return g.sum_all(p.at("x")); });
    run("mean", {{"x", rt("mean", {3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) { return g.mean_all(p.at("x")); });
    run("sum_axis", {{"x", rt("sum_axis", {2, 3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("sum_axis-w").rng();
            return dot_with(g, g.sum_axis(p.at("x"), 1), rng);
        });
    run("mean_axis", {{"x", rt("mean_axis", {2, 3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("mean_axis-w").rng();
            return dot_with(g, g.mean_axis(p.at("x"), 2), rng);
        });

    // shape ops
    run("reshape", {{"x", rt("reshape", {3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("reshape-w").rng();
            return dot_with(g, g.reshape(p.at("x"), {2, 6}), rng);
        });
    run("transpose", {{"x", rt("transpose", {2, 3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("transpose-w").rng();
            return dot_with(g, g.transpose(p.at("x"), {2, 0, 1}), rng);
        });
    run("concat", {{"x", rt("concat", {2, 3})}, {"y", rt("concat-y", {2, 2})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("concat-w").rng();
            return dot_with(g, g.concat({p.at("x"), p.at("y")}, 1), rng);
        });
    run("slice", {{"x", rt("slice", {3, 5})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("slice-w").rng();
            return dot_with(g, g.slice(p.at("x"), 1, 1, 3), rng);
        });
    run("index_map", {{"x", rt("index_map", {6})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("index_map-w").rng();
            return dot_with(g, g.index_map(p.at("x"), {5, 4, 3, 2, 1, 0}, {6}), rng);
        });
    run("gather_rows", {{"x", rt("gather_rows", {4, 3})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("gather_rows-w").rng();
            return dot_with(g, g.gather_rows(p.at("x"), {0, 2, 2, 1, 3, 0}), rng);  // duplicates scatter-add
        });

    // matrix products
    run("matmul", {{"x", rt("matmul", {3, 4})}, {"y", rt("matmul-y", {4, 2})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("matmul-w").rng();
            return dot_with(g, g.matmul(p.at("x"), p.at("y")), rng);
        });
    run("bmm", {{"x", rt("bmm", {2, 2, 3, 4})}, {"y", rt("bmm-y", {2, 2, 4, 2})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("bmm-w").rng();
            return dot_with(g, g.bmm(p.at("x"), p.at("y")), rng);
        });
    run("bmm_transposed", {{"x", rt("bmm_t", {2, 3, 4})}, {"y", rt("bmm_t-y", {2, 3, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("bmm_t-w").rng();
            return dot_with(g, g.bmm(p.at("x"), p.at("y"), false, true), rng);
        });

    // row-wise ops
    run("softmax", {{"x", rt("softmax", {3, 5}, -2.0, 2.0)}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("softmax-w").rng();
            return dot_with(g, g.softmax(p.at("x")), rng);
        });
    run("log_softmax", {{"x", rt("log_softmax", {3, 5}, -2.0, 2.0)}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("log_softmax-w").rng();
            return dot_with(g, g.log_softmax(p.at("x")), rng);
        });
    run("layernorm",
        {{"x", rt("layernorm", {4, 6}, -1.0, 1.0)}, {"gamma", rt("ln-g", {6})}, {"beta", rt("ln-b", {6})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("layernorm-w").rng();
            return dot_with(g, g.layernorm(p.at("x"), p.at("gamma"), p.at("beta")), rng);
        });
    run("cosine_normalize", {{"x", rt("cosine_normalize", {4, 6}, -1.5, 1.5)}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            Rng rng = key("cosine_normalize-w").rng();
            return dot_with(g, g.cosine_normalize(p.at("x")), rng);
        });
    run("mask_apply", {{"x", rt("mask_apply", {4, 4})}},
        [&](Graph<double>& g, const std::map<std::string, NodeId>& p) {
            // drop-path style constant 0 / 1/keep mask
            TensorD mask({4, 1});
            mask[0] = 0.0;
            mask[1] = 1.25;
            mask[2] = 1.25;
            mask[3] = 0.0;
            Rng rng = key("mask_apply-w").rng();
            return dot_with(g, g.mul(p.at("x"), g.value(std::move(mask))), rng);
        });

    // full tiny classifier + smoothed CE
    {
        ModelConfig cfg;
        cfg.input_size = 16;
        cfg.patch = 4;
        cfg.window = 4;
        cfg.embed_dim = 8;
        cfg.depths = {1};
        cfg.heads = {2};
        cfg.drop_path_rate = 0.0;
        const SwinletD model = SwinletD::build(cfg, key("tiny-model").value());
        Rng irng = key("tiny-input").rng();
        TensorD images({2, 16, 16, 3});
        for (auto& v : images.data) v = irng.uniform(-1.0, 1.0);
        const TensorD targets = smooth_targets({1, 4}, 0.1, cfg.num_classes).cast<double>();
        run("classifier_ce", model.params,
            [&, images, targets](Graph<double>& g, const std::map<std::string, NodeId>& p) {
                auto h = model.forward_with_ids(g, p, images);
                return smoothed_ce_loss(g, h.logits, targets);
            });
    }
    return results;
}

}  // namespace swinlet
