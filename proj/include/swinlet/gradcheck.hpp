// Central finite-difference oracle for the reverse-mode gradients.
#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "graph.hpp"

namespace swinlet {

// Builds the graph for one evaluation: registers nothing itself, receives
// the ids of the already-registered parameters and returns the scalar
// output node.
using GradCheckBuilder = std::function<NodeId(Graph<double>&, const std::map<std::string, NodeId>&)>;

// Compares backward() against central differences component-wise and
// returns the max relative error with denominator max(|a|,|b|,1e-8).
inline double grad_check(const GradCheckBuilder& build, const std::map<std::string, TensorD>& point,
                         double eps = 1e-5) {
    check(eps >= 1e-7 && eps <= 1e-3, "grad_check: eps must be in [1e-7, 1e-3]");

    auto eval = [&](const std::map<std::string, TensorD>& ps) {
        Graph<double> g;
        std::map<std::string, NodeId> ids;
        for (const auto& [name, t] : ps) ids[name] = g.param(name, t);
        const NodeId out = build(g, ids);
        check(g.val(out).numel() == 1, "grad_check: graph output must be scalar");
        return g.val(out)[0];
    };

    // Analytic gradients.
    std::map<std::string, TensorD> analytic;
    {
        Graph<double> g;
        std::map<std::string, NodeId> ids;
        for (const auto& [name, t] : point) ids[name] = g.param(name, t);
        const NodeId out = build(g, ids);
        check(g.val(out).numel() == 1, "grad_check: graph output must be scalar");
        g.backward(out);
        analytic = g.param_grads();
    }

    double max_rel = 0.0;
    std::map<std::string, TensorD> work = point;
    for (auto& [name, t] : work) {
        for (i64 i = 0; i < t.numel(); ++i) {
            const double orig = t[i];
            t[i] = orig + eps;
            const double fp = eval(work);
            t[i] = orig - eps;
            const double fm = eval(work);
            t[i] = orig;
            const double fd = (fp - fm) / (2.0 * eps);
            const double an = analytic.at(name)[i];
            const double denom = std::max({std::fabs(an), std::fabs(fd), 1e-8});
            max_rel = std::max(max_rel, std::fabs(an - fd) / denom);
        }
    }
    return max_rel;
}

}  // namespace swinlet
