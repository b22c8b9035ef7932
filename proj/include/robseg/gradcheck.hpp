#pragma once

#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "robseg/graph.hpp"

namespace robseg {

// Central-difference verification of reverse-mode gradients.
//
// `build` receives a fresh Graph plus leaves holding the candidate inputs and
// must return a scalar loss. It is invoked 2*numel+2 times, so any state it
// touches (batch-norm running statistics in particular) must be created inside
// the closure; a shared mutable state would smear perturbations across calls
// and show up here as a false non-determinism failure.

struct GradCheckOptions {
    double step = 1e-5;
    double tol = 1e-4;
};

struct GradReport {
    bool pass = true;
    bool deterministic = true;
    double max_err = 0.0;  // largest relative error seen (absolute-fallback elements excluded)
    int checked = 0;
    std::string detail;
};

inline GradReport grad_check(const std::function<Var(Graph&, const std::vector<Var>&)>& build,
                             const std::vector<Tensor>& inputs, const GradCheckOptions& opt = {}) {
    GradReport rep;

    auto evaluate = [&](const std::vector<Tensor>& at, std::vector<std::vector<double>>* grads) {
        Graph g;
        std::vector<Var> leaves;
        leaves.reserve(at.size());
        for (const Tensor& t : at) leaves.push_back(g.input(t, grads != nullptr));
        Var loss = build(g, leaves);
        double lv = loss.value().data.at(0);
        if (grads) {
            g.backward(loss);
            grads->clear();
            for (const Var& v : leaves) grads->push_back(g.grad_data(v.id()));
        }
        return lv;
    };

    std::vector<std::vector<double>> analytic;
    double l0 = evaluate(inputs, &analytic);
    std::vector<std::vector<double>> analytic2;
    double l1 = evaluate(inputs, &analytic2);
    if (l0 != l1 || analytic != analytic2) {
        rep.deterministic = false;
        rep.pass = false;
        rep.detail = "two evaluations at the same point disagree";
        return rep;
    }

    double h = opt.step;
    std::vector<Tensor> work = inputs;
    for (size_t t = 0; t < work.size(); ++t) {
        for (size_t i = 0; i < work[t].data.size(); ++i) {
            double orig = work[t].data[i];
            work[t].data[i] = orig + h;
            double lp = evaluate(work, nullptr);
            work[t].data[i] = orig - h;
            double lm = evaluate(work, nullptr);
            work[t].data[i] = orig;

            double fd = (lp - lm) / (2.0 * h);
            double a = analytic[t][i];
            double scale = std::max(std::abs(a), std::abs(fd));
            ++rep.checked;
            if (scale < h) {
                // both effectively zero; second-order truncation bound
                if (std::abs(a - fd) > 10.0 * h * h) {
                    rep.pass = false;
                    std::ostringstream os;
                    os << "input " << t << " element " << i << ": analytic " << a << " vs central " << fd
                       << " (near-zero absolute check)";
                    rep.detail = os.str();
                    return rep;
                }
                continue;
            }
            double err = std::abs(a - fd) / scale;
            if (err > rep.max_err) {
                rep.max_err = err;
                std::ostringstream os;
                os << "worst at input " << t << " element " << i << ": analytic " << a << " vs central " << fd;
                rep.detail = os.str();
            }
        }
    }
    rep.pass = rep.max_err < opt.tol;
    return rep;
}

}  // namespace robseg
