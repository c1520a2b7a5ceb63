#pragma once

// Test-only reference implementations. These stay independent of the library
// code paths they check: the convolution is a direct six-loop sum, gradients
// come from central finite differences, the matching oracle enumerates every
// candidate subset, dominance filtering is the O(n^2) definition, and the
// hypervolume oracle decomposes the dominated region into vertical strips.

#include "stitchnet/layers.hpp"
#include "stitchnet/objectives.hpp"
#include "stitchnet/rng.hpp"
#include "stitchnet/stitcher.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

namespace oracles {

using namespace stitchnet;

inline Tensor naive_conv2d(const Tensor &x, const Tensor &w, const Tensor &bias,
                           int64_t stride, int64_t pad)
{
    int64_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3];
    int64_t OC = w.shape[0], KH = w.shape[2], KW = w.shape[3];
    int64_t OH = (H + 2 * pad - KH) / stride + 1;
    int64_t OW = (W + 2 * pad - KW) / stride + 1;
    Tensor y = Tensor::zeros({B, OC, OH, OW});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oc = 0; oc < OC; ++oc)
            for (int64_t oh = 0; oh < OH; ++oh)
                for (int64_t ow = 0; ow < OW; ++ow) {
                    float acc = bias.at(oc);
                    for (int64_t ic = 0; ic < C; ++ic)
                        for (int64_t kh = 0; kh < KH; ++kh)
                            for (int64_t kw = 0; kw < KW; ++kw) {
                                int64_t ih = oh * stride - pad + kh;
                                int64_t iw = ow * stride - pad + kw;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W)
                                    continue;
                                acc += x.at4(b, ic, ih, iw) *
                                       w.at(((oc * C + ic) * KH + kh) * KW + kw);
                            }
                    y.at4(b, oc, oh, ow) = acc;
                }
    return y;
}

// Scalar projection loss L = sum(output * proj), evaluated in double.
inline double projected_loss(const LayerSpec &spec, const std::vector<Tensor> &weights,
                             const std::vector<Tensor> &inputs, const Tensor &proj)
{
    Tensor out = forward_layer(spec, weights, inputs);
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i)
        acc += static_cast<double>(out.at(i)) * static_cast<double>(proj.at(i));
    return acc;
}

struct FiniteDiffResult {
    double max_abs_diff = 0.0;
    double max_rel_diff = 0.0;
};

// Central finite differences of the projection loss w.r.t. one tensor
// (an input when weight_index < 0, otherwise that weight), compared against
// the analytic gradient.
inline FiniteDiffResult finite_diff_check(const LayerSpec &spec, std::vector<Tensor> weights,
                                          std::vector<Tensor> inputs, const Tensor &proj,
                                          int weight_index, int input_index = 0,
                                          double h = 1e-3)
{
    LayerGrads grads = backward_layer(spec, weights, inputs, proj);
    const Tensor &analytic = weight_index >= 0
                                 ? grads.weight_grads[static_cast<size_t>(weight_index)]
                                 : grads.input_grads[static_cast<size_t>(input_index)];
    Tensor &target = weight_index >= 0 ? weights[static_cast<size_t>(weight_index)]
                                       : inputs[static_cast<size_t>(input_index)];

    FiniteDiffResult r;
    for (int64_t i = 0; i < target.numel(); ++i) {
        float saved = target.at(i);
        target.at(i) = saved + static_cast<float>(h);
        double up = projected_loss(spec, weights, inputs, proj);
        target.at(i) = saved - static_cast<float>(h);
        double down = projected_loss(spec, weights, inputs, proj);
        target.at(i) = saved;
        double fd = (up - down) / (2.0 * h);
        double a = static_cast<double>(analytic.at(i));
        double diff = std::abs(a - fd);
        r.max_abs_diff = std::max(r.max_abs_diff, diff);
        r.max_rel_diff = std::max(r.max_rel_diff, diff / std::max(1.0, std::abs(fd)));
    }
    return r;
}

// Exhaustive maximum acyclic node-disjoint matching. Validity of a subset is
// judged by actually constructing the merged supernetwork, which is an
// independent route from the projection used inside the search.
inline size_t brute_force_max_matching(const NetworkGraph &a, const NetworkGraph &b,
                                       const std::vector<MatchCandidate> &candidates)
{
    size_t n = candidates.size();
    size_t best = 0;
    for (uint64_t mask = 0; mask < (1ull << n); ++mask) {
        MatchingPlan plan;
        std::set<std::string> ua, ub;
        bool disjoint = true;
        for (size_t i = 0; i < n && disjoint; ++i)
            if (mask & (1ull << i)) {
                const auto &c = candidates[i];
                if (!ua.insert(c.node_a).second || !ub.insert(c.node_b).second)
                    disjoint = false;
                plan.matches.push_back(c);
            }
        if (!disjoint || plan.matches.size() <= best)
            continue;
        try {
            build_supernetwork(a, b, plan);
            best = plan.matches.size();
        } catch (const CycleError &) {
        }
    }
    return best;
}

// O(n^2) dominance filter with first-seen-wins on exact objective ties,
// mirroring the documented archive semantics.
inline std::vector<ObjectivePoint> dominance_filter(const std::vector<ObjectivePoint> &stream,
                                                    double threshold)
{
    std::vector<ObjectivePoint> feasible;
    for (const auto &p : stream) {
        if (p.accuracy < threshold)
            continue;
        bool duplicate = false;
        for (const auto &q : feasible)
            if (q.f1 == p.f1 && q.f2 == p.f2)
                duplicate = true;
        if (!duplicate)
            feasible.push_back(p);
    }
    std::vector<ObjectivePoint> front;
    for (const auto &p : feasible) {
        bool dominated = false;
        for (const auto &q : feasible)
            if ((q.f1 <= p.f1 && q.f2 <= p.f2) && (q.f1 < p.f1 || q.f2 < p.f2))
                dominated = true;
        if (!dominated)
            front.push_back(p);
    }
    return front;
}

// Hypervolume by vertical strips between consecutive f1 coordinates.
inline double strip_hypervolume(const std::vector<ObjectivePoint> &front, double ref1,
                                double ref2)
{
    std::vector<double> xs;
    for (const auto &p : front)
        if (p.f1 < ref1)
            xs.push_back(std::max(0.0, p.f1));
    if (xs.empty())
        return 0.0;
    xs.push_back(ref1);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    double hv = 0.0;
    for (size_t i = 0; i + 1 < xs.size(); ++i) {
        double lo = xs[i], hi = xs[i + 1];
        // Dominated height at any x in [lo, hi): best f2 among points with f1 <= lo.
        double best_f2 = ref2;
        for (const auto &p : front)
            if (p.f1 <= lo + 1e-15 && p.f2 < best_f2)
                best_f2 = std::max(0.0, p.f2);
        if (best_f2 < ref2)
            hv += (hi - lo) * (ref2 - best_f2);
    }
    return hv;
}

inline Tensor random_tensor(const Shape &shape, Rng &rng, double scale = 1.0)
{
    Tensor t = Tensor::zeros(shape);
    for (auto &v : t.data)
        v = static_cast<float>(rng.normal(0.0, scale));
    return t;
}

} // namespace oracles
