#include "stitchnet/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stitchnet {

ObjectivePoint ObjectivePoint::from_eval(double accuracy, int64_t madds, int64_t madds_ensemble)
{
    if (madds_ensemble <= 0)
        throw std::invalid_argument("ObjectivePoint: ensemble madds must be positive");
    ObjectivePoint p;
    p.accuracy = accuracy;
    p.madds = madds;
    p.f1 = 1.0 - accuracy;
    p.f2 = static_cast<double>(madds) / static_cast<double>(madds_ensemble);
    return p;
}

double tschebysheff(const ObjectivePoint &p, double w1, double w2)
{
    if (w1 <= 0.0 || w2 <= 0.0)
        throw std::invalid_argument("tschebysheff: weights must be positive");
    return std::max(w1 * p.f1, w2 * p.f2);
}

double SteeringSchedule::threshold_at(int64_t evaluations_used) const
{
    if (budget <= 0)
        return 0.5;
    double frac = 2.0 * static_cast<double>(evaluations_used) / static_cast<double>(budget);
    return 0.5 * std::min(1.0, frac);
}

bool constrained_better(const ObjectivePoint &a, const ObjectivePoint &b, double threshold,
                        double w1, double w2)
{
    bool feas_a = a.accuracy >= threshold;
    bool feas_b = b.accuracy >= threshold;
    if (feas_a != feas_b)
        return feas_a;
    if (!feas_a)
        return a.accuracy > b.accuracy;
    return tschebysheff(a, w1, w2) < tschebysheff(b, w1, w2);
}

namespace {

// Weak dominance in (f1, f2): a is no worse in both.
bool weakly_dominates(const ObjectivePoint &a, const ObjectivePoint &b)
{
    return a.f1 <= b.f1 && a.f2 <= b.f2;
}

} // namespace

bool Archive::try_add(const Genotype &genotype, const ObjectivePoint &point, double threshold)
{
    if (point.accuracy < threshold)
        return false;
    for (const auto &e : entries_)
        if (weakly_dominates(e.point, point))
            return false;
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [&](const ArchiveEntry &e) {
                                      return weakly_dominates(point, e.point);
                                  }),
                   entries_.end());
    entries_.push_back({genotype, point});
    return true;
}

void Archive::prune(double threshold)
{
    entries_.erase(std::remove_if(entries_.begin(), entries_.end(),
                                  [&](const ArchiveEntry &e) {
                                      return e.point.accuracy < threshold;
                                  }),
                   entries_.end());
}

double hypervolume_2d(const std::vector<ObjectivePoint> &front, double ref1, double ref2)
{
    std::vector<std::pair<double, double>> pts;
    for (const auto &p : front)
        if (p.f1 < ref1 && p.f2 < ref2)
            pts.emplace_back(p.f1, std::max(0.0, p.f2));
    std::sort(pts.begin(), pts.end());

    double hv = 0.0;
    double prev_f2 = ref2;
    for (const auto &[f1, f2] : pts) {
        if (f2 >= prev_f2)
            continue; // dominated within the box
        hv += (ref1 - std::max(0.0, f1)) * (prev_f2 - f2);
        prev_f2 = f2;
    }
    return hv;
}

double archive_hypervolume(const Archive &archive, double ref1, double ref2)
{
    std::vector<ObjectivePoint> pts;
    for (const auto &e : archive.entries())
        pts.push_back(e.point);
    return hypervolume_2d(pts, ref1, ref2);
}

double normalized_hypervolume(double hv, double ref1, double ref2)
{
    return hv / (ref1 * ref2);
}

std::vector<std::pair<double, double>> weight_grid(size_t n, double eps)
{
    std::vector<std::pair<double, double>> w;
    w.reserve(n);
    if (n == 1) {
        w.emplace_back(0.5, 0.5);
        return w;
    }
    for (size_t i = 0; i < n; ++i) {
        double v = eps + (1.0 - 2.0 * eps) * static_cast<double>(i) /
                             static_cast<double>(n - 1);
        w.emplace_back(v, 1.0 - v);
    }
    return w;
}

std::vector<size_t> assign_weights(const std::vector<ObjectivePoint> &population,
                                   const std::vector<std::pair<double, double>> &weights,
                                   Rng &rng)
{
    if (population.size() != weights.size())
        throw std::invalid_argument("assign_weights: |weights| must equal |population|");
    size_t n = population.size();
    std::vector<size_t> weight_order(n);
    for (size_t i = 0; i < n; ++i)
        weight_order[i] = i;
    rng.shuffle(weight_order);

    std::vector<size_t> assignment(n, n);
    std::vector<bool> taken(n, false);
    for (size_t wi : weight_order) {
        const auto &[w1, w2] = weights[wi];
        size_t best = n;
        double best_s = 0.0;
        for (size_t i = 0; i < n; ++i) {
            if (taken[i])
                continue;
            double s = tschebysheff(population[i], w1, w2);
            if (best == n || s < best_s) {
                best = i;
                best_s = s;
            }
        }
        taken[best] = true;
        assignment[best] = wi;
    }
    return assignment;
}

} // namespace stitchnet
