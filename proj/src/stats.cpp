#include "stitchnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stitchnet {

namespace {

double u_statistic(const std::vector<double> &x, const std::vector<double> &y)
{
    double u = 0.0;
    for (double xi : x)
        for (double yj : y) {
            if (xi > yj)
                u += 1.0;
            else if (xi == yj)
                u += 0.5;
        }
    return u;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

UTestResult mann_whitney_u(const std::vector<double> &x, const std::vector<double> &y)
{
    size_t n1 = x.size(), n2 = y.size();
    if (n1 < 1 || n2 < 1)
        throw std::invalid_argument("mann_whitney_u: both groups must be non-empty");

    UTestResult r;
    r.u = u_statistic(x, y);

    if (n1 <= 10 && n2 <= 10) {
        // Exact permutation distribution over all C(n1+n2, n1) assignments.
        r.exact = true;
        std::vector<double> combined = x;
        combined.insert(combined.end(), y.begin(), y.end());
        size_t n = n1 + n2;
        uint64_t le = 0, ge = 0, total = 0;
        for (uint32_t mask = 0; mask < (1u << n); ++mask) {
            if (static_cast<size_t>(__builtin_popcount(mask)) != n1)
                continue;
            std::vector<double> gx, gy;
            for (size_t i = 0; i < n; ++i)
                (mask & (1u << i) ? gx : gy).push_back(combined[i]);
            double u = u_statistic(gx, gy);
            ++total;
            if (u <= r.u + 1e-12)
                ++le;
            if (u >= r.u - 1e-12)
                ++ge;
        }
        double p_lo = static_cast<double>(le) / static_cast<double>(total);
        double p_hi = static_cast<double>(ge) / static_cast<double>(total);
        r.p_two_sided = std::min(1.0, 2.0 * std::min(p_lo, p_hi));
        return r;
    }

    // Normal approximation with tie correction and continuity correction.
    double dn1 = static_cast<double>(n1), dn2 = static_cast<double>(n2);
    double n = dn1 + dn2;
    std::vector<double> combined = x;
    combined.insert(combined.end(), y.begin(), y.end());
    std::sort(combined.begin(), combined.end());
    double tie_term = 0.0;
    for (size_t i = 0; i < combined.size();) {
        size_t j = i;
        while (j < combined.size() && combined[j] == combined[i])
            ++j;
        double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    double mean = dn1 * dn2 / 2.0;
    double var = dn1 * dn2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
        r.p_two_sided = 1.0;
        return r;
    }
    double z = (r.u - mean);
    z -= std::copysign(std::min(0.5, std::abs(z)), z); // continuity correction
    z /= std::sqrt(var);
    r.p_two_sided = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::abs(z))));
    return r;
}

double median(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("median: empty sample");
    std::sort(values.begin(), values.end());
    size_t n = values.size();
    if (n % 2 == 1)
        return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<bool> holm_rejections(const std::vector<double> &pvalues, double alpha)
{
    size_t m = pvalues.size();
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return pvalues[a] < pvalues[b]; });

    std::vector<bool> rejected(m, false);
    for (size_t i = 0; i < m; ++i) {
        double level = alpha / static_cast<double>(m - i);
        if (pvalues[order[i]] <= level)
            rejected[order[i]] = true;
        else
            break; // step-down stops at the first failure
    }
    return rejected;
}

StatsReport mann_whitney_holm(const std::map<std::string, std::vector<double>> &groups,
                              double alpha)
{
    if (groups.size() < 2)
        throw std::invalid_argument("mann_whitney_holm: need >= 2 groups");
    for (const auto &[name, vals] : groups)
        if (vals.size() < 2)
            throw std::invalid_argument("mann_whitney_holm: group '" + name +
                                        "' needs >= 2 samples");

    StatsReport report;
    bool first = true;
    for (const auto &[name, vals] : groups) {
        double med = median(vals);
        if (first || med > report.best_median) {
            report.best_group = name;
            report.best_median = med;
            first = false;
        }
    }

    std::vector<double> pvalues;
    for (const auto &[name, vals] : groups) {
        if (name == report.best_group)
            continue;
        UTestResult t = mann_whitney_u(groups.at(report.best_group), vals);
        report.decisions.push_back({name, t.u, t.p_two_sided, false});
        pvalues.push_back(t.p_two_sided);
    }
    std::vector<bool> rejected = holm_rejections(pvalues, alpha);
    for (size_t i = 0; i < rejected.size(); ++i)
        report.decisions[i].significant = rejected[i];
    return report;
}

} // namespace stitchnet
