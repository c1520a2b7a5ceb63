#pragma once

#include <map>
#include <string>
#include <vector>

namespace stitchnet {

struct UTestResult {
    double u = 0.0; // ties count half
    double p_two_sided = 1.0;
    bool exact = false;
};

// Two-sided Mann-Whitney U test. Exact by enumeration of all group
// assignments when both sizes are <= 10, normal approximation with tie
// correction and continuity correction otherwise.
UTestResult mann_whitney_u(const std::vector<double> &x, const std::vector<double> &y);

double median(std::vector<double> values);

// Holm step-down: p-values sorted ascending, the i-th smallest (1-based) is
// rejected while p <= alpha / (m - i + 1); the first failure stops rejection.
std::vector<bool> holm_rejections(const std::vector<double> &pvalues, double alpha);

struct PairwiseDecision {
    std::string other;
    double u = 0.0;
    double p = 1.0;
    bool significant = false;
};

struct StatsReport {
    std::string best_group; // highest median
    double best_median = 0.0;
    std::vector<PairwiseDecision> decisions;
};

// The best-median group compared against every other, Holm-corrected.
StatsReport mann_whitney_holm(const std::map<std::string, std::vector<double>> &groups,
                              double alpha = 0.05);

} // namespace stitchnet
