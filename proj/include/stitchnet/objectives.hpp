#pragma once

#include "stitchnet/phenotype.hpp"
#include "stitchnet/rng.hpp"

#include <string>
#include <vector>

namespace stitchnet {

// Both objectives minimized: f1 = 1 - accuracy, f2 = madds normalized by the
// full-ensemble network's madds.
struct ObjectivePoint {
    double f1 = 1.0;
    double f2 = 1.0;
    double accuracy = 0.0;
    int64_t madds = 0;

    static ObjectivePoint from_eval(double accuracy, int64_t madds, int64_t madds_ensemble);
};

// Tschebysheff scalarization against the utopian point (0, 0); lower is
// better.
double tschebysheff(const ObjectivePoint &p, double w1, double w2);

// Accuracy threshold that linearly rises to 0.5 by half the budget.
struct SteeringSchedule {
    int64_t budget = 0;

    double threshold_at(int64_t evaluations_used) const;
};

// Constraint domination: solutions below the accuracy threshold are always
// strictly worse; among infeasible ones higher accuracy wins; among feasible
// ones the lower scalarization wins. Exact ties are not better.
bool constrained_better(const ObjectivePoint &a, const ObjectivePoint &b, double threshold,
                        double w1, double w2);

struct ArchiveEntry {
    Genotype genotype;
    ObjectivePoint point;
};

// Elitist archive of mutually non-dominated feasible points. Weak dominance
// rejects candidates (first seen wins on exact objective ties).
class Archive {
  public:
    // Returns true if the candidate entered the archive.
    bool try_add(const Genotype &genotype, const ObjectivePoint &point, double threshold);
    // Drops members whose accuracy fell below a raised threshold.
    void prune(double threshold);

    const std::vector<ArchiveEntry> &entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    size_t size() const { return entries_.size(); }

  private:
    std::vector<ArchiveEntry> entries_;
};

// Area dominated between the front and the reference point (minimization),
// by a sweep over f1-sorted points. Points outside the box are clipped.
double hypervolume_2d(const std::vector<ObjectivePoint> &front, double ref1 = 1.0,
                      double ref2 = 1.1);

double archive_hypervolume(const Archive &archive, double ref1 = 1.0, double ref2 = 1.1);

// Normalized by the reference box area.
double normalized_hypervolume(double hv, double ref1 = 1.0, double ref2 = 1.1);

// n weight vectors (w, 1-w) with w uniform over [eps, 1-eps].
std::vector<std::pair<double, double>> weight_grid(size_t n, double eps = 1e-6);

// Shuffles the weights, then greedily gives each to the unassigned individual
// with the lowest scalarization under it (ties to the lowest index). Returns
// assignment[individual] = weight index.
std::vector<size_t> assign_weights(const std::vector<ObjectivePoint> &population,
                                   const std::vector<std::pair<double, double>> &weights,
                                   Rng &rng);

} // namespace stitchnet
