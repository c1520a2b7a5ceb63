#pragma once

#include "stitchnet/linkage.hpp"
#include "stitchnet/objectives.hpp"
#include "stitchnet/phenotype.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace stitchnet {

// --- GA variation ------------------------------------------------------------

// Genes outside [cut1, cut2) come from p1, inside from p2.
Genotype two_point_crossover(const Genotype &p1, const Genotype &p2, size_t cut1, size_t cut2);

// Each gene mutates with probability 1/l to a uniformly chosen different
// value of its alphabet.
void uniform_mutation(Genotype &g, Rng &rng);

// Two-point crossover (uniform ordered cut points) followed by uniform
// mutation.
Genotype ga_generate(const Genotype &p1, const Genotype &p2, Rng &rng);

struct GaParent {
    ObjectivePoint point;
    double w1 = 0.5;
    double w2 = 0.5;
};

// MOEA/D-style replacement restricted to the parents: among parents the child
// beats (constraint-dominated scalarization under the parent's own weight),
// one is chosen uniformly; nullopt when the child beats neither.
std::optional<size_t> ga_select_replacement(const ObjectivePoint &child,
                                            const std::vector<GaParent> &parents,
                                            double threshold, Rng &rng);

// --- GOM ---------------------------------------------------------------------

struct GomOutcome {
    Genotype genotype;
    EvalResult result;
    int64_t evaluations = 0; // skipped ones included
    int64_t skipped = 0;
    bool improved = false;
    bool budget_hit = false;
};

// One Gene-pool Optimal Mixing pass: subsets traversed in random order, per
// subset a random donor's genes are copied in; unchanged subsets cost
// nothing, changes restricted to inactive switches inherit the previous
// result, anything else is evaluated. Changes are kept when not worse
// (equal objectives keep the change); otherwise reverted.
GomOutcome gom_step(const Genotype &start, const EvalResult &start_result,
                    std::vector<std::vector<size_t>> subsets,
                    const std::vector<Genotype> &donors, double w1, double w2,
                    double threshold, int64_t madds_ensemble,
                    const std::function<EvalResult(const Genotype &)> &evaluate_fn, Rng &rng,
                    int64_t max_evals = -1);

// --- asynchronous search -----------------------------------------------------

struct RunConfig {
    std::string algorithm = "ga"; // ga | gomea | lk-gomea | random
    size_t population = 16;
    int64_t budget = 2000;
    double time_limit_s = 0.0; // 0 = no limit
    uint64_t seed = 1;
    size_t workers = 0; // 0 = deterministic synchronous mode
    int64_t lk_min_neighborhood = 8;
    int64_t eval_limit = 128; // validation samples per evaluation (0 = all)
};

struct LogRecord {
    int64_t eval_index = 0; // 1-based, completion order
    std::string algo;
    uint64_t seed = 0;
    Genotype genotype;
    double accuracy = 0.0;
    int64_t madds = 0;
    bool skipped = false;
    bool feasible = false;
    double threshold = 0.0;
    int64_t wall_ms = 0; // 0 in deterministic mode
};

struct RunResult {
    std::vector<LogRecord> log;
    Archive archive;
    std::vector<double> hv_trace; // normalized hypervolume per completion
    std::string termination_reason; // budget | time | converged
    double skip_fraction = 0.0;
    int64_t madds_ensemble = 0;
    int64_t evaluations = 0;
};

// Runs n concurrent per-individual loops over a bounded evaluation service.
// The population is initialized with the parent-A, parent-B and ensemble
// reference genotypes plus biased samples. With cfg.workers == 0 the run is
// synchronous and bit-reproducible for a fixed seed.
RunResult run_search(const Supernetwork &supernet, const Dataset &dataset,
                     const RunConfig &cfg);

} // namespace stitchnet
