#pragma once

#include "stitchnet/netgraph.hpp"
#include "stitchnet/synthdata.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stitchnet {

enum class StitchKind { LinearStitch, Conv1x1Stitch };

std::string stitch_kind_to_string(StitchKind k);
std::optional<StitchKind> stitch_kind_from_string(const std::string &s);

// A shape-compatible pair of layers, one per parent. feat_* is the feature
// count (LinearStitch) or channel count (Conv1x1Stitch) of each side.
struct MatchCandidate {
    std::string node_a;
    std::string node_b;
    StitchKind kind = StitchKind::LinearStitch;
    int64_t feat_a = 0;
    int64_t feat_b = 0;
    int64_t sp_h = 0; // spatial dims, Conv1x1Stitch only
    int64_t sp_w = 0;

    bool operator==(const MatchCandidate &o) const = default;
};

struct MatchingPlan {
    std::vector<MatchCandidate> matches; // deterministic genotype order
    bool timeout_hit = false;            // search budget exceeded, best-so-far returned
    int64_t nodes_expanded = 0;
};

struct SwitchInfo {
    std::string id;
    std::vector<std::string> inputs; // input 0 is always the original output
};

// Merged graph of two frozen parents plus stitch and switch nodes. The switch
// registry order defines the genotype: per match the A-side switch precedes
// the B-side switch, and the output switch comes last, so the genotype length
// is 2*|matches| + 1.
struct Supernetwork {
    NetworkGraph graph;
    std::vector<SwitchInfo> switches;
    std::map<std::string, size_t> switch_pos; // id -> genotype index
    std::vector<MatchCandidate> matches;
    std::string parent_a_name;
    std::string parent_b_name;

    size_t genotype_length() const { return switches.size(); }
};

struct CandidateFilter {
    // Keep every stride-th eligible node per parent (1 = all).
    size_t stride_a = 1;
    size_t stride_b = 1;
};

// All node pairs satisfying the LinearStitch (both outputs 2D) or
// Conv1x1Stitch (both outputs 4D with identical width and height) rules,
// excluding the input and output nodes. Order: A-topological outer,
// B-topological inner.
std::vector<MatchCandidate> find_candidates(const NetworkGraph &a, const NetworkGraph &b,
                                            const CandidateFilter &filter = {});

// True iff adding the candidate's stitch and switch edges (both directions)
// on top of the accepted plan's edges creates a cycle in the merged graph.
bool would_create_cycle(const NetworkGraph &a, const NetworkGraph &b,
                        const std::vector<MatchCandidate> &accepted,
                        const MatchCandidate &candidate);

// Maximum-cardinality node-disjoint acyclic subset of the candidates, by
// depth-first branch and bound over the candidates in order (include branch
// first). Among maxima this returns the lexicographically earliest in
// candidate order, which matches layers as early as possible. If the node
// expansion budget runs out, the best plan so far is returned with
// timeout_hit set.
MatchingPlan acyclic_max_matching(const NetworkGraph &a, const NetworkGraph &b,
                                  const std::vector<MatchCandidate> &candidates,
                                  int64_t expansion_budget = 4'000'000);

Supernetwork build_supernetwork(const NetworkGraph &a, const NetworkGraph &b,
                                const MatchingPlan &plan, uint64_t init_seed = 7);

struct StitchTrainConfig {
    std::string method = "closed_form"; // closed_form | adam
    float lr = 1e-3f;
    int64_t batch = 32;
    int64_t sample_budget = 16384; // training samples drawn from the train split
    double ridge = 1e-6;
    uint64_t seed = 1;
};

struct StitchReport {
    std::string stitch_id;
    int64_t samples = 0; // rows seen by the solver (spatial positions folded in)
    double mse = 0.0;    // per-element, over the captured sample set
    std::string method;
};

struct StitchTrainResult {
    Supernetwork supernet;
    std::vector<StitchReport> reports; // plan order: A-side stitch then B-side
};

// Trains all stitching layers simultaneously against the recipient layer's
// original activations (parent weights are never touched). closed_form solves
// ridge least squares exactly; adam runs minibatch optimization on the same
// MSE objective.
StitchTrainResult train_stitches(const Supernetwork &supernet, const Dataset &dataset,
                                 const StitchTrainConfig &cfg);

struct LeastSquaresFit {
    Tensor weight; // [n, m]
    Tensor bias;   // [m]
};

// Minimizes ||X W + b - Y||^2 + ridge*||W||^2 via normal equations on
// mean-centered data. X is [S, n], Y is [S, m]. A singular system with
// ridge == 0 is an error instructing ridge > 0.
LeastSquaresFit solve_stitch_least_squares(const Tensor &x, const Tensor &y, double ridge);

// Per-element MSE of forwarding the named stitch over the captured sample
// set; used by tests and reports.
double stitch_mse(const Supernetwork &supernet, const Dataset &dataset,
                  const std::string &stitch_id, int64_t sample_budget, uint64_t seed);

// Supernetwork container: network container plus matches, switches and
// genotype order sections.
void save_supernetwork(const Supernetwork &s, const std::string &path);
Supernetwork load_supernetwork(const std::string &path);

} // namespace stitchnet
