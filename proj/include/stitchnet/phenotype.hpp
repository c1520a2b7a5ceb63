#pragma once

#include "stitchnet/rng.hpp"
#include "stitchnet/stitcher.hpp"
#include "stitchnet/synthdata.hpp"

#include <optional>
#include <string>
#include <vector>

namespace stitchnet {

// Fixed-length discrete decision vector in switch-registry order. Entries
// 0..l-2 are binary (0 = original, 1 = stitched); the last entry is ternary
// (0 = parent A output, 1 = parent B output, 2 = ensemble).
using Genotype = std::vector<uint8_t>;

std::string genotype_to_string(const Genotype &g);
Genotype genotype_from_string(const std::string &s);

// The all-zeros convention: inner genes 0, output gene as given.
Genotype reference_genotype(size_t length, uint8_t output_gene);

int64_t gene_alphabet_size(size_t index, size_t length); // 2 inner, 3 output

struct DecodedNetwork {
    NetworkGraph graph;              // runnable, switch-free, pruned
    std::vector<uint8_t> active;     // per switch: reached during decoding
};

// Works backwards from the output, simplifying each switch to its selected
// input; unreached nodes are dropped.
DecodedNetwork decode(const Supernetwork &supernet, const Genotype &genotype);

struct EvalResult {
    double accuracy = 0.0;
    int64_t madds = 0;
    std::vector<uint8_t> active_mask;
    bool skipped = false;
    std::optional<Tensor> probabilities; // softmax rows, kept only on request
};

// Accuracy over the first eval_limit samples of the split (0 = whole split)
// plus the decoded network's multiply-adds at batch size 1.
EvalResult evaluate(const Supernetwork &supernet, const Genotype &genotype,
                    const Dataset &dataset, Split split, int64_t eval_limit,
                    bool keep_probabilities = false);

// If every changed gene is inactive in the parent's evaluation, the parent's
// objective values still hold: returns a copy flagged skipped. Otherwise
// nullopt.
std::optional<EvalResult> maybe_skip(const EvalResult &parent_result,
                                     const Genotype &parent_genotype,
                                     const Genotype &child_genotype);

// Biased initialization: inner genes are 1 with probability p = 6.18 / l
// (clamped to [0, 1]); the output gene is uniform over {0, 1, 2}.
double biased_one_probability(size_t length);
Genotype biased_sample(size_t length, Rng &rng);

struct EceBin {
    int64_t count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;
};

struct EceReport {
    double ece = 0.0;
    std::vector<EceBin> bins;
};

// Expected calibration error with equal-width bins on the predicted-class
// probability. Rows must sum to 1 within 1e-4.
EceReport compute_ece(const Tensor &probabilities, const std::vector<int64_t> &labels,
                      int64_t num_bins = 10);

} // namespace stitchnet
