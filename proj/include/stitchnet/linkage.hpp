#pragma once

#include "stitchnet/phenotype.hpp"
#include "stitchnet/rng.hpp"

#include <vector>

namespace stitchnet {

// Pairwise mutual information from empirical joint frequencies (natural log);
// diagonal holds the marginal entropies.
std::vector<std::vector<double>> mutual_information_matrix(const std::vector<Genotype> &sample);

// UPGMA linkage tree over similarity = MI: every singleton plus every merged
// subset except the root. Ties broken toward the smallest min-index pair.
// Subset count is 2l - 2 for l >= 2.
std::vector<std::vector<size_t>> build_linkage_tree(const std::vector<std::vector<double>> &mi);

// m ~ uniform [1, n/c], k = ceil(n/m), so k >= c.
int64_t sample_kernel_size(int64_t n, int64_t c, Rng &rng);

// Indices of the k nearest population members by Hamming distance (ties by
// index), always including `self` first.
std::vector<size_t> knn_neighborhood(const std::vector<Genotype> &population, size_t self,
                                     int64_t k);

int64_t hamming(const Genotype &a, const Genotype &b);

} // namespace stitchnet
