#include "stitchnet/linkage.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stitchnet {

int64_t hamming(const Genotype &a, const Genotype &b)
{
    int64_t d = 0;
    for (size_t i = 0; i < a.size(); ++i)
        d += a[i] != b[i];
    return d;
}

std::vector<std::vector<double>> mutual_information_matrix(const std::vector<Genotype> &sample)
{
    if (sample.size() < 2)
        throw std::invalid_argument("mutual_information_matrix: need at least 2 genotypes");
    size_t l = sample[0].size();
    size_t n = sample.size();
    const int A = 3; // genes take values in {0, 1, 2}

    std::vector<std::vector<double>> mi(l, std::vector<double>(l, 0.0));
    double inv_n = 1.0 / static_cast<double>(n);

    for (size_t i = 0; i < l; ++i) {
        for (size_t j = i; j < l; ++j) {
            double joint[A][A] = {};
            for (const auto &g : sample)
                joint[g[i]][g[j]] += inv_n;
            double pi[A] = {}, pj[A] = {};
            for (int x = 0; x < A; ++x)
                for (int y = 0; y < A; ++y) {
                    pi[x] += joint[x][y];
                    pj[y] += joint[x][y];
                }
            double v = 0.0;
            if (i == j) {
                for (int x = 0; x < A; ++x)
                    if (pi[x] > 0.0)
                        v -= pi[x] * std::log(pi[x]);
            } else {
                for (int x = 0; x < A; ++x)
                    for (int y = 0; y < A; ++y)
                        if (joint[x][y] > 0.0)
                            v += joint[x][y] * std::log(joint[x][y] / (pi[x] * pj[y]));
            }
            mi[i][j] = v;
            mi[j][i] = v;
        }
    }
    return mi;
}

std::vector<std::vector<size_t>> build_linkage_tree(const std::vector<std::vector<double>> &mi)
{
    size_t l = mi.size();
    std::vector<std::vector<size_t>> subsets;

    struct Cluster {
        std::vector<size_t> members;
        size_t min_index;
    };
    std::vector<Cluster> clusters;
    for (size_t i = 0; i < l; ++i) {
        clusters.push_back({{i}, i});
        subsets.push_back({i});
    }
    if (l <= 1)
        return subsets;

    // Average pairwise MI between clusters, maintained under UPGMA merging.
    std::vector<std::vector<double>> sim(l, std::vector<double>(l, 0.0));
    for (size_t i = 0; i < l; ++i)
        for (size_t j = 0; j < l; ++j)
            if (i != j)
                sim[i][j] = mi[i][j];
    std::vector<bool> alive(l, true);

    for (size_t merges = 0; merges + 1 < l; ++merges) {
        size_t bi = l, bj = l;
        double best = 0.0;
        for (size_t i = 0; i < clusters.size(); ++i) {
            if (!alive[i])
                continue;
            for (size_t j = i + 1; j < clusters.size(); ++j) {
                if (!alive[j])
                    continue;
                double s = sim[i][j];
                size_t lo = std::min(clusters[i].min_index, clusters[j].min_index);
                size_t hi = std::max(clusters[i].min_index, clusters[j].min_index);
                bool better = bi == l || s > best;
                if (!better && s == best) {
                    size_t blo = std::min(clusters[bi].min_index, clusters[bj].min_index);
                    size_t bhi = std::max(clusters[bi].min_index, clusters[bj].min_index);
                    better = lo < blo || (lo == blo && hi < bhi);
                }
                if (better) {
                    bi = i;
                    bj = j;
                    best = s;
                }
            }
        }

        Cluster merged;
        merged.members = clusters[bi].members;
        merged.members.insert(merged.members.end(), clusters[bj].members.begin(),
                              clusters[bj].members.end());
        std::sort(merged.members.begin(), merged.members.end());
        merged.min_index = merged.members.front();

        double ni = static_cast<double>(clusters[bi].members.size());
        double nj = static_cast<double>(clusters[bj].members.size());
        size_t ni_idx = clusters.size();
        clusters.push_back(merged);
        alive.push_back(true);
        alive[bi] = false;
        alive[bj] = false;
        for (auto &row : sim)
            row.push_back(0.0);
        sim.push_back(std::vector<double>(clusters.size(), 0.0));
        for (size_t k = 0; k < ni_idx; ++k) {
            if (!alive[k])
                continue;
            double s = (ni * sim[bi][k] + nj * sim[bj][k]) / (ni + nj);
            sim[ni_idx][k] = s;
            sim[k][ni_idx] = s;
        }

        if (merged.members.size() < l)
            subsets.push_back(merged.members); // root excluded
    }
    return subsets;
}

int64_t sample_kernel_size(int64_t n, int64_t c, Rng &rng)
{
    if (n < 1 || c < 1 || n < c)
        throw std::invalid_argument("sample_kernel_size: need n >= c >= 1");
    int64_t m_max = std::max<int64_t>(1, n / c);
    int64_t m = rng.int_range(1, m_max);
    return (n + m - 1) / m; // ceil(n / m)
}

std::vector<size_t> knn_neighborhood(const std::vector<Genotype> &population, size_t self,
                                     int64_t k)
{
    size_t n = population.size();
    std::vector<std::pair<int64_t, size_t>> by_dist;
    by_dist.reserve(n - 1);
    for (size_t i = 0; i < n; ++i)
        if (i != self)
            by_dist.emplace_back(hamming(population[self], population[i]), i);
    std::sort(by_dist.begin(), by_dist.end());

    std::vector<size_t> out{self};
    for (const auto &[d, i] : by_dist) {
        if (static_cast<int64_t>(out.size()) >= k)
            break;
        out.push_back(i);
    }
    return out;
}

} // namespace stitchnet
