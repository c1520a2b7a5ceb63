#pragma once

#include "stitchnet/netgraph.hpp"

#include <string>

namespace stitchnet {

// A pair of untrained parent architectures plus the dataset task they are
// meant for. Preset "a" pairs a deep residual CNN with a shallow CNN (unequal
// depth); preset "b" pairs two same-depth structural variants (plain vs
// grouped block); preset "mlp" pairs two MLPs for the tabular tasks.
struct ParentPreset {
    std::string id;
    std::string dataset_task; // shapes | two_spirals | rings
    int64_t classes = 0;
    NetworkGraph parent_a;
    NetworkGraph parent_b;
};

ParentPreset make_preset(const std::string &id, uint64_t seed);

std::vector<std::string> preset_names();

} // namespace stitchnet
