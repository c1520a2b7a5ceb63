#pragma once

#include "stitchnet/layers.hpp"
#include "stitchnet/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace stitchnet {

struct TaskSignature {
    Shape input_shape; // without the batch dimension, e.g. [1,16,16] or [2]
    int64_t num_classes = 0;

    bool operator==(const TaskSignature &o) const = default;
};

struct GraphNode {
    LayerSpec spec;
    std::vector<Tensor> weights;
    std::vector<std::string> inputs; // ordered
};

// Immutable DAG of typed layer nodes. Node ids are stable strings; merged
// supernetworks namespace them as "A/...", "B/...", "stitch/...", "switch/...".
struct NetworkGraph {
    std::string name;
    TaskSignature task;
    std::map<std::string, GraphNode> nodes;
    std::string input_node;
    std::string output_node;

    const GraphNode &node(const std::string &id) const;
    GraphNode &node(const std::string &id);
    bool has_node(const std::string &id) const { return nodes.count(id) > 0; }

    void add_node(const std::string &id, LayerSpec spec, std::vector<std::string> inputs,
                  std::vector<Tensor> weights = {});
};

// Output tensor per node for one forward pass.
using ActivationRecord = std::map<std::string, Tensor>;

// Deterministic topological order (ties broken by node id). Throws CycleError
// listing the node ids of one cycle.
std::vector<std::string> topological_order(const NetworkGraph &graph);

// Shape of every node's output for a given batch size, propagated from the
// graph input shape. Throws ShapeError with node-id context.
std::map<std::string, Shape> propagate_shapes(const NetworkGraph &graph, int64_t batch = 1);

Tensor forward(const NetworkGraph &graph, const Tensor &batch,
               ActivationRecord *capture = nullptr);

// Multiply-adds of one forward pass at batch size 1.
int64_t network_madds(const NetworkGraph &graph);
int64_t network_madds(const NetworkGraph &graph, const Shape &input_shape_without_batch);

// Drops every node from which the output is unreachable. Forward output is
// unchanged on all inputs.
NetworkGraph prune_dead(const NetworkGraph &graph);

struct EquivalenceReport {
    double max_abs_diff = 0.0;
    bool pass = false;
};

// Checks the graph against recorded (input, output) pairs.
EquivalenceReport verify_equivalence(const NetworkGraph &graph,
                                     const std::vector<std::pair<Tensor, Tensor>> &reference,
                                     double tol);

// --- training support -------------------------------------------------------

// Gradients of a scalar loss w.r.t. every weight tensor, given the gradient
// w.r.t. the graph output. Uses activations captured by a forward pass.
// Returns a map node-id -> weight gradient tensors (trainable nodes only).
std::map<std::string, std::vector<Tensor>> backward(const NetworkGraph &graph,
                                                    const ActivationRecord &activations,
                                                    const Tensor &output_grad);

} // namespace stitchnet
