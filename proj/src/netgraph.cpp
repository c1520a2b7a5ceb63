#include "stitchnet/netgraph.hpp"

#include "stitchnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace stitchnet {

const GraphNode &NetworkGraph::node(const std::string &id) const
{
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw ShapeError("unknown node id '" + id + "'");
    return it->second;
}

GraphNode &NetworkGraph::node(const std::string &id)
{
    auto it = nodes.find(id);
    if (it == nodes.end())
        throw ShapeError("unknown node id '" + id + "'");
    return it->second;
}

void NetworkGraph::add_node(const std::string &id, LayerSpec spec,
                            std::vector<std::string> inputs, std::vector<Tensor> weights)
{
    if (nodes.count(id))
        throw ShapeError("duplicate node id '" + id + "'");
    if (spec.kind != LayerKind::Input)
        spec.arity = static_cast<int64_t>(inputs.size());
    nodes[id] = GraphNode{std::move(spec), std::move(weights), std::move(inputs)};
}

std::vector<std::string> topological_order(const NetworkGraph &graph)
{
    std::map<std::string, int64_t> indegree;
    std::map<std::string, std::vector<std::string>> consumers;
    for (const auto &[id, node] : graph.nodes) {
        indegree.emplace(id, 0);
        for (const auto &in : node.inputs) {
            if (!graph.has_node(in))
                throw ShapeError("node '" + id + "' references unknown input '" + in + "'");
            consumers[in].push_back(id);
            indegree[id] += 1;
        }
    }

    // Min-heap on node id makes the order deterministic.
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto &[id, deg] : indegree)
        if (deg == 0)
            ready.push(id);

    std::vector<std::string> order;
    order.reserve(graph.nodes.size());
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto &c : consumers[id])
            if (--indegree[c] == 0)
                ready.push(c);
    }

    if (order.size() != graph.nodes.size()) {
        // Recover one concrete cycle among the unresolved nodes for the error.
        std::set<std::string> remaining;
        for (const auto &[id, deg] : indegree)
            if (deg > 0)
                remaining.insert(id);
        std::vector<std::string> path;
        std::set<std::string> on_path;
        std::string cur = *remaining.begin();
        while (!on_path.count(cur)) {
            path.push_back(cur);
            on_path.insert(cur);
            for (const auto &in : graph.node(cur).inputs)
                if (remaining.count(in)) {
                    cur = in;
                    break;
                }
        }
        std::vector<std::string> cycle(std::find(path.begin(), path.end(), cur), path.end());
        std::string msg = "graph contains a cycle:";
        for (const auto &n : cycle)
            msg += " " + n;
        throw CycleError(msg, cycle);
    }
    return order;
}

std::map<std::string, Shape> propagate_shapes(const NetworkGraph &graph, int64_t batch)
{
    std::map<std::string, Shape> shapes;
    Shape in_shape = graph.task.input_shape;
    in_shape.insert(in_shape.begin(), batch);
    for (const auto &id : topological_order(graph)) {
        const GraphNode &node = graph.node(id);
        if (node.spec.kind == LayerKind::Input) {
            shapes[id] = in_shape;
            continue;
        }
        std::vector<Shape> ins;
        for (const auto &src : node.inputs)
            ins.push_back(shapes.at(src));
        try {
            shapes[id] = infer_shape(node.spec, ins);
        } catch (const ShapeError &e) {
            throw ShapeError("node '" + id + "': " + e.what());
        }
    }
    return shapes;
}

Tensor forward(const NetworkGraph &graph, const Tensor &batch, ActivationRecord *capture)
{
    Shape expected = graph.task.input_shape;
    expected.insert(expected.begin(), batch.shape[0]);
    if (batch.shape != expected)
        throw ShapeError("forward: batch shape " + shape_to_string(batch.shape) +
                         " does not match task input " + shape_to_string(expected));

    std::map<std::string, Tensor> values;
    for (const auto &id : topological_order(graph)) {
        const GraphNode &node = graph.node(id);
        Tensor out;
        if (node.spec.kind == LayerKind::Input) {
            out = batch;
        } else {
            std::vector<Tensor> ins;
            ins.reserve(node.inputs.size());
            for (const auto &src : node.inputs)
                ins.push_back(values.at(src));
            try {
                out = forward_layer(node.spec, node.weights, ins);
            } catch (const ShapeError &e) {
                throw ShapeError("node '" + id + "': " + e.what());
            }
        }
        values[id] = std::move(out);
    }
    if (capture)
        *capture = values;
    return values.at(graph.output_node);
}

int64_t network_madds(const NetworkGraph &graph)
{
    return network_madds(graph, graph.task.input_shape);
}

int64_t network_madds(const NetworkGraph &graph, const Shape &input_shape_without_batch)
{
    NetworkGraph g = graph; // cheap at desk scale; keeps the signature simple
    g.task.input_shape = input_shape_without_batch;
    auto shapes = propagate_shapes(g, 1);
    int64_t total = 0;
    for (const auto &[id, node] : g.nodes) {
        if (node.spec.kind == LayerKind::Input || node.spec.kind == LayerKind::Switch)
            continue;
        std::vector<Shape> ins;
        for (const auto &src : node.inputs)
            ins.push_back(shapes.at(src));
        total += madds_of_layer(node.spec, ins);
    }
    return total;
}

NetworkGraph prune_dead(const NetworkGraph &graph)
{
    // Keep exactly the nodes from which the output is reachable, i.e. the
    // transitive inputs of the output node.
    std::set<std::string> keep;
    std::vector<std::string> stack{graph.output_node};
    while (!stack.empty()) {
        std::string id = stack.back();
        stack.pop_back();
        if (keep.count(id))
            continue;
        keep.insert(id);
        for (const auto &in : graph.node(id).inputs)
            stack.push_back(in);
    }

    NetworkGraph pruned;
    pruned.name = graph.name;
    pruned.task = graph.task;
    pruned.input_node = graph.input_node;
    pruned.output_node = graph.output_node;
    for (const auto &[id, node] : graph.nodes)
        if (keep.count(id))
            pruned.nodes[id] = node;
    return pruned;
}

EquivalenceReport verify_equivalence(const NetworkGraph &graph,
                                     const std::vector<std::pair<Tensor, Tensor>> &reference,
                                     double tol)
{
    EquivalenceReport report;
    for (const auto &[input, expected] : reference) {
        Tensor out = forward(graph, input);
        if (out.shape != expected.shape)
            throw ShapeError("verify_equivalence: output shape " + shape_to_string(out.shape) +
                             " != reference shape " + shape_to_string(expected.shape));
        for (int64_t i = 0; i < out.numel(); ++i) {
            double d = std::abs(static_cast<double>(out.at(i)) -
                                static_cast<double>(expected.at(i)));
            report.max_abs_diff = std::max(report.max_abs_diff, d);
        }
    }
    report.pass = report.max_abs_diff <= tol;
    return report;
}

std::map<std::string, std::vector<Tensor>> backward(const NetworkGraph &graph,
                                                    const ActivationRecord &activations,
                                                    const Tensor &output_grad)
{
    auto order = topological_order(graph);
    std::map<std::string, Tensor> node_grads;
    node_grads[graph.output_node] = output_grad;

    std::map<std::string, std::vector<Tensor>> weight_grads;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::string &id = *it;
        auto git = node_grads.find(id);
        if (git == node_grads.end())
            continue; // node does not influence the output
        const GraphNode &node = graph.node(id);
        if (node.spec.kind == LayerKind::Input)
            continue;

        std::vector<Tensor> ins;
        ins.reserve(node.inputs.size());
        for (const auto &src : node.inputs)
            ins.push_back(activations.at(src));
        LayerGrads g = backward_layer(node.spec, node.weights, ins, git->second);
        if (!g.weight_grads.empty())
            weight_grads[id] = std::move(g.weight_grads);
        for (size_t i = 0; i < node.inputs.size(); ++i) {
            const std::string &src = node.inputs[i];
            auto dst = node_grads.find(src);
            if (dst == node_grads.end()) {
                node_grads[src] = std::move(g.input_grads[i]);
            } else {
                Tensor &acc = dst->second;
                for (int64_t j = 0; j < acc.numel(); ++j)
                    acc.at(j) += g.input_grads[i].at(j);
            }
        }
    }
    return weight_grads;
}

} // namespace stitchnet
