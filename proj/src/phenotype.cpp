#include "stitchnet/phenotype.hpp"

#include "stitchnet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace stitchnet {

std::string genotype_to_string(const Genotype &g)
{
    std::string s;
    s.reserve(g.size());
    for (uint8_t v : g)
        s.push_back(static_cast<char>('0' + v));
    return s;
}

Genotype genotype_from_string(const std::string &s)
{
    Genotype g;
    g.reserve(s.size());
    for (char c : s) {
        if (c < '0' || c > '2')
            throw FormatError("genotype digit string contains '" + std::string(1, c) + "'");
        g.push_back(static_cast<uint8_t>(c - '0'));
    }
    return g;
}

Genotype reference_genotype(size_t length, uint8_t output_gene)
{
    Genotype g(length, 0);
    g.back() = output_gene;
    return g;
}

int64_t gene_alphabet_size(size_t index, size_t length)
{
    return index + 1 == length ? 3 : 2;
}

namespace {

void check_genotype(const Supernetwork &s, const Genotype &g)
{
    if (g.size() != s.genotype_length())
        throw std::invalid_argument("genotype length " + std::to_string(g.size()) +
                                    " does not match supernetwork (" +
                                    std::to_string(s.genotype_length()) + ")");
    for (size_t i = 0; i < g.size(); ++i)
        if (g[i] >= gene_alphabet_size(i, g.size()))
            throw std::invalid_argument("gene " + std::to_string(i) + " out of range");
}

} // namespace

DecodedNetwork decode(const Supernetwork &supernet, const Genotype &genotype)
{
    check_genotype(supernet, genotype);
    const NetworkGraph &merged = supernet.graph;

    DecodedNetwork out;
    out.active.assign(genotype.size(), 0);

    // Resolve a merged node to the node that actually feeds consumers:
    // switches collapse to their selected input (recursively).
    auto resolve = [&](const std::string &id) {
        std::string cur = id;
        while (true) {
            const GraphNode &node = merged.node(cur);
            if (node.spec.kind != LayerKind::Switch)
                return cur;
            size_t pos = supernet.switch_pos.at(cur);
            out.active[pos] = 1;
            cur = node.inputs[static_cast<size_t>(genotype[pos])];
        }
    };

    NetworkGraph &g = out.graph;
    g.name = merged.name;
    g.task = merged.task;
    g.input_node = merged.input_node;

    std::set<std::string> visited;
    std::vector<std::string> stack{resolve(merged.output_node)};
    g.output_node = stack[0];
    while (!stack.empty()) {
        std::string id = stack.back();
        stack.pop_back();
        if (!visited.insert(id).second)
            continue;
        const GraphNode &node = merged.node(id);
        std::vector<std::string> inputs;
        for (const auto &in : node.inputs) {
            std::string r = resolve(in);
            inputs.push_back(r);
            stack.push_back(r);
        }
        g.add_node(id, node.spec, std::move(inputs), node.weights);
    }
    return out;
}

EvalResult evaluate(const Supernetwork &supernet, const Genotype &genotype,
                    const Dataset &dataset, Split split, int64_t eval_limit,
                    bool keep_probabilities)
{
    DecodedNetwork decoded = decode(supernet, genotype);

    EvalResult result;
    result.active_mask = decoded.active;
    result.madds = network_madds(decoded.graph);

    Tensor samples = dataset.gather(split, eval_limit);
    std::vector<int64_t> labels = dataset.gather_labels(split, eval_limit);

    int64_t N = samples.shape[0];
    int64_t stride = shape_numel(dataset.task.input_shape);
    const int64_t chunk = 256;
    Tensor logits;
    for (int64_t start = 0; start < N; start += chunk) {
        int64_t cnt = std::min(chunk, N - start);
        Shape sh = dataset.task.input_shape;
        sh.insert(sh.begin(), cnt);
        Tensor part(sh, std::vector<float>(samples.data.begin() + start * stride,
                                           samples.data.begin() + (start + cnt) * stride));
        Tensor o = forward(decoded.graph, part);
        if (start == 0) {
            Shape osh = o.shape;
            osh[0] = N;
            logits = Tensor::zeros(osh);
        }
        std::copy_n(o.data.data(), o.numel(), logits.data.data() + start * o.shape[1]);
    }

    result.accuracy = accuracy_of_logits(logits, labels);
    if (keep_probabilities)
        result.probabilities = forward_layer(softmax_spec(), {}, {logits});
    return result;
}

std::optional<EvalResult> maybe_skip(const EvalResult &parent_result,
                                     const Genotype &parent_genotype,
                                     const Genotype &child_genotype)
{
    if (parent_genotype.size() != child_genotype.size() ||
        parent_result.active_mask.size() != parent_genotype.size())
        throw std::invalid_argument("maybe_skip: genotype/mask length mismatch");
    for (size_t i = 0; i < parent_genotype.size(); ++i)
        if (parent_genotype[i] != child_genotype[i] && parent_result.active_mask[i])
            return std::nullopt;
    EvalResult copy = parent_result;
    copy.skipped = true;
    return copy;
}

double biased_one_probability(size_t length)
{
    if (length < 1)
        throw std::invalid_argument("biased_one_probability: length must be >= 1");
    return std::min(1.0, 6.18 / static_cast<double>(length));
}

Genotype biased_sample(size_t length, Rng &rng)
{
    double p = biased_one_probability(length);
    Genotype g(length, 0);
    for (size_t i = 0; i + 1 < length; ++i)
        g[i] = rng.bernoulli(p) ? 1 : 0;
    g[length - 1] = static_cast<uint8_t>(rng.below(3));
    return g;
}

EceReport compute_ece(const Tensor &probabilities, const std::vector<int64_t> &labels,
                      int64_t num_bins)
{
    if (probabilities.dim() != 2)
        throw ShapeError("compute_ece: probability matrix must be 2D");
    if (num_bins < 1)
        throw std::invalid_argument("compute_ece: num_bins must be >= 1");
    int64_t N = probabilities.shape[0], K = probabilities.shape[1];
    if (static_cast<int64_t>(labels.size()) != N)
        throw ShapeError("compute_ece: labels length does not match rows");

    for (int64_t i = 0; i < N; ++i) {
        double sum = 0.0;
        for (int64_t k = 0; k < K; ++k)
            sum += probabilities.at2(i, k);
        if (std::abs(sum - 1.0) > 1e-4)
            throw std::invalid_argument("compute_ece: row " + std::to_string(i) +
                                        " sums to " + std::to_string(sum));
    }

    struct Acc {
        int64_t count = 0;
        double conf_sum = 0.0;
        int64_t correct = 0;
    };
    std::vector<Acc> acc(static_cast<size_t>(num_bins));
    for (int64_t i = 0; i < N; ++i) {
        int64_t pred = 0;
        for (int64_t k = 1; k < K; ++k)
            if (probabilities.at2(i, k) > probabilities.at2(i, pred))
                pred = k;
        double conf = probabilities.at2(i, pred);
        int64_t bin = std::min<int64_t>(num_bins - 1,
                                        static_cast<int64_t>(conf * static_cast<double>(num_bins)));
        acc[static_cast<size_t>(bin)].count += 1;
        acc[static_cast<size_t>(bin)].conf_sum += conf;
        if (pred == labels[static_cast<size_t>(i)])
            acc[static_cast<size_t>(bin)].correct += 1;
    }

    EceReport report;
    report.bins.resize(static_cast<size_t>(num_bins));
    for (int64_t b = 0; b < num_bins; ++b) {
        const Acc &a = acc[static_cast<size_t>(b)];
        EceBin &bin = report.bins[static_cast<size_t>(b)];
        bin.count = a.count;
        if (a.count == 0)
            continue; // empty bins contribute nothing
        bin.mean_confidence = a.conf_sum / static_cast<double>(a.count);
        bin.accuracy = static_cast<double>(a.correct) / static_cast<double>(a.count);
        report.ece += static_cast<double>(a.count) / static_cast<double>(N) *
                      std::abs(bin.accuracy - bin.mean_confidence);
    }
    return report;
}

} // namespace stitchnet
