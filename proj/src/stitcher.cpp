#include "stitchnet/stitcher.hpp"

#include "stitchnet/adam.hpp"
#include "stitchnet/errors.hpp"
#include "stitchnet/serialize.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <set>

namespace stitchnet {

std::string stitch_kind_to_string(StitchKind k)
{
    return k == StitchKind::LinearStitch ? "LinearStitch" : "Conv1x1Stitch";
}

std::optional<StitchKind> stitch_kind_from_string(const std::string &s)
{
    if (s == "LinearStitch")
        return StitchKind::LinearStitch;
    if (s == "Conv1x1Stitch")
        return StitchKind::Conv1x1Stitch;
    return std::nullopt;
}

namespace {

std::string merged_id(const NetworkGraph &g, const std::string &prefix, const std::string &id)
{
    return id == g.input_node ? "input" : prefix + "/" + id;
}

uint64_t fnv1a(const std::string &s)
{
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Integer projection of the merged graph onto the parent nodes. A match (a,b)
// makes every consumer of a depend on b and every consumer of b depend on a
// (through the inserted stitch and switch); the stitch/switch nodes themselves
// cannot close a cycle any other way, so checking this projection is
// equivalent to checking the full merged graph. Matches are pushed and popped
// incrementally during branch and bound.
class CycleChecker {
  public:
    CycleChecker(const NetworkGraph &a, const NetworkGraph &b)
    {
        index_nodes(a, 'a');
        index_nodes(b, 'b');
        size_t n = names_.size();
        succ_.resize(n);
        extra_.resize(n);
        for (const auto &[id, node] : a.nodes)
            for (const auto &in : node.inputs)
                succ_[static_cast<size_t>(idx('a', in))].push_back(idx('a', id));
        for (const auto &[id, node] : b.nodes)
            for (const auto &in : node.inputs)
                succ_[static_cast<size_t>(idx('b', in))].push_back(idx('b', id));
        indeg_.resize(n);
        stack_.reserve(n);
    }

    int idx(char side, const std::string &id) const { return ids_.at(key(side, id)); }

    void push_match(const MatchCandidate &m)
    {
        int a = idx('a', m.node_a);
        int b = idx('b', m.node_b);
        size_t count = 0;
        for (int c : succ_[static_cast<size_t>(a)]) {
            extra_[static_cast<size_t>(b)].push_back(c);
            ++count;
        }
        pushed_.push_back({static_cast<size_t>(b), count});
        count = 0;
        for (int c : succ_[static_cast<size_t>(b)]) {
            extra_[static_cast<size_t>(a)].push_back(c);
            ++count;
        }
        pushed_.push_back({static_cast<size_t>(a), count});
    }

    void pop_match()
    {
        for (int k = 0; k < 2; ++k) {
            auto [v, count] = pushed_.back();
            pushed_.pop_back();
            extra_[v].resize(extra_[v].size() - count);
        }
    }

    bool has_cycle()
    {
        size_t n = names_.size();
        std::fill(indeg_.begin(), indeg_.end(), 0);
        for (size_t v = 0; v < n; ++v) {
            for (int c : succ_[v])
                ++indeg_[static_cast<size_t>(c)];
            for (int c : extra_[v])
                ++indeg_[static_cast<size_t>(c)];
        }
        stack_.clear();
        for (size_t v = 0; v < n; ++v)
            if (indeg_[v] == 0)
                stack_.push_back(static_cast<int>(v));
        size_t seen = 0;
        while (!stack_.empty()) {
            size_t v = static_cast<size_t>(stack_.back());
            stack_.pop_back();
            ++seen;
            for (int c : succ_[v])
                if (--indeg_[static_cast<size_t>(c)] == 0)
                    stack_.push_back(c);
            for (int c : extra_[v])
                if (--indeg_[static_cast<size_t>(c)] == 0)
                    stack_.push_back(c);
        }
        return seen != n;
    }

    bool creates_cycle(const std::vector<MatchCandidate> &accepted, const MatchCandidate *extra)
    {
        for (const auto &m : accepted)
            push_match(m);
        if (extra)
            push_match(*extra);
        bool cycle = has_cycle();
        if (extra)
            pop_match();
        for (size_t i = 0; i < accepted.size(); ++i)
            pop_match();
        return cycle;
    }

  private:
    static std::string key(char side, const std::string &id) { return side + (":" + id); }

    void index_nodes(const NetworkGraph &g, char side)
    {
        for (const auto &[id, node] : g.nodes) {
            ids_.emplace(key(side, id), static_cast<int>(names_.size()));
            names_.push_back(key(side, id));
        }
    }

    std::map<std::string, int> ids_;
    std::vector<std::string> names_;
    std::vector<std::vector<int>> succ_;
    std::vector<std::vector<int>> extra_;
    std::vector<std::pair<size_t, size_t>> pushed_;
    std::vector<int> indeg_;
    std::vector<int> stack_;
};

} // namespace

std::vector<MatchCandidate> find_candidates(const NetworkGraph &a, const NetworkGraph &b,
                                            const CandidateFilter &filter)
{
    if (a.task != b.task)
        throw ShapeError("find_candidates: parents must share the task signature");

    auto shapes_a = propagate_shapes(a, 1);
    auto shapes_b = propagate_shapes(b, 1);

    auto eligible = [&](const NetworkGraph &g, const std::string &id) {
        return id != g.input_node && id != g.output_node;
    };

    std::vector<std::string> nodes_a, nodes_b;
    size_t i = 0;
    for (const auto &id : topological_order(a))
        if (eligible(a, id) && (i++ % filter.stride_a) == 0)
            nodes_a.push_back(id);
    i = 0;
    for (const auto &id : topological_order(b))
        if (eligible(b, id) && (i++ % filter.stride_b) == 0)
            nodes_b.push_back(id);

    std::vector<MatchCandidate> out;
    for (const auto &na : nodes_a) {
        const Shape &sa = shapes_a.at(na);
        for (const auto &nb : nodes_b) {
            const Shape &sb = shapes_b.at(nb);
            MatchCandidate c;
            c.node_a = na;
            c.node_b = nb;
            if (sa.size() == 2 && sb.size() == 2) {
                c.kind = StitchKind::LinearStitch;
                c.feat_a = sa[1];
                c.feat_b = sb[1];
            } else if (sa.size() == 4 && sb.size() == 4 && sa[2] == sb[2] && sa[3] == sb[3]) {
                c.kind = StitchKind::Conv1x1Stitch;
                c.feat_a = sa[1];
                c.feat_b = sb[1];
                c.sp_h = sa[2];
                c.sp_w = sa[3];
            } else {
                continue;
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

bool would_create_cycle(const NetworkGraph &a, const NetworkGraph &b,
                        const std::vector<MatchCandidate> &accepted,
                        const MatchCandidate &candidate)
{
    CycleChecker checker(a, b);
    bool with = checker.creates_cycle(accepted, &candidate);
    return with;
}

MatchingPlan acyclic_max_matching(const NetworkGraph &a, const NetworkGraph &b,
                                  const std::vector<MatchCandidate> &candidates,
                                  int64_t expansion_budget)
{
    CycleChecker checker(a, b);
    MatchingPlan plan;
    size_t n = candidates.size();

    // Integer endpoint ids for the bound computation.
    std::map<std::string, int> a_ids, b_ids;
    std::vector<int> cand_a(n), cand_b(n);
    for (size_t i = 0; i < n; ++i) {
        cand_a[i] = static_cast<int>(a_ids.emplace(candidates[i].node_a,
                                                   static_cast<int>(a_ids.size()))
                                         .first->second);
        cand_b[i] = static_cast<int>(b_ids.emplace(candidates[i].node_b,
                                                   static_cast<int>(b_ids.size()))
                                         .first->second);
    }
    std::vector<char> used_a(a_ids.size(), 0), used_b(b_ids.size(), 0);
    std::vector<char> seen_a(a_ids.size(), 0), seen_b(b_ids.size(), 0);

    std::vector<MatchCandidate> accepted;
    std::vector<MatchCandidate> best;
    int64_t expansions = 0;
    bool timeout = false;

    // Depth-first include/exclude in candidate order. Include is explored
    // first and the incumbent only improves strictly, so the first maximum
    // found is the lexicographically earliest one.
    auto dfs = [&](auto &&self, size_t idx) -> void {
        if (timeout)
            return;
        if (++expansions > expansion_budget) {
            timeout = true;
            return;
        }
        // Upper bound: a node-disjoint matching cannot use more than the
        // number of distinct unused endpoints on either side among the
        // remaining candidates.
        size_t free_a = 0, free_b = 0;
        for (size_t k = idx; k < n; ++k) {
            int ai = cand_a[k], bi = cand_b[k];
            if (used_a[ai] || used_b[bi])
                continue;
            if (!seen_a[ai]) {
                seen_a[ai] = 1;
                ++free_a;
            }
            if (!seen_b[bi]) {
                seen_b[bi] = 1;
                ++free_b;
            }
        }
        for (size_t k = idx; k < n; ++k) {
            seen_a[cand_a[k]] = 0;
            seen_b[cand_b[k]] = 0;
        }
        if (accepted.size() + std::min(free_a, free_b) <= best.size())
            return;
        if (idx == n)
            return;

        const MatchCandidate &c = candidates[idx];
        if (!used_a[cand_a[idx]] && !used_b[cand_b[idx]]) {
            checker.push_match(c);
            if (!checker.has_cycle()) {
                accepted.push_back(c);
                used_a[cand_a[idx]] = 1;
                used_b[cand_b[idx]] = 1;
                if (accepted.size() > best.size())
                    best = accepted;
                self(self, idx + 1);
                accepted.pop_back();
                used_a[cand_a[idx]] = 0;
                used_b[cand_b[idx]] = 0;
            }
            checker.pop_match();
        }
        self(self, idx + 1);
    };
    dfs(dfs, 0);

    plan.matches = best;
    plan.timeout_hit = timeout;
    plan.nodes_expanded = expansions;
    return plan;
}

namespace {

LayerSpec stitch_spec(const MatchCandidate &m, bool into_a)
{
    int64_t from = into_a ? m.feat_b : m.feat_a;
    int64_t to = into_a ? m.feat_a : m.feat_b;
    if (m.kind == StitchKind::LinearStitch)
        return linear_spec(from, to);
    return conv2d_spec(from, to, 1, 1, 1, 0);
}

std::vector<Tensor> stitch_init(const LayerSpec &spec, uint64_t seed, const std::string &id)
{
    // N(0, 1/n_in) so the least-squares and Adam paths start from the same
    // mild scale; keyed by stitch id so init does not depend on plan order.
    Rng rng = Rng(seed).fork(fnv1a(id));
    int64_t n_in = spec.kind == LayerKind::Linear ? spec.in_features : spec.in_ch;
    double sd = std::sqrt(1.0 / static_cast<double>(n_in));
    std::vector<Tensor> w;
    if (spec.kind == LayerKind::Linear) {
        Tensor W = Tensor::zeros({spec.out_features, spec.in_features});
        for (auto &v : W.data)
            v = static_cast<float>(rng.normal(0.0, sd));
        w.push_back(std::move(W));
        w.push_back(Tensor::zeros({spec.out_features}));
    } else {
        Tensor W = Tensor::zeros({spec.out_ch, spec.in_ch, 1, 1});
        for (auto &v : W.data)
            v = static_cast<float>(rng.normal(0.0, sd));
        w.push_back(std::move(W));
        w.push_back(Tensor::zeros({spec.out_ch}));
    }
    return w;
}

} // namespace

Supernetwork build_supernetwork(const NetworkGraph &a, const NetworkGraph &b,
                                const MatchingPlan &plan, uint64_t init_seed)
{
    if (a.task != b.task)
        throw ShapeError("build_supernetwork: parents must share the task signature");

    std::set<std::string> matched_a, matched_b;
    for (const auto &m : plan.matches) {
        if (!a.has_node(m.node_a) || !b.has_node(m.node_b))
            throw ShapeError("build_supernetwork: plan references unknown node");
        if (m.node_a == a.input_node || m.node_a == a.output_node ||
            m.node_b == b.input_node || m.node_b == b.output_node)
            throw ShapeError("build_supernetwork: input/output nodes cannot be matched");
        if (!matched_a.insert(m.node_a).second || !matched_b.insert(m.node_b).second)
            throw ShapeError("build_supernetwork: plan is not node-disjoint");
    }

    Supernetwork s;
    s.parent_a_name = a.name;
    s.parent_b_name = b.name;
    s.matches = plan.matches;
    NetworkGraph &g = s.graph;
    g.name = a.name + "+" + b.name;
    g.task = a.task;
    g.input_node = "input";
    g.add_node("input", input_spec(), {});

    // Parent nodes, with original connections to a matched node replaced by
    // that node's switch.
    auto copy_parent = [&](const NetworkGraph &p, const std::string &prefix,
                           const std::set<std::string> &matched) {
        for (const auto &[id, node] : p.nodes) {
            if (id == p.input_node)
                continue;
            std::vector<std::string> inputs;
            for (const auto &in : node.inputs)
                inputs.push_back(matched.count(in) ? "switch/" + prefix + "/" + in
                                                   : merged_id(p, prefix, in));
            g.add_node(prefix + "/" + id, node.spec, std::move(inputs), node.weights);
        }
    };
    copy_parent(a, "A", matched_a);
    copy_parent(b, "B", matched_b);

    // Stitches tap the donor's pre-switch output; each switch offers
    // [original, stitched].
    for (const auto &m : plan.matches) {
        std::string a_id = "A/" + m.node_a;
        std::string b_id = "B/" + m.node_b;

        LayerSpec into_a = stitch_spec(m, true);
        g.add_node("stitch/" + a_id, into_a, {b_id},
                   stitch_init(into_a, init_seed, "stitch/" + a_id));
        g.add_node("switch/" + a_id, switch_spec(2), {a_id, "stitch/" + a_id});
        s.switches.push_back({"switch/" + a_id, {a_id, "stitch/" + a_id}});

        LayerSpec into_b = stitch_spec(m, false);
        g.add_node("stitch/" + b_id, into_b, {a_id},
                   stitch_init(into_b, init_seed, "stitch/" + b_id));
        g.add_node("switch/" + b_id, switch_spec(2), {b_id, "stitch/" + b_id});
        s.switches.push_back({"switch/" + b_id, {b_id, "stitch/" + b_id}});
    }

    std::string out_a = "A/" + a.output_node;
    std::string out_b = "B/" + b.output_node;
    g.add_node("ensemble", average_spec(2), {out_a, out_b});
    g.add_node("switch/output", switch_spec(3), {out_a, out_b, "ensemble"});
    s.switches.push_back({"switch/output", {out_a, out_b, "ensemble"}});
    g.output_node = "switch/output";

    for (size_t i = 0; i < s.switches.size(); ++i)
        s.switch_pos[s.switches[i].id] = i;

    if (s.genotype_length() != 2 * plan.matches.size() + 1)
        throw ShapeError("build_supernetwork: genotype length identity violated");

    topological_order(g); // defensive: valid plans cannot cycle
    propagate_shapes(g, 1);
    return s;
}

namespace {

// Forward pass over the merged graph with every switch passing its original
// input; stitch nodes are not executed (their outputs feed only switches).
// Records the activations of the requested nodes.
void forward_passthrough(const Supernetwork &s, const Tensor &batch,
                         const std::set<std::string> &record,
                         std::map<std::string, Tensor> &out)
{
    std::set<std::string> stitch_ids;
    for (const auto &m : s.matches) {
        stitch_ids.insert("stitch/A/" + m.node_a);
        stitch_ids.insert("stitch/B/" + m.node_b);
    }
    std::map<std::string, Tensor> values;
    for (const auto &id : topological_order(s.graph)) {
        if (stitch_ids.count(id))
            continue;
        const GraphNode &node = s.graph.node(id);
        Tensor v;
        if (node.spec.kind == LayerKind::Input) {
            v = batch;
        } else if (node.spec.kind == LayerKind::Switch) {
            v = values.at(node.inputs[0]);
        } else {
            std::vector<Tensor> ins;
            for (const auto &in : node.inputs)
                ins.push_back(values.at(in));
            v = forward_layer(node.spec, node.weights, ins);
        }
        values[id] = std::move(v);
    }
    for (const auto &id : record)
        out[id] = std::move(values.at(id));
}

// Activation tensor -> row matrix for the stitch solver: 2D stays [B, F],
// 4D folds spatial positions into the sample axis as [B*H*W, C].
Tensor to_rows(const Tensor &act)
{
    if (act.dim() == 2)
        return act;
    int64_t B = act.shape[0], C = act.shape[1], H = act.shape[2], W = act.shape[3];
    Tensor rows = Tensor::zeros({B * H * W, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const float *p = act.plane(b, c);
            for (int64_t i = 0; i < H * W; ++i)
                rows.at2(b * H * W + i, c) = p[i];
        }
    return rows;
}

struct StitchRef {
    std::string stitch_id;
    std::string donor;     // merged node id providing the input
    std::string recipient; // merged node id providing the target
};

// Linear row-view of a stitch's parameters: W [out, in], b [out]. Linear and
// Conv1x1 weights share this layout, so folded-row forwarding covers both.
struct RowParams {
    Tensor W;
    Tensor b;
};

RowParams read_stitch(const GraphNode &node)
{
    int64_t out = node.weights[0].shape[0];
    int64_t in = node.weights[0].shape[1];
    return {Tensor({out, in}, node.weights[0].data), node.weights[1]};
}

void write_stitch(GraphNode &node, const RowParams &p)
{
    node.weights[0].data = p.W.data; // layouts match for Linear and Conv1x1
    node.weights[1] = p.b;
}

LayerSpec row_spec(const RowParams &p) { return linear_spec(p.W.shape[1], p.W.shape[0]); }

Tensor rows_forward(const RowParams &p, const Tensor &x)
{
    return forward_layer(row_spec(p), {p.W, p.b}, {x});
}

// Writes a least-squares solution W [n, m], bias [m] into the stitch node.
void write_solution(GraphNode &node, const Eigen::MatrixXd &W, const Eigen::VectorXd &bias)
{
    RowParams p = read_stitch(node);
    for (int64_t o = 0; o < p.W.shape[0]; ++o)
        for (int64_t i = 0; i < p.W.shape[1]; ++i)
            p.W.at2(o, i) = static_cast<float>(W(i, o));
    for (int64_t o = 0; o < p.b.numel(); ++o)
        p.b.at(o) = static_cast<float>(bias(o));
    write_stitch(node, p);
}

std::vector<StitchRef> stitch_refs(const Supernetwork &s)
{
    std::vector<StitchRef> refs;
    for (const auto &m : s.matches) {
        refs.push_back({"stitch/A/" + m.node_a, "B/" + m.node_b, "A/" + m.node_a});
        refs.push_back({"stitch/B/" + m.node_b, "A/" + m.node_a, "B/" + m.node_b});
    }
    return refs;
}

// Unique training rows used for the least-squares fit and MSE measurement.
std::vector<int64_t> training_rows(const Dataset &ds, int64_t sample_budget, uint64_t seed)
{
    std::vector<int64_t> rows = ds.train_idx;
    Rng rng = Rng(seed).fork(51);
    rng.shuffle(rows);
    if (sample_budget > 0 && static_cast<int64_t>(rows.size()) > sample_budget)
        rows.resize(static_cast<size_t>(sample_budget));
    return rows;
}

// Adam stream: reshuffled epochs over the train split until the sample
// budget is spent (the split is smaller than the budget at desk scale).
std::vector<int64_t> training_stream(const Dataset &ds, int64_t sample_budget, uint64_t seed)
{
    std::vector<int64_t> rows = ds.train_idx;
    Rng rng = Rng(seed).fork(51);
    std::vector<int64_t> stream;
    stream.reserve(static_cast<size_t>(sample_budget));
    while (static_cast<int64_t>(stream.size()) < sample_budget) {
        rng.shuffle(rows);
        for (int64_t r : rows) {
            if (static_cast<int64_t>(stream.size()) >= sample_budget)
                break;
            stream.push_back(r);
        }
    }
    return stream;
}

Tensor gather_batch(const Dataset &ds, const std::vector<int64_t> &rows, size_t lo, size_t hi)
{
    int64_t stride = shape_numel(ds.task.input_shape);
    Shape sh = ds.task.input_shape;
    sh.insert(sh.begin(), static_cast<int64_t>(hi - lo));
    Tensor out = Tensor::zeros(sh);
    for (size_t i = lo; i < hi; ++i)
        std::copy_n(ds.samples.data.data() + rows[i] * stride, stride,
                    out.data.data() + static_cast<int64_t>(i - lo) * stride);
    return out;
}

// Streamed per-stitch mean squared error over the given sample rows.
std::map<std::string, double> measure_mse(const Supernetwork &s, const Dataset &ds,
                                          const std::vector<int64_t> &rows)
{
    auto refs = stitch_refs(s);
    std::set<std::string> record;
    for (const auto &r : refs) {
        record.insert(r.donor);
        record.insert(r.recipient);
    }
    std::map<std::string, double> sq_sum;
    std::map<std::string, int64_t> counts;
    const size_t chunk = 256;
    for (size_t lo = 0; lo < rows.size(); lo += chunk) {
        size_t hi = std::min(rows.size(), lo + chunk);
        Tensor batch = gather_batch(ds, rows, lo, hi);
        std::map<std::string, Tensor> acts;
        forward_passthrough(s, batch, record, acts);
        for (const auto &r : refs) {
            Tensor x = to_rows(acts.at(r.donor));
            Tensor y = to_rows(acts.at(r.recipient));
            RowParams p = read_stitch(s.graph.node(r.stitch_id));
            Tensor pred = rows_forward(p, x);
            double acc = 0.0;
            for (int64_t i = 0; i < pred.numel(); ++i) {
                double d = static_cast<double>(pred.at(i)) - static_cast<double>(y.at(i));
                acc += d * d;
            }
            sq_sum[r.stitch_id] += acc;
            counts[r.stitch_id] += pred.numel();
        }
    }
    std::map<std::string, double> mse;
    for (const auto &[id, sq] : sq_sum)
        mse[id] = sq / static_cast<double>(counts.at(id));
    return mse;
}

} // namespace

LeastSquaresFit solve_stitch_least_squares(const Tensor &x, const Tensor &y, double ridge)
{
    if (x.dim() != 2 || y.dim() != 2 || x.shape[0] != y.shape[0])
        throw ShapeError("solve_stitch_least_squares: X and Y must be 2D with equal rows");
    if (x.shape[0] < 1)
        throw std::invalid_argument("solve_stitch_least_squares: need at least one sample");
    if (ridge < 0)
        throw std::invalid_argument("solve_stitch_least_squares: ridge must be >= 0");

    int64_t S = x.shape[0], n = x.shape[1], m = y.shape[1];
    Eigen::MatrixXd X(S, n), Y(S, m);
    for (int64_t i = 0; i < S; ++i) {
        for (int64_t j = 0; j < n; ++j)
            X(i, j) = x.at2(i, j);
        for (int64_t j = 0; j < m; ++j)
            Y(i, j) = y.at2(i, j);
    }
    Eigen::RowVectorXd mean_x = X.colwise().mean();
    Eigen::RowVectorXd mean_y = Y.colwise().mean();
    Eigen::MatrixXd Xc = X.rowwise() - mean_x;
    Eigen::MatrixXd Yc = Y.rowwise() - mean_y;

    Eigen::MatrixXd A = Xc.transpose() * Xc;
    A.diagonal().array() += ridge;
    Eigen::MatrixXd B = Xc.transpose() * Yc;

    Eigen::MatrixXd W;
    if (ridge == 0.0) {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible())
            throw std::invalid_argument(
                "solve_stitch_least_squares: singular normal equations; set ridge > 0");
        W = lu.solve(B);
    } else {
        W = Eigen::LDLT<Eigen::MatrixXd>(A).solve(B);
    }
    Eigen::RowVectorXd bias = mean_y - mean_x * W;

    LeastSquaresFit fit;
    fit.weight = Tensor::zeros({n, m});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j)
            fit.weight.at2(i, j) = static_cast<float>(W(i, j));
    fit.bias = Tensor::zeros({m});
    for (int64_t j = 0; j < m; ++j)
        fit.bias.at(j) = static_cast<float>(bias(j));
    return fit;
}

StitchTrainResult train_stitches(const Supernetwork &supernet, const Dataset &dataset,
                                 const StitchTrainConfig &cfg)
{
    if (cfg.method != "closed_form" && cfg.method != "adam")
        throw std::invalid_argument("train_stitches: method must be closed_form or adam");
    if (dataset.train_idx.empty())
        throw std::invalid_argument("train_stitches: train split is empty");
    if (supernet.graph.task != dataset.task)
        throw ShapeError("train_stitches: task signatures do not match");

    StitchTrainResult result;
    result.supernet = supernet;
    Supernetwork &s = result.supernet;

    auto refs = stitch_refs(s);
    if (refs.empty())
        return result;

    std::set<std::string> record;
    for (const auto &r : refs) {
        record.insert(r.donor);
        record.insert(r.recipient);
    }
    std::vector<int64_t> rows = training_rows(dataset, cfg.sample_budget, cfg.seed);

    std::map<std::string, int64_t> row_counts;

    if (cfg.method == "closed_form") {
        // Streaming normal equations per stitch.
        struct Accum {
            Eigen::MatrixXd sxx; // sum of x x^T
            Eigen::MatrixXd sxy; // sum of x y^T
            Eigen::VectorXd sx;
            Eigen::VectorXd sy;
            int64_t count = 0;
        };
        std::map<std::string, Accum> accums;
        const size_t chunk = 256;
        for (size_t lo = 0; lo < rows.size(); lo += chunk) {
            size_t hi = std::min(rows.size(), lo + chunk);
            Tensor batch = gather_batch(dataset, rows, lo, hi);
            std::map<std::string, Tensor> acts;
            forward_passthrough(s, batch, record, acts);
            for (const auto &r : refs) {
                Tensor xr = to_rows(acts.at(r.donor));
                Tensor yr = to_rows(acts.at(r.recipient));
                int64_t rn = xr.shape[0], n = xr.shape[1], m = yr.shape[1];
                auto [it, fresh] = accums.try_emplace(r.stitch_id);
                Accum &acc = it->second;
                if (fresh) {
                    acc.sxx = Eigen::MatrixXd::Zero(n, n);
                    acc.sxy = Eigen::MatrixXd::Zero(n, m);
                    acc.sx = Eigen::VectorXd::Zero(n);
                    acc.sy = Eigen::VectorXd::Zero(m);
                }
                Eigen::MatrixXd X(rn, n), Y(rn, m);
                for (int64_t i = 0; i < rn; ++i) {
                    for (int64_t j = 0; j < n; ++j)
                        X(i, j) = xr.at2(i, j);
                    for (int64_t j = 0; j < m; ++j)
                        Y(i, j) = yr.at2(i, j);
                }
                acc.sxx += X.transpose() * X;
                acc.sxy += X.transpose() * Y;
                acc.sx += X.colwise().sum().transpose();
                acc.sy += Y.colwise().sum().transpose();
                acc.count += rn;
            }
        }
        for (const auto &r : refs) {
            const Accum &acc = accums.at(r.stitch_id);
            double S = static_cast<double>(acc.count);
            Eigen::VectorXd mx = acc.sx / S;
            Eigen::VectorXd my = acc.sy / S;
            Eigen::MatrixXd A = acc.sxx - S * (mx * mx.transpose());
            Eigen::MatrixXd B = acc.sxy - S * (mx * my.transpose());
            A.diagonal().array() += cfg.ridge;
            Eigen::MatrixXd W;
            if (cfg.ridge == 0.0) {
                Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
                if (!lu.isInvertible())
                    throw std::invalid_argument("train_stitches: singular normal equations for " +
                                                r.stitch_id + "; set ridge > 0");
                W = lu.solve(B);
            } else {
                W = Eigen::LDLT<Eigen::MatrixXd>(A).solve(B);
            }
            Eigen::VectorXd bias = my - W.transpose() * mx;
            write_solution(s.graph.node(r.stitch_id), W, bias);
            row_counts[r.stitch_id] = acc.count;
        }
    } else {
        // Joint Adam: one shared minibatch stream; each stitch takes an
        // independent step on its own MSE, which matches training it alone.
        std::map<std::string, std::vector<AdamState>> opt;
        for (const auto &r : refs) {
            RowParams p0 = read_stitch(s.graph.node(r.stitch_id));
            opt[r.stitch_id] = {AdamState::for_param(p0.W), AdamState::for_param(p0.b)};
        }
        size_t bs = static_cast<size_t>(std::max<int64_t>(1, cfg.batch));
        std::vector<int64_t> stream = training_stream(dataset, cfg.sample_budget, cfg.seed);
        for (size_t lo = 0; lo < stream.size(); lo += bs) {
            size_t hi = std::min(stream.size(), lo + bs);
            Tensor batch = gather_batch(dataset, stream, lo, hi);
            std::map<std::string, Tensor> acts;
            forward_passthrough(s, batch, record, acts);
            for (const auto &r : refs) {
                Tensor x = to_rows(acts.at(r.donor));
                Tensor y = to_rows(acts.at(r.recipient));
                GraphNode &node = s.graph.node(r.stitch_id);
                RowParams p = read_stitch(node);
                Tensor pred = rows_forward(p, x);
                double scale = 2.0 / static_cast<double>(pred.numel());
                Tensor dpred = Tensor::zeros(pred.shape);
                double sq = 0.0;
                for (int64_t i = 0; i < pred.numel(); ++i) {
                    double d = static_cast<double>(pred.at(i)) - static_cast<double>(y.at(i));
                    sq += d * d;
                    dpred.at(i) = static_cast<float>(scale * d);
                }
                if (!std::isfinite(sq))
                    throw DivergenceError("train_stitches: non-finite loss at " + r.stitch_id);
                LayerGrads g = backward_layer(row_spec(p), {p.W, p.b}, {x}, dpred);
                auto &states = opt.at(r.stitch_id);
                adam_step(p.W, g.weight_grads[0], states[0], cfg.lr);
                adam_step(p.b, g.weight_grads[1], states[1], cfg.lr);
                write_stitch(node, p);
                row_counts[r.stitch_id] += x.shape[0];
            }
        }
    }

    auto mse = measure_mse(s, dataset, rows);
    for (const auto &r : refs)
        result.reports.push_back(
            {r.stitch_id, row_counts[r.stitch_id], mse.at(r.stitch_id), cfg.method});
    return result;
}

double stitch_mse(const Supernetwork &supernet, const Dataset &dataset,
                  const std::string &stitch_id, int64_t sample_budget, uint64_t seed)
{
    std::vector<int64_t> rows = training_rows(dataset, sample_budget, seed);
    auto mse = measure_mse(supernet, dataset, rows);
    auto it = mse.find(stitch_id);
    if (it == mse.end())
        throw std::invalid_argument("stitch_mse: unknown stitch '" + stitch_id + "'");
    return it->second;
}

void save_supernetwork(const Supernetwork &s, const std::string &path)
{
    nlohmann::json j = network_to_json(s.graph);
    j["kind"] = "supernetwork";
    j["parents"] = {s.parent_a_name, s.parent_b_name};
    nlohmann::json matches = nlohmann::json::array();
    for (const auto &m : s.matches)
        matches.push_back({{"node_a", m.node_a},
                           {"node_b", m.node_b},
                           {"kind", stitch_kind_to_string(m.kind)},
                           {"feat_a", m.feat_a},
                           {"feat_b", m.feat_b},
                           {"sp_h", m.sp_h},
                           {"sp_w", m.sp_w}});
    j["matches"] = std::move(matches);
    nlohmann::json switches = nlohmann::json::array();
    nlohmann::json order = nlohmann::json::array();
    for (const auto &sw : s.switches) {
        switches.push_back({{"id", sw.id}, {"inputs", sw.inputs}});
        order.push_back(sw.id);
    }
    j["switches"] = std::move(switches);
    j["genotype_order"] = std::move(order);
    write_json_file(j, path);
}

Supernetwork load_supernetwork(const std::string &path)
{
    nlohmann::json j = read_json_file(path);
    Supernetwork s;
    s.graph = network_from_json(j);
    try {
        if (j.at("kind").get<std::string>() != "supernetwork")
            throw FormatError("'" + path + "' is not a supernetwork container");
        s.parent_a_name = j.at("parents").at(0).get<std::string>();
        s.parent_b_name = j.at("parents").at(1).get<std::string>();
        for (const auto &mj : j.at("matches")) {
            MatchCandidate m;
            m.node_a = mj.at("node_a").get<std::string>();
            m.node_b = mj.at("node_b").get<std::string>();
            auto kind = stitch_kind_from_string(mj.at("kind").get<std::string>());
            if (!kind)
                throw FormatError("unknown stitch kind in '" + path + "'");
            m.kind = *kind;
            m.feat_a = mj.at("feat_a").get<int64_t>();
            m.feat_b = mj.at("feat_b").get<int64_t>();
            m.sp_h = mj.at("sp_h").get<int64_t>();
            m.sp_w = mj.at("sp_w").get<int64_t>();
            s.matches.push_back(std::move(m));
        }
        for (const auto &sj : j.at("switches")) {
            SwitchInfo sw;
            sw.id = sj.at("id").get<std::string>();
            sw.inputs = sj.at("inputs").get<std::vector<std::string>>();
            if (!s.graph.has_node(sw.id))
                throw FormatError("switch '" + sw.id + "' missing from graph");
            s.switches.push_back(std::move(sw));
        }
        for (size_t i = 0; i < s.switches.size(); ++i)
            s.switch_pos[s.switches[i].id] = i;
        if (s.genotype_length() != 2 * s.matches.size() + 1)
            throw FormatError("genotype length does not equal 2*matches+1");
        return s;
    } catch (const FormatError &) {
        throw;
    } catch (const std::exception &e) {
        throw FormatError(std::string("malformed supernetwork container: ") + e.what());
    }
}

} // namespace stitchnet
