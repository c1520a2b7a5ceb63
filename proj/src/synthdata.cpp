#include "stitchnet/synthdata.hpp"

#include "stitchnet/adam.hpp"
#include "stitchnet/errors.hpp"
#include "stitchnet/serialize.hpp"

#include <algorithm>
#include <cmath>

namespace stitchnet {

std::string split_to_string(Split s)
{
    switch (s) {
    case Split::Train:
        return "train";
    case Split::Validation:
        return "validation";
    case Split::Test:
        return "test";
    }
    return "?";
}

const std::vector<int64_t> &Dataset::split(Split s) const
{
    switch (s) {
    case Split::Train:
        return train_idx;
    case Split::Validation:
        return validation_idx;
    default:
        return test_idx;
    }
}

namespace {

int64_t sample_stride(const Dataset &ds)
{
    return shape_numel(ds.task.input_shape);
}

} // namespace

Tensor Dataset::gather(Split s, int64_t limit) const
{
    const auto &idx = split(s);
    int64_t n = static_cast<int64_t>(idx.size());
    if (limit > 0)
        n = std::min(n, limit);
    if (n == 0)
        throw std::invalid_argument("dataset split '" + split_to_string(s) + "' is empty");
    int64_t stride = sample_stride(*this);
    Shape sh = task.input_shape;
    sh.insert(sh.begin(), n);
    Tensor out = Tensor::zeros(sh);
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(samples.data.data() + idx[static_cast<size_t>(i)] * stride, stride,
                    out.data.data() + i * stride);
    return out;
}

std::vector<int64_t> Dataset::gather_labels(Split s, int64_t limit) const
{
    const auto &idx = split(s);
    int64_t n = static_cast<int64_t>(idx.size());
    if (limit > 0)
        n = std::min(n, limit);
    std::vector<int64_t> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = labels[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    return out;
}

namespace {

void make_splits(Dataset &ds, Rng &rng)
{
    int64_t n = ds.size();
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        order[static_cast<size_t>(i)] = i;
    rng.shuffle(order);
    int64_t n_train = n * 60 / 100;
    int64_t n_val = n * 20 / 100;
    ds.train_idx.assign(order.begin(), order.begin() + n_train);
    ds.validation_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    ds.test_idx.assign(order.begin() + n_train + n_val, order.end());
}

} // namespace

Dataset gen_tabular(uint64_t seed, int64_t n, const std::string &task)
{
    if (n < 100)
        throw std::invalid_argument("gen_tabular: n must be >= 100");
    if (task != "two_spirals" && task != "rings")
        throw std::invalid_argument("gen_tabular: unknown task '" + task + "'");

    Rng rng = Rng(seed).fork(task == "two_spirals" ? 11 : 12);
    Dataset ds;
    ds.seed = seed;
    ds.task.input_shape = {2};
    ds.task.num_classes = 2;
    ds.samples = Tensor::zeros({n, 2});
    ds.labels.resize(static_cast<size_t>(n));

    for (int64_t i = 0; i < n; ++i) {
        int64_t cls = i % 2;
        double x, y;
        if (task == "two_spirals") {
            double t = rng.u01();
            double angle = t * 2.5 * M_PI + (cls == 0 ? 0.0 : M_PI);
            double r = 0.15 + 0.8 * t;
            x = r * std::cos(angle) + rng.normal(0.0, 0.015);
            y = r * std::sin(angle) + rng.normal(0.0, 0.015);
        } else {
            double angle = rng.u01() * 2.0 * M_PI;
            double r = (cls == 0 ? 0.45 : 0.9) + rng.normal(0.0, 0.05);
            x = r * std::cos(angle);
            y = r * std::sin(angle);
        }
        ds.samples.at2(i, 0) = static_cast<float>(x);
        ds.samples.at2(i, 1) = static_cast<float>(y);
        ds.labels[static_cast<size_t>(i)] = cls;
    }
    make_splits(ds, rng);
    return ds;
}

Dataset gen_images(uint64_t seed, int64_t n, int64_t classes)
{
    if (n < 100)
        throw std::invalid_argument("gen_images: n must be >= 100");
    if (classes < 2 || classes > 6)
        throw std::invalid_argument("gen_images: classes must be in [2, 6]");

    const int64_t S = 16;
    Rng rng = Rng(seed).fork(21);
    Dataset ds;
    ds.seed = seed;
    ds.task.input_shape = {1, S, S};
    ds.task.num_classes = classes;
    ds.samples = Tensor::zeros({n, 1, S, S});
    ds.labels.resize(static_cast<size_t>(n));

    auto px = [&](int64_t i, int64_t r, int64_t c) -> float & {
        return ds.samples.data[static_cast<size_t>((i * S + r) * S + c)];
    };

    for (int64_t i = 0; i < n; ++i) {
        int64_t cls = i % classes;
        ds.labels[static_cast<size_t>(i)] = cls;
        float bright = static_cast<float>(0.35 + 0.5 * rng.u01());
        int64_t r0 = rng.int_range(3, S - 5);
        int64_t c0 = rng.int_range(3, S - 5);
        switch (cls) {
        case 0: // horizontal bar
            for (int64_t c = 1; c < S - 1; ++c)
                px(i, r0, c) = px(i, r0 + 1, c) = bright;
            break;
        case 1: // vertical bar
            for (int64_t r = 1; r < S - 1; ++r)
                px(i, r, c0) = px(i, r, c0 + 1) = bright;
            break;
        case 2: // cross
            for (int64_t c = 1; c < S - 1; ++c)
                px(i, r0, c) = bright;
            for (int64_t r = 1; r < S - 1; ++r)
                px(i, r, c0) = bright;
            break;
        case 3: // blob
            for (int64_t r = 0; r < S; ++r)
                for (int64_t c = 0; c < S; ++c) {
                    double d2 = static_cast<double>((r - r0 - 1) * (r - r0 - 1) +
                                                    (c - c0 - 1) * (c - c0 - 1));
                    px(i, r, c) = bright * static_cast<float>(std::exp(-d2 / 6.0));
                }
            break;
        case 4: // diagonal stripe
            for (int64_t r = 0; r < S; ++r) {
                int64_t c = (r + c0) % S;
                px(i, r, c) = bright;
                px(i, r, (c + 1) % S) = bright;
            }
            break;
        default: // checker patch
            for (int64_t r = r0 - 2; r <= r0 + 3; ++r)
                for (int64_t c = c0 - 2; c <= c0 + 3; ++c)
                    if ((r + c) % 2 == 0 && r >= 0 && r < S && c >= 0 && c < S)
                        px(i, r, c) = bright;
            break;
        }
        // Clutter patches unrelated to the class, then pixel noise.
        int64_t clutter = rng.int_range(2, 4);
        for (int64_t k = 0; k < clutter; ++k) {
            int64_t cr = rng.int_range(0, S - 2);
            int64_t cc = rng.int_range(0, S - 2);
            float cb = static_cast<float>(0.3 + 0.5 * rng.u01());
            for (int64_t dr = 0; dr < 2; ++dr)
                for (int64_t dc = 0; dc < 2; ++dc)
                    px(i, cr + dr, cc + dc) = std::max(px(i, cr + dr, cc + dc), cb);
        }
        for (int64_t r = 0; r < S; ++r)
            for (int64_t c = 0; c < S; ++c) {
                float v = px(i, r, c) + static_cast<float>(rng.normal(0.0, 0.18));
                px(i, r, c) = std::clamp(v, 0.0f, 1.0f);
            }
    }
    make_splits(ds, rng);
    return ds;
}

Dataset gen_dataset(uint64_t seed, int64_t n, const std::string &task, int64_t classes)
{
    if (task == "shapes")
        return gen_images(seed, n, classes);
    return gen_tabular(seed, n, task);
}

void save_dataset(const Dataset &ds, const std::string &path)
{
    nlohmann::json j{
        {"format_version", 1},
        {"kind", "dataset"},
        {"seed", ds.seed},
        {"task",
         {{"input_shape", ds.task.input_shape}, {"num_classes", ds.task.num_classes}}},
        {"samples", tensor_to_json(ds.samples)},
        {"labels", ds.labels},
        {"splits",
         {{"train", ds.train_idx},
          {"validation", ds.validation_idx},
          {"test", ds.test_idx}}}};
    write_json_file(j, path);
}

Dataset load_dataset(const std::string &path)
{
    nlohmann::json j = read_json_file(path);
    try {
        if (j.at("format_version").get<int>() != 1)
            throw FormatError("unsupported dataset format_version");
        Dataset ds;
        ds.seed = j.at("seed").get<uint64_t>();
        ds.task.input_shape = j.at("task").at("input_shape").get<Shape>();
        ds.task.num_classes = j.at("task").at("num_classes").get<int64_t>();
        ds.samples = tensor_from_json(j.at("samples"), "dataset samples");
        ds.labels = j.at("labels").get<std::vector<int64_t>>();
        ds.train_idx = j.at("splits").at("train").get<std::vector<int64_t>>();
        ds.validation_idx = j.at("splits").at("validation").get<std::vector<int64_t>>();
        ds.test_idx = j.at("splits").at("test").get<std::vector<int64_t>>();
        return ds;
    } catch (const FormatError &) {
        throw;
    } catch (const std::exception &e) {
        throw FormatError(std::string("malformed dataset container: ") + e.what());
    }
}

namespace {

// Mean softmax cross-entropy plus gradient w.r.t. logits.
double softmax_ce(const Tensor &logits, const std::vector<int64_t> &labels, Tensor &dlogits)
{
    int64_t B = logits.shape[0], K = logits.shape[1];
    dlogits = Tensor::zeros(logits.shape);
    double loss = 0.0;
    for (int64_t b = 0; b < B; ++b) {
        float mx = logits.at2(b, 0);
        for (int64_t k = 1; k < K; ++k)
            mx = std::max(mx, logits.at2(b, k));
        double denom = 0.0;
        for (int64_t k = 0; k < K; ++k)
            denom += std::exp(static_cast<double>(logits.at2(b, k) - mx));
        int64_t y = labels[static_cast<size_t>(b)];
        loss -= static_cast<double>(logits.at2(b, y) - mx) - std::log(denom);
        for (int64_t k = 0; k < K; ++k) {
            double p = std::exp(static_cast<double>(logits.at2(b, k) - mx)) / denom;
            dlogits.at2(b, k) = static_cast<float>((p - (k == y ? 1.0 : 0.0)) /
                                                   static_cast<double>(B));
        }
    }
    return loss / static_cast<double>(B);
}

Tensor gather_rows(const Dataset &ds, const std::vector<int64_t> &rows)
{
    int64_t stride = shape_numel(ds.task.input_shape);
    Shape sh = ds.task.input_shape;
    sh.insert(sh.begin(), static_cast<int64_t>(rows.size()));
    Tensor out = Tensor::zeros(sh);
    for (size_t i = 0; i < rows.size(); ++i)
        std::copy_n(ds.samples.data.data() + rows[i] * stride, stride,
                    out.data.data() + static_cast<int64_t>(i) * stride);
    return out;
}

} // namespace

TrainReport train_parent(const NetworkGraph &graph, const Dataset &dataset,
                         const TrainConfig &cfg)
{
    if (graph.task != dataset.task)
        throw ShapeError("train_parent: graph task signature does not match dataset");
    if (cfg.lr <= 0 || cfg.batch <= 0 || cfg.sample_budget < 0)
        throw std::invalid_argument("train_parent: lr, batch and budget must be positive");

    TrainReport report;
    report.graph = graph;
    NetworkGraph &net = report.graph;

    std::map<std::string, std::vector<AdamState>> opt;
    for (auto &[id, node] : net.nodes)
        if (node.spec.kind == LayerKind::Linear || node.spec.kind == LayerKind::Conv2D) {
            std::vector<AdamState> states;
            for (const auto &w : node.weights)
                states.push_back(AdamState::for_param(w));
            opt[id] = std::move(states);
        }

    Rng rng = Rng(cfg.seed).fork(31);
    std::vector<int64_t> order = dataset.train_idx;
    size_t cursor = order.size(); // forces an initial shuffle
    int64_t steps = cfg.sample_budget / cfg.batch;

    for (int64_t step = 0; step < steps; ++step) {
        std::vector<int64_t> batch_rows;
        batch_rows.reserve(static_cast<size_t>(cfg.batch));
        for (int64_t i = 0; i < cfg.batch; ++i) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch_rows.push_back(order[cursor++]);
        }
        Tensor batch = gather_rows(dataset, batch_rows);
        std::vector<int64_t> batch_labels;
        for (int64_t r : batch_rows)
            batch_labels.push_back(dataset.labels[static_cast<size_t>(r)]);

        ActivationRecord acts;
        Tensor logits = forward(net, batch, &acts);
        Tensor dlogits;
        double loss = softmax_ce(logits, batch_labels, dlogits);
        if (!std::isfinite(loss))
            throw DivergenceError("train_parent: loss became non-finite at step " +
                                  std::to_string(step));
        report.losses.push_back(loss);

        auto grads = backward(net, acts, dlogits);
        for (auto &[id, g] : grads) {
            auto &node = net.node(id);
            auto &states = opt.at(id);
            for (size_t i = 0; i < g.size(); ++i)
                adam_step(node.weights[i], g[i], states[i], cfg.lr);
        }
    }

    report.train_accuracy = evaluate_accuracy(net, dataset, Split::Train);
    report.validation_accuracy = evaluate_accuracy(net, dataset, Split::Validation);
    return report;
}

double accuracy_of_logits(const Tensor &logits, const std::vector<int64_t> &labels)
{
    int64_t B = logits.shape[0], K = logits.shape[1];
    int64_t correct = 0;
    for (int64_t b = 0; b < B; ++b) {
        int64_t best = 0;
        for (int64_t k = 1; k < K; ++k)
            if (logits.at2(b, k) > logits.at2(b, best))
                best = k; // strict '>' keeps the lowest index on ties
        if (best == labels[static_cast<size_t>(b)])
            ++correct;
    }
    return B == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(B);
}

namespace {

Tensor forward_chunked(const NetworkGraph &graph, const Dataset &ds, Split split, int64_t limit)
{
    Tensor all = ds.gather(split, limit);
    int64_t N = all.shape[0];
    const int64_t chunk = 256;
    Tensor logits;
    int64_t stride = shape_numel(ds.task.input_shape);
    for (int64_t start = 0; start < N; start += chunk) {
        int64_t cnt = std::min(chunk, N - start);
        Shape sh = ds.task.input_shape;
        sh.insert(sh.begin(), cnt);
        Tensor part(sh, std::vector<float>(all.data.begin() + start * stride,
                                           all.data.begin() + (start + cnt) * stride));
        Tensor out = forward(graph, part);
        if (start == 0) {
            Shape osh = out.shape;
            osh[0] = N;
            logits = Tensor::zeros(osh);
        }
        std::copy_n(out.data.data(), out.numel(),
                    logits.data.data() + start * out.shape[1]);
    }
    return logits;
}

} // namespace

double evaluate_accuracy(const NetworkGraph &graph, const Dataset &dataset, Split split)
{
    if (graph.task != dataset.task)
        throw ShapeError("evaluate_accuracy: task signatures do not match");
    Tensor logits = forward_chunked(graph, dataset, split, 0);
    return accuracy_of_logits(logits, dataset.gather_labels(split));
}

Tensor predict_probabilities(const NetworkGraph &graph, const Dataset &dataset, Split split,
                             int64_t limit)
{
    Tensor logits = forward_chunked(graph, dataset, split, limit);
    return forward_layer(softmax_spec(), {}, {logits});
}

} // namespace stitchnet
