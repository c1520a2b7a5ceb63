#include "stitchnet/presets.hpp"

#include "stitchnet/rng.hpp"

#include <stdexcept>

namespace stitchnet {

namespace {

struct Builder {
    NetworkGraph g;
    Rng rng;
    std::string last = "input";

    Builder(const std::string &name, TaskSignature task, Rng r) : rng(r)
    {
        g.name = name;
        g.task = std::move(task);
        g.input_node = "input";
        g.add_node("input", input_spec(), {});
    }

    // Appends a single-input node after `last` (or an explicit source).
    std::string add(const std::string &id, LayerSpec spec, std::vector<std::string> srcs = {})
    {
        if (srcs.empty())
            srcs = {last};
        std::vector<Tensor> w = init_weights(spec, rng);
        g.add_node(id, spec, std::move(srcs), std::move(w));
        last = id;
        return id;
    }

    NetworkGraph finish(const std::string &output)
    {
        g.output_node = output;
        return std::move(g);
    }
};

NetworkGraph deep_cnn(int64_t classes, Rng rng)
{
    Builder b("deep_cnn", TaskSignature{{1, 16, 16}, classes}, rng);
    b.add("stem", conv2d_spec(1, 8, 3, 3, 1, 1));
    b.add("stem_relu", relu_spec());
    b.add("pool", maxpool2d_spec(2, 2));
    std::string skip = "pool";
    for (int blk = 1; blk <= 3; ++blk) {
        std::string p = "b" + std::to_string(blk) + "_";
        b.add(p + "conv1", conv2d_spec(8, 8, 3, 3, 1, 1), {skip});
        b.add(p + "relu1", relu_spec());
        b.add(p + "conv2", conv2d_spec(8, 8, 3, 3, 1, 1));
        b.add(p + "add", add_spec(), {p + "conv2", skip});
        b.add(p + "relu2", relu_spec());
        skip = p + "relu2";
    }
    b.add("gap", global_avgpool2d_spec(), {skip});
    b.add("fc", linear_spec(8, 16));
    b.add("fc_relu", relu_spec());
    b.add("head", linear_spec(16, classes));
    return b.finish("head");
}

NetworkGraph shallow_cnn(int64_t classes, Rng rng)
{
    Builder b("shallow_cnn", TaskSignature{{1, 16, 16}, classes}, rng);
    b.add("conv1", conv2d_spec(1, 6, 3, 3, 1, 1));
    b.add("relu1", relu_spec());
    b.add("pool", maxpool2d_spec(2, 2));
    b.add("conv2", conv2d_spec(6, 12, 3, 3, 1, 1));
    b.add("relu2", relu_spec());
    b.add("conv3", conv2d_spec(12, 12, 3, 3, 1, 1));
    b.add("relu3", relu_spec());
    b.add("gap", global_avgpool2d_spec());
    b.add("fc", linear_spec(12, 16));
    b.add("fc_relu", relu_spec());
    b.add("head", linear_spec(16, classes));
    return b.finish("head");
}

NetworkGraph plain_block_cnn(int64_t classes, Rng rng)
{
    Builder b("plain_block_cnn", TaskSignature{{1, 16, 16}, classes}, rng);
    b.add("stem", conv2d_spec(1, 8, 3, 3, 1, 1));
    b.add("stem_relu", relu_spec());
    b.add("pool", maxpool2d_spec(2, 2));
    std::string skip = "pool";
    for (int blk = 1; blk <= 2; ++blk) {
        std::string p = "b" + std::to_string(blk) + "_";
        b.add(p + "conv1", conv2d_spec(8, 8, 3, 3, 1, 1), {skip});
        b.add(p + "relu1", relu_spec());
        b.add(p + "conv2", conv2d_spec(8, 8, 3, 3, 1, 1));
        b.add(p + "add", add_spec(), {p + "conv2", skip});
        b.add(p + "relu2", relu_spec());
        skip = p + "relu2";
    }
    b.add("gap", global_avgpool2d_spec(), {skip});
    b.add("head", linear_spec(8, classes));
    return b.finish("head");
}

NetworkGraph grouped_block_cnn(int64_t classes, Rng rng)
{
    Builder b("grouped_block_cnn", TaskSignature{{1, 16, 16}, classes}, rng);
    b.add("stem", conv2d_spec(1, 8, 3, 3, 1, 1));
    b.add("stem_relu", relu_spec());
    b.add("pool", maxpool2d_spec(2, 2));
    // Two channel groups processed in parallel, then rejoined.
    std::string skip = "pool";
    for (int blk = 1; blk <= 2; ++blk) {
        std::string p = "b" + std::to_string(blk) + "_";
        b.add(p + "g1_conv", conv2d_spec(8, 4, 3, 3, 1, 1), {skip});
        b.add(p + "g1_relu", relu_spec());
        b.add(p + "g2_conv", conv2d_spec(8, 4, 3, 3, 1, 1), {skip});
        b.add(p + "g2_relu", relu_spec());
        b.add(p + "join", concat_spec(1, 2), {p + "g1_relu", p + "g2_relu"});
        b.add(p + "mix", conv2d_spec(8, 8, 1, 1, 1, 0));
        b.add(p + "add", add_spec(), {p + "mix", skip});
        b.add(p + "relu2", relu_spec());
        skip = p + "relu2";
    }
    b.add("gap", global_avgpool2d_spec(), {skip});
    b.add("head", linear_spec(8, classes));
    return b.finish("head");
}

NetworkGraph mlp(const std::string &name, const std::vector<int64_t> &widths, int64_t classes,
                 Rng rng)
{
    Builder b(name, TaskSignature{{2}, classes}, rng);
    int64_t in = 2;
    for (size_t i = 0; i < widths.size(); ++i) {
        std::string idx = std::to_string(i + 1);
        b.add("fc" + idx, linear_spec(in, widths[i]));
        b.add("relu" + idx, relu_spec());
        in = widths[i];
    }
    b.add("head", linear_spec(in, classes));
    return b.finish("head");
}

} // namespace

ParentPreset make_preset(const std::string &id, uint64_t seed)
{
    Rng base = Rng(seed).fork(41);
    ParentPreset p;
    p.id = id;
    if (id == "a") {
        p.dataset_task = "shapes";
        p.classes = 4;
        p.parent_a = deep_cnn(p.classes, base.fork(1));
        p.parent_b = shallow_cnn(p.classes, base.fork(2));
    } else if (id == "b") {
        p.dataset_task = "shapes";
        p.classes = 4;
        p.parent_a = plain_block_cnn(p.classes, base.fork(3));
        p.parent_b = grouped_block_cnn(p.classes, base.fork(4));
    } else if (id == "mlp") {
        p.dataset_task = "two_spirals";
        p.classes = 2;
        p.parent_a = mlp("deep_mlp", {24, 24, 24}, p.classes, base.fork(5));
        p.parent_b = mlp("wide_mlp", {48, 24}, p.classes, base.fork(6));
    } else {
        throw std::invalid_argument("unknown preset '" + id + "' (expected a, b or mlp)");
    }
    return p;
}

std::vector<std::string> preset_names() { return {"a", "b", "mlp"}; }

} // namespace stitchnet
