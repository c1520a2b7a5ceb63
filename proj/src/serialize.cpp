#include "stitchnet/serialize.hpp"

#include "stitchnet/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "container files store little-endian float32 weight blobs");

namespace stitchnet {

namespace {

const char b64_alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c)
{
    if (c >= 'A' && c <= 'Z')
        return c - 'A';
    if (c >= 'a' && c <= 'z')
        return c - 'a' + 26;
    if (c >= '0' && c <= '9')
        return c - '0' + 52;
    if (c == '+')
        return 62;
    if (c == '/')
        return 63;
    return -1;
}

} // namespace

std::string base64_encode(const unsigned char *data, size_t len)
{
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        unsigned int chunk = data[i] << 16;
        if (i + 1 < len)
            chunk |= data[i + 1] << 8;
        if (i + 2 < len)
            chunk |= data[i + 2];
        out.push_back(b64_alphabet[(chunk >> 18) & 0x3f]);
        out.push_back(b64_alphabet[(chunk >> 12) & 0x3f]);
        out.push_back(i + 1 < len ? b64_alphabet[(chunk >> 6) & 0x3f] : '=');
        out.push_back(i + 2 < len ? b64_alphabet[chunk & 0x3f] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string &text)
{
    if (text.size() % 4 != 0)
        throw FormatError("base64 length not a multiple of 4");
    std::vector<unsigned char> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            char c = text[i + k];
            if (c == '=') {
                if (i + 4 != text.size() || k < 2)
                    throw FormatError("base64 padding in unexpected position");
                vals[k] = 0;
                ++pad;
            } else {
                if (pad > 0)
                    throw FormatError("base64 data after padding");
                vals[k] = b64_value(c);
                if (vals[k] < 0)
                    throw FormatError(std::string("invalid base64 character '") + c + "'");
            }
        }
        unsigned int chunk = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back((chunk >> 16) & 0xff);
        if (pad < 2)
            out.push_back((chunk >> 8) & 0xff);
        if (pad < 1)
            out.push_back(chunk & 0xff);
    }
    return out;
}

std::string floats_to_base64(const std::vector<float> &v)
{
    return base64_encode(reinterpret_cast<const unsigned char *>(v.data()),
                         v.size() * sizeof(float));
}

std::vector<float> floats_from_base64(const std::string &text)
{
    std::vector<unsigned char> bytes = base64_decode(text);
    if (bytes.size() % sizeof(float) != 0)
        throw FormatError("weight blob length is not a multiple of 4 bytes");
    std::vector<float> v(bytes.size() / sizeof(float));
    std::memcpy(v.data(), bytes.data(), bytes.size());
    return v;
}

nlohmann::json tensor_to_json(const Tensor &t)
{
    return nlohmann::json{{"shape", t.shape}, {"data", floats_to_base64(t.data)}};
}

Tensor tensor_from_json(const nlohmann::json &j, const std::string &context)
{
    try {
        Shape shape = j.at("shape").get<Shape>();
        std::vector<float> data = floats_from_base64(j.at("data").get<std::string>());
        return Tensor(std::move(shape), std::move(data));
    } catch (const FormatError &e) {
        throw FormatError(context + ": " + e.what());
    } catch (const std::exception &e) {
        throw FormatError(context + ": " + e.what());
    }
}

namespace {

nlohmann::json hyperparams_to_json(const LayerSpec &s)
{
    nlohmann::json h = nlohmann::json::object();
    switch (s.kind) {
    case LayerKind::Linear:
        h["in_features"] = s.in_features;
        h["out_features"] = s.out_features;
        break;
    case LayerKind::Conv2D:
        h["in_ch"] = s.in_ch;
        h["out_ch"] = s.out_ch;
        h["kernel_h"] = s.kernel_h;
        h["kernel_w"] = s.kernel_w;
        h["stride"] = s.stride;
        h["pad"] = s.pad;
        break;
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
        h["win_h"] = s.win_h;
        h["win_w"] = s.win_w;
        h["stride"] = s.pool_stride;
        break;
    case LayerKind::Concat:
        h["axis"] = s.axis;
        break;
    case LayerKind::BatchNorm2DInference:
        h["channels"] = s.in_ch;
        h["eps"] = s.eps;
        break;
    default:
        break;
    }
    return h;
}

LayerSpec spec_from_json(const std::string &id, const std::string &kind_name,
                         const nlohmann::json &h, size_t n_inputs)
{
    auto kind = kind_from_string(kind_name);
    if (!kind)
        throw FormatError("node '" + id + "': unknown kind '" + kind_name + "'");
    LayerSpec s;
    s.kind = *kind;
    s.arity = static_cast<int64_t>(n_inputs);
    switch (*kind) {
    case LayerKind::Linear:
        s.in_features = h.at("in_features").get<int64_t>();
        s.out_features = h.at("out_features").get<int64_t>();
        break;
    case LayerKind::Conv2D:
        s.in_ch = h.at("in_ch").get<int64_t>();
        s.out_ch = h.at("out_ch").get<int64_t>();
        s.kernel_h = h.at("kernel_h").get<int64_t>();
        s.kernel_w = h.at("kernel_w").get<int64_t>();
        s.stride = h.at("stride").get<int64_t>();
        s.pad = h.at("pad").get<int64_t>();
        break;
    case LayerKind::MaxPool2D:
    case LayerKind::AvgPool2D:
        s.win_h = h.at("win_h").get<int64_t>();
        s.win_w = h.at("win_w").get<int64_t>();
        s.pool_stride = h.at("stride").get<int64_t>();
        break;
    case LayerKind::Concat:
        s.axis = h.at("axis").get<int64_t>();
        break;
    case LayerKind::BatchNorm2DInference:
        s.in_ch = h.at("channels").get<int64_t>();
        s.out_ch = s.in_ch;
        s.eps = h.at("eps").get<float>();
        break;
    case LayerKind::Input:
        s.arity = 0;
        break;
    default:
        break;
    }
    return s;
}

} // namespace

nlohmann::json network_to_json(const NetworkGraph &graph)
{
    nlohmann::json nodes = nlohmann::json::array();
    nlohmann::json weights = nlohmann::json::object();
    for (const auto &id : topological_order(graph)) {
        const GraphNode &node = graph.node(id);
        nodes.push_back({{"id", id},
                         {"kind", kind_to_string(node.spec.kind)},
                         {"hyperparams", hyperparams_to_json(node.spec)},
                         {"inputs", node.inputs}});
        if (!node.weights.empty()) {
            nlohmann::json w = nlohmann::json::array();
            for (const auto &t : node.weights)
                w.push_back(tensor_to_json(t));
            weights[id] = std::move(w);
        }
    }
    return nlohmann::json{{"format_version", 1},
                          {"kind", "network"},
                          {"name", graph.name},
                          {"task",
                           {{"input_shape", graph.task.input_shape},
                            {"num_classes", graph.task.num_classes}}},
                          {"input", graph.input_node},
                          {"output", graph.output_node},
                          {"nodes", std::move(nodes)},
                          {"weights", std::move(weights)}};
}

NetworkGraph network_from_json(const nlohmann::json &j)
{
    try {
        int version = j.at("format_version").get<int>();
        if (version != 1)
            throw FormatError("unsupported format_version " + std::to_string(version));

        NetworkGraph g;
        g.name = j.value("name", "");
        g.task.input_shape = j.at("task").at("input_shape").get<Shape>();
        g.task.num_classes = j.at("task").at("num_classes").get<int64_t>();
        g.input_node = j.at("input").get<std::string>();
        g.output_node = j.at("output").get<std::string>();

        const nlohmann::json &weights = j.at("weights");
        for (const auto &nj : j.at("nodes")) {
            std::string id = nj.at("id").get<std::string>();
            std::vector<std::string> inputs = nj.at("inputs").get<std::vector<std::string>>();
            LayerSpec spec = spec_from_json(id, nj.at("kind").get<std::string>(),
                                            nj.at("hyperparams"), inputs.size());
            std::vector<Tensor> w;
            if (weights.contains(id))
                for (const auto &tj : weights.at(id))
                    w.push_back(tensor_from_json(tj, "node '" + id + "'"));
            if (w.size() != weight_count(spec.kind))
                throw FormatError("node '" + id + "': expected " +
                                  std::to_string(weight_count(spec.kind)) +
                                  " weight tensors, found " + std::to_string(w.size()));
            g.add_node(id, spec, std::move(inputs), std::move(w));
        }
        if (!g.has_node(g.input_node) || !g.has_node(g.output_node))
            throw FormatError("input/output node id not present in nodes");
        return g;
    } catch (const FormatError &) {
        throw;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("malformed network container: ") + e.what());
    }
}

void write_json_file(const nlohmann::json &j, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << j.dump(2) << "\n";
    if (!out)
        throw FormatError("write to '" + path + "' failed");
}

nlohmann::json read_json_file(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw FormatError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception &e) {
        throw FormatError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void save_network(const NetworkGraph &graph, const std::string &path)
{
    write_json_file(network_to_json(graph), path);
}

NetworkGraph load_network(const std::string &path)
{
    NetworkGraph g = network_from_json(read_json_file(path));
    propagate_shapes(g); // validates wiring and shape consistency
    return g;
}

} // namespace stitchnet
