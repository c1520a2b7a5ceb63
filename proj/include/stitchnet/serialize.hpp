#pragma once

#include "stitchnet/netgraph.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace stitchnet {

std::string base64_encode(const unsigned char *data, size_t len);
// Throws FormatError on malformed input.
std::vector<unsigned char> base64_decode(const std::string &text);

// float32 <-> base64, little-endian.
std::string floats_to_base64(const std::vector<float> &v);
std::vector<float> floats_from_base64(const std::string &text);

nlohmann::json tensor_to_json(const Tensor &t);
Tensor tensor_from_json(const nlohmann::json &j, const std::string &context);

nlohmann::json network_to_json(const NetworkGraph &graph);
NetworkGraph network_from_json(const nlohmann::json &j);

// Network container file (format_version 1). Round-trips are byte-exact.
void save_network(const NetworkGraph &graph, const std::string &path);
NetworkGraph load_network(const std::string &path);

// Shared helpers for the other container files.
void write_json_file(const nlohmann::json &j, const std::string &path);
nlohmann::json read_json_file(const std::string &path);

} // namespace stitchnet
