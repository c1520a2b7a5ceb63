#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stitchnet {

// Thrown when tensor shapes do not line up with a layer spec or graph wiring.
class ShapeError : public std::runtime_error {
  public:
    explicit ShapeError(const std::string &msg) : std::runtime_error(msg) {}
};

// Thrown when a graph (or a tentative merged graph) contains a cycle.
class CycleError : public std::runtime_error {
  public:
    CycleError(const std::string &msg, std::vector<std::string> cycle_nodes)
        : std::runtime_error(msg), cycle(std::move(cycle_nodes))
    {
    }
    std::vector<std::string> cycle;
};

// Thrown on malformed container files.
class FormatError : public std::runtime_error {
  public:
    explicit FormatError(const std::string &msg) : std::runtime_error(msg) {}
};

// Thrown when training encounters a non-finite loss.
class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string &msg) : std::runtime_error(msg) {}
};

} // namespace stitchnet
