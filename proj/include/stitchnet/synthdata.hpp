#pragma once

#include "stitchnet/netgraph.hpp"
#include "stitchnet/rng.hpp"

#include <string>
#include <vector>

namespace stitchnet {

enum class Split { Train, Validation, Test };

std::string split_to_string(Split s);

// Procedural desk-scale dataset with disjoint 60/20/20 splits.
struct Dataset {
    TaskSignature task;
    Tensor samples; // [N, ...task.input_shape]
    std::vector<int64_t> labels;
    std::vector<int64_t> train_idx;
    std::vector<int64_t> validation_idx;
    std::vector<int64_t> test_idx;
    uint64_t seed = 0;

    int64_t size() const { return static_cast<int64_t>(labels.size()); }
    const std::vector<int64_t> &split(Split s) const;

    // Rows of `samples` selected by the split's first `limit` indices
    // (limit <= 0 means the whole split).
    Tensor gather(Split s, int64_t limit = 0) const;
    std::vector<int64_t> gather_labels(Split s, int64_t limit = 0) const;
};

// Two interleaved spirals or two concentric rings, 2 classes, inputs in
// roughly [-1, 1]^2. Deterministic in seed; classes balanced.
Dataset gen_tabular(uint64_t seed, int64_t n, const std::string &task);

// Small procedural shape images (bars/crosses/blobs per class), values in
// [0, 1], one channel, 16x16.
Dataset gen_images(uint64_t seed, int64_t n, int64_t classes);

// Dispatch on task name: two_spirals | rings | shapes.
Dataset gen_dataset(uint64_t seed, int64_t n, const std::string &task, int64_t classes = 4);

void save_dataset(const Dataset &ds, const std::string &path);
Dataset load_dataset(const std::string &path);

struct TrainConfig {
    float lr = 1e-3f;
    int64_t batch = 32;
    int64_t sample_budget = 20000;
    uint64_t seed = 1;
};

struct TrainReport {
    NetworkGraph graph;
    double train_accuracy = 0.0;
    double validation_accuracy = 0.0;
    std::vector<double> losses; // per minibatch step
};

// Minibatch Adam on softmax cross-entropy over the train split. Deterministic
// given cfg.seed. Aborts with DivergenceError on non-finite loss.
TrainReport train_parent(const NetworkGraph &graph, const Dataset &dataset,
                         const TrainConfig &cfg);

// Fraction of split samples whose argmax logit equals the label; argmax ties
// break toward the lowest class index.
double evaluate_accuracy(const NetworkGraph &graph, const Dataset &dataset, Split split);

// Softmax class probabilities [N, num_classes] for the split.
Tensor predict_probabilities(const NetworkGraph &graph, const Dataset &dataset, Split split,
                             int64_t limit = 0);

double accuracy_of_logits(const Tensor &logits, const std::vector<int64_t> &labels);

} // namespace stitchnet
