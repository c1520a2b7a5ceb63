#pragma once

#include "stitchnet/presets.hpp"
#include "stitchnet/search.hpp"
#include "stitchnet/stats.hpp"
#include "stitchnet/stitcher.hpp"

#include <map>
#include <string>
#include <vector>

namespace stitchnet {

// Command implementations behind the CLI; tests drive these directly. Every
// command is deterministic given its seed and overwrites its outputs
// idempotently.

struct GenDataArgs {
    std::string task = "shapes"; // shapes | two_spirals | rings
    int64_t n = 2000;
    int64_t classes = 4;
    uint64_t seed = 1;
    std::string out;
};
Dataset cmd_gen_data(const GenDataArgs &args);

struct TrainParentsArgs {
    std::string preset = "a"; // a | b | mlp
    std::string data_path;
    std::string out_a;
    std::string out_b;
    TrainConfig train;
    uint64_t arch_seed = 1;
};
struct TrainParentsSummary {
    double train_accuracy_a = 0.0;
    double validation_accuracy_a = 0.0;
    double train_accuracy_b = 0.0;
    double validation_accuracy_b = 0.0;
    double seconds = 0.0;
};
TrainParentsSummary cmd_train_parents(const TrainParentsArgs &args);

struct StitchArgs {
    std::string a_path;
    std::string b_path;
    std::string out;
    uint64_t seed = 7;
    int64_t expansion_budget = 4'000'000;
    CandidateFilter filter;
};
struct StitchSummary {
    size_t candidates = 0;
    size_t matches = 0;
    size_t genotype_length = 0;
    bool timeout_hit = false;
    double sec_candidates = 0.0;
    double sec_matching = 0.0;
    double sec_construction = 0.0;
};
StitchSummary cmd_stitch(const StitchArgs &args);

struct TrainStitchesArgs {
    std::string supernet_path;
    std::string data_path;
    std::string out;
    std::string report_path; // stitch-training report (JSON)
    StitchTrainConfig cfg;
};
struct TrainStitchesSummary {
    size_t stitches = 0;
    double mean_mse = 0.0;
    double seconds = 0.0;
};
TrainStitchesSummary cmd_train_stitches(const TrainStitchesArgs &args);

struct SearchArgs {
    std::string supernet_path;
    std::string data_path;
    std::string out_dir;
    RunConfig cfg;
};
struct SearchSummary {
    int64_t evaluations = 0;
    double skip_fraction = 0.0;
    std::string termination_reason;
    double final_hypervolume = 0.0; // normalized
};
SearchSummary cmd_search(const SearchArgs &args);

struct SweepArgs {
    std::string supernet_path;
    std::string data_path;
    std::string out_dir;
    RunConfig base;
    std::vector<size_t> sizes;
    std::string config_out; // optional: selected size written here
};
struct SweepSummary {
    std::vector<std::pair<size_t, double>> rows; // size -> normalized hv
    size_t selected = 0;
};
SweepSummary cmd_sweep(const SweepArgs &args);

struct ReportArgs {
    std::vector<std::string> run_dirs; // each containing archive.csv + meta.json
    std::string supernet_path;
    std::string data_path;
    std::string out_path;    // report.csv
    std::string hv_out_path; // per-run hypervolume summary (csv)
    int64_t ece_bins = 10;
};
struct ReportRow {
    std::string split; // validation | test
    std::string name;  // empty for searched networks
    Genotype genotype;
    double accuracy = 0.0;
    int64_t madds = 0;
    double ece = 0.0;
    bool is_reference = false;
};
struct ReportSummary {
    std::vector<ReportRow> rows;
    std::vector<std::pair<std::string, double>> run_hypervolumes;
};
ReportSummary cmd_report(const ReportArgs &args);

struct StatsArgs {
    std::map<std::string, std::vector<std::string>> group_run_dirs; // algo -> run dirs
    std::string out_path; // stats.txt
    double alpha = 0.05;
};
StatsReport cmd_stats(const StatsArgs &args);

// Artifact emission (shared with tests).
void write_runlog(const std::vector<LogRecord> &log, const std::string &path);
void write_archive_csv(const Archive &archive, const std::string &path);
void write_hv_csv(const std::vector<double> &trace, const std::string &path);

// Final normalized hypervolume of a finished run directory.
double read_final_hypervolume(const std::string &run_dir);

// Reference genotype evaluations (parent_a, parent_b, ensemble).
std::map<std::string, EvalResult> evaluate_references(const Supernetwork &supernet,
                                                      const Dataset &dataset, Split split,
                                                      int64_t eval_limit,
                                                      bool keep_probabilities = false);

} // namespace stitchnet
