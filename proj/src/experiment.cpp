#include "stitchnet/experiment.hpp"

#include "stitchnet/errors.hpp"
#include "stitchnet/serialize.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

namespace stitchnet {

namespace {

namespace fs = std::filesystem;

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shortest round-trip decimal form, identical to the JSON encoding, so CSV
// and JSONL artifacts are byte-stable.
std::string num(double v)
{
    return nlohmann::json(v).dump();
}

void ensure_parent_dir(const std::string &path)
{
    fs::path p(path);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
}

} // namespace

Dataset cmd_gen_data(const GenDataArgs &args)
{
    Dataset ds = gen_dataset(args.seed, args.n, args.task, args.classes);
    if (!args.out.empty()) {
        ensure_parent_dir(args.out);
        save_dataset(ds, args.out);
    }
    return ds;
}

TrainParentsSummary cmd_train_parents(const TrainParentsArgs &args)
{
    auto t0 = std::chrono::steady_clock::now();
    Dataset ds = load_dataset(args.data_path);
    ParentPreset preset = make_preset(args.preset, args.arch_seed);

    TrainConfig cfg_a = args.train;
    TrainConfig cfg_b = args.train;
    cfg_b.seed = args.train.seed + 1;
    TrainReport a = train_parent(preset.parent_a, ds, cfg_a);
    TrainReport b = train_parent(preset.parent_b, ds, cfg_b);

    ensure_parent_dir(args.out_a);
    ensure_parent_dir(args.out_b);
    save_network(a.graph, args.out_a);
    save_network(b.graph, args.out_b);

    TrainParentsSummary s;
    s.train_accuracy_a = a.train_accuracy;
    s.validation_accuracy_a = a.validation_accuracy;
    s.train_accuracy_b = b.train_accuracy;
    s.validation_accuracy_b = b.validation_accuracy;
    s.seconds = seconds_since(t0);
    return s;
}

StitchSummary cmd_stitch(const StitchArgs &args)
{
    StitchSummary s;
    NetworkGraph a = load_network(args.a_path);
    NetworkGraph b = load_network(args.b_path);

    auto t0 = std::chrono::steady_clock::now();
    std::vector<MatchCandidate> candidates = find_candidates(a, b, args.filter);
    s.sec_candidates = seconds_since(t0);
    s.candidates = candidates.size();

    t0 = std::chrono::steady_clock::now();
    MatchingPlan plan = acyclic_max_matching(a, b, candidates, args.expansion_budget);
    s.sec_matching = seconds_since(t0);
    s.matches = plan.matches.size();
    s.timeout_hit = plan.timeout_hit;

    t0 = std::chrono::steady_clock::now();
    Supernetwork net = build_supernetwork(a, b, plan, args.seed);
    s.sec_construction = seconds_since(t0);
    s.genotype_length = net.genotype_length();

    ensure_parent_dir(args.out);
    save_supernetwork(net, args.out);
    return s;
}

TrainStitchesSummary cmd_train_stitches(const TrainStitchesArgs &args)
{
    auto t0 = std::chrono::steady_clock::now();
    Supernetwork net = load_supernetwork(args.supernet_path);
    Dataset ds = load_dataset(args.data_path);

    StitchTrainResult result = train_stitches(net, ds, args.cfg);

    ensure_parent_dir(args.out);
    save_supernetwork(result.supernet, args.out);

    TrainStitchesSummary s;
    s.stitches = result.reports.size();
    double sum = 0.0;
    nlohmann::json stitches = nlohmann::json::object();
    for (const auto &r : result.reports) {
        sum += r.mse;
        stitches[r.stitch_id] = {{"samples", r.samples}, {"mse", r.mse}, {"method", r.method}};
    }
    s.mean_mse = result.reports.empty() ? 0.0 : sum / static_cast<double>(result.reports.size());
    s.seconds = seconds_since(t0);

    if (!args.report_path.empty()) {
        ensure_parent_dir(args.report_path);
        write_json_file(nlohmann::json{{"method", args.cfg.method},
                                       {"sample_budget", args.cfg.sample_budget},
                                       {"seconds", s.seconds},
                                       {"stitches", stitches}},
                        args.report_path);
    }
    return s;
}

void write_runlog(const std::vector<LogRecord> &log, const std::string &path)
{
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    for (const auto &r : log) {
        nlohmann::json j{{"eval_index", r.eval_index},
                         {"algo", r.algo},
                         {"seed", r.seed},
                         {"genotype", genotype_to_string(r.genotype)},
                         {"accuracy", r.accuracy},
                         {"madds", r.madds},
                         {"skipped", r.skipped},
                         {"feasible", r.feasible},
                         {"threshold", r.threshold},
                         {"wall_ms", r.wall_ms}};
        out << j.dump() << "\n";
    }
}

void write_archive_csv(const Archive &archive, const std::string &path)
{
    ensure_parent_dir(path);
    std::vector<ArchiveEntry> rows = archive.entries();
    std::sort(rows.begin(), rows.end(), [](const ArchiveEntry &a, const ArchiveEntry &b) {
        if (a.point.accuracy != b.point.accuracy)
            return a.point.accuracy > b.point.accuracy;
        if (a.point.madds != b.point.madds)
            return a.point.madds < b.point.madds;
        return genotype_to_string(a.genotype) < genotype_to_string(b.genotype);
    });
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << "accuracy,madds,genotype\n";
    for (const auto &e : rows)
        out << num(e.point.accuracy) << "," << e.point.madds << ","
            << genotype_to_string(e.genotype) << "\n";
}

void write_hv_csv(const std::vector<double> &trace, const std::string &path)
{
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw FormatError("cannot open '" + path + "' for writing");
    out << "eval_index,hypervolume\n";
    for (size_t i = 0; i < trace.size(); ++i)
        out << (i + 1) << "," << num(trace[i]) << "\n";
}

SearchSummary cmd_search(const SearchArgs &args)
{
    Supernetwork net = load_supernetwork(args.supernet_path);
    Dataset ds = load_dataset(args.data_path);

    RunResult run = run_search(net, ds, args.cfg);

    fs::create_directories(args.out_dir);
    write_runlog(run.log, args.out_dir + "/runlog.jsonl");
    write_archive_csv(run.archive, args.out_dir + "/archive.csv");
    write_hv_csv(run.hv_trace, args.out_dir + "/hv.csv");
    write_json_file(nlohmann::json{{"algo", args.cfg.algorithm},
                                   {"seed", args.cfg.seed},
                                   {"population", args.cfg.population},
                                   {"budget", args.cfg.budget},
                                   {"eval_limit", args.cfg.eval_limit},
                                   {"workers", args.cfg.workers},
                                   {"madds_ensemble", run.madds_ensemble},
                                   {"evaluations", run.evaluations},
                                   {"skip_fraction", run.skip_fraction},
                                   {"termination", run.termination_reason}},
                    args.out_dir + "/meta.json");

    SearchSummary s;
    s.evaluations = run.evaluations;
    s.skip_fraction = run.skip_fraction;
    s.termination_reason = run.termination_reason;
    s.final_hypervolume = run.hv_trace.empty() ? 0.0 : run.hv_trace.back();
    return s;
}

double read_final_hypervolume(const std::string &run_dir)
{
    std::ifstream in(run_dir + "/hv.csv");
    if (!in)
        throw FormatError("cannot open '" + run_dir + "/hv.csv'");
    std::string line, last;
    std::getline(in, line); // header
    while (std::getline(in, line))
        if (!line.empty())
            last = line;
    if (last.empty())
        throw FormatError("'" + run_dir + "/hv.csv' has no data rows");
    auto comma = last.find(',');
    return std::stod(last.substr(comma + 1));
}

SweepSummary cmd_sweep(const SweepArgs &args)
{
    if (args.sizes.empty())
        throw std::invalid_argument("cmd_sweep: no population sizes given");

    SweepSummary s;
    for (size_t size : args.sizes) {
        SearchArgs run_args;
        run_args.supernet_path = args.supernet_path;
        run_args.data_path = args.data_path;
        run_args.out_dir = args.out_dir + "/n" + std::to_string(size);
        run_args.cfg = args.base;
        run_args.cfg.population = size;
        SearchSummary sum = cmd_search(run_args);
        s.rows.emplace_back(size, sum.final_hypervolume);
    }
    // Highest normalized hypervolume wins; ties go to the smallest size.
    s.selected = s.rows[0].first;
    double best = s.rows[0].second;
    for (const auto &[size, hv] : s.rows) {
        if (hv > best) {
            best = hv;
            s.selected = size;
        } else if (hv == best && size < s.selected) {
            s.selected = size;
        }
    }

    nlohmann::json rows = nlohmann::json::array();
    for (const auto &[size, hv] : s.rows)
        rows.push_back({{"population", size}, {"hypervolume", hv}});
    fs::create_directories(args.out_dir);
    write_json_file(nlohmann::json{{"algo", args.base.algorithm},
                                   {"rows", rows},
                                   {"selected", s.selected}},
                    args.out_dir + "/sweep.json");

    if (!args.config_out.empty()) {
        nlohmann::json cfg = nlohmann::json::object();
        if (fs::exists(args.config_out))
            cfg = read_json_file(args.config_out);
        cfg["population"][args.base.algorithm] = s.selected;
        ensure_parent_dir(args.config_out);
        write_json_file(cfg, args.config_out);
    }
    return s;
}

std::map<std::string, EvalResult> evaluate_references(const Supernetwork &supernet,
                                                      const Dataset &dataset, Split split,
                                                      int64_t eval_limit,
                                                      bool keep_probabilities)
{
    size_t l = supernet.genotype_length();
    std::map<std::string, EvalResult> out;
    out["parent_a"] = evaluate(supernet, reference_genotype(l, 0), dataset, split, eval_limit,
                               keep_probabilities);
    out["parent_b"] = evaluate(supernet, reference_genotype(l, 1), dataset, split, eval_limit,
                               keep_probabilities);
    out["ensemble"] = evaluate(supernet, reference_genotype(l, 2), dataset, split, eval_limit,
                               keep_probabilities);
    return out;
}

namespace {

struct ArchiveRow {
    double accuracy = 0.0;
    int64_t madds = 0;
    Genotype genotype;
};

std::vector<ArchiveRow> read_archive_csv(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw FormatError("cannot open '" + path + "'");
    std::vector<ArchiveRow> rows;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto c1 = line.find(',');
        auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw FormatError("malformed archive row: " + line);
        ArchiveRow r;
        r.accuracy = std::stod(line.substr(0, c1));
        r.madds = std::stoll(line.substr(c1 + 1, c2 - c1 - 1));
        r.genotype = genotype_from_string(line.substr(c2 + 1));
        rows.push_back(std::move(r));
    }
    return rows;
}

} // namespace

ReportSummary cmd_report(const ReportArgs &args)
{
    Supernetwork net = load_supernetwork(args.supernet_path);
    Dataset ds = load_dataset(args.data_path);

    // Union of the runs' archives; first-seen wins for duplicate genotypes.
    std::vector<ArchiveRow> members;
    std::set<std::string> seen;
    int64_t eval_limit = 0;
    int64_t madds_ensemble = 0;
    ReportSummary summary;
    for (const auto &dir : args.run_dirs) {
        nlohmann::json meta = read_json_file(dir + "/meta.json");
        eval_limit = meta.at("eval_limit").get<int64_t>();
        madds_ensemble = meta.at("madds_ensemble").get<int64_t>();
        summary.run_hypervolumes.emplace_back(dir, read_final_hypervolume(dir));
        for (auto &row : read_archive_csv(dir + "/archive.csv"))
            if (seen.insert(genotype_to_string(row.genotype)).second)
                members.push_back(std::move(row));
    }
    if (members.empty() && args.run_dirs.empty())
        throw std::invalid_argument("cmd_report: no run directories given");
    if (madds_ensemble == 0)
        madds_ensemble = network_madds(
            decode(net, reference_genotype(net.genotype_length(), 2)).graph);

    auto add_rows = [&](const std::string &split_name, Split split, int64_t limit) {
        // Re-evaluate every member on the split, then filter dominated points
        // again. References are always reported.
        struct Scored {
            ArchiveRow row;
            EvalResult eval;
        };
        std::vector<Scored> scored;
        for (const auto &m : members) {
            EvalResult r = evaluate(net, m.genotype, ds, split, limit, true);
            scored.push_back({m, std::move(r)});
        }
        Archive filter;
        std::vector<bool> kept(scored.size(), false);
        std::vector<size_t> order(scored.size());
        for (size_t i = 0; i < order.size(); ++i)
            order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (scored[a].eval.accuracy != scored[b].eval.accuracy)
                return scored[a].eval.accuracy > scored[b].eval.accuracy;
            return scored[a].eval.madds < scored[b].eval.madds;
        });
        for (size_t i : order)
            kept[i] = filter.try_add(scored[i].row.genotype,
                                     ObjectivePoint::from_eval(scored[i].eval.accuracy,
                                                               scored[i].eval.madds,
                                                               madds_ensemble),
                                     0.0);
        size_t net_idx = 0;
        for (size_t i = 0; i < scored.size(); ++i) {
            ++net_idx;
            if (!kept[i])
                continue;
            ReportRow row;
            row.split = split_name;
            row.name = "net_" + std::to_string(net_idx);
            row.genotype = scored[i].row.genotype;
            row.accuracy = scored[i].eval.accuracy;
            row.madds = scored[i].eval.madds;
            row.ece = compute_ece(*scored[i].eval.probabilities,
                                  ds.gather_labels(split, limit), args.ece_bins)
                          .ece;
            summary.rows.push_back(std::move(row));
        }
        for (auto &[name, r] : evaluate_references(net, ds, split, limit, true)) {
            ReportRow row;
            row.split = split_name;
            row.name = name;
            row.genotype = reference_genotype(net.genotype_length(),
                                              name == "parent_a"  ? 0
                                              : name == "parent_b" ? 1
                                                                   : 2);
            row.accuracy = r.accuracy;
            row.madds = r.madds;
            row.ece =
                compute_ece(*r.probabilities, ds.gather_labels(split, limit), args.ece_bins)
                    .ece;
            row.is_reference = true;
            summary.rows.push_back(std::move(row));
        }
    };

    // Validation as searched (truncated like the runs); test on the full split.
    add_rows("validation", Split::Validation, eval_limit);
    add_rows("test", Split::Test, 0);

    if (!args.out_path.empty()) {
        ensure_parent_dir(args.out_path);
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out)
            throw FormatError("cannot open '" + args.out_path + "' for writing");
        out << "split,name,genotype,accuracy,madds,ece,is_reference\n";
        for (const auto &r : summary.rows)
            out << r.split << "," << r.name << "," << genotype_to_string(r.genotype) << ","
                << num(r.accuracy) << "," << r.madds << "," << num(r.ece) << ","
                << (r.is_reference ? 1 : 0) << "\n";
    }
    if (!args.hv_out_path.empty()) {
        ensure_parent_dir(args.hv_out_path);
        std::ofstream out(args.hv_out_path, std::ios::binary);
        out << "run,hypervolume\n";
        for (const auto &[dir, hv] : summary.run_hypervolumes)
            out << fs::path(dir).filename().string() << "," << num(hv) << "\n";
    }
    return summary;
}

StatsReport cmd_stats(const StatsArgs &args)
{
    if (args.group_run_dirs.size() < 2)
        throw std::invalid_argument("cmd_stats: need >= 2 groups");
    std::map<std::string, std::vector<double>> groups;
    for (const auto &[name, dirs] : args.group_run_dirs) {
        for (const auto &dir : dirs)
            groups[name].push_back(read_final_hypervolume(dir));
    }
    StatsReport report = mann_whitney_holm(groups, args.alpha);

    if (!args.out_path.empty()) {
        ensure_parent_dir(args.out_path);
        std::ofstream out(args.out_path, std::ios::binary);
        if (!out)
            throw FormatError("cannot open '" + args.out_path + "' for writing");
        out << "best: " << report.best_group << " (median hv " << num(report.best_median)
            << ")\n";
        out << "other,U,p,significant\n";
        for (const auto &d : report.decisions)
            out << d.other << "," << num(d.u) << "," << num(d.p) << ","
                << (d.significant ? 1 : 0) << "\n";
    }
    return report;
}

} // namespace stitchnet
