// Command-line driver for the stitching pipeline: data generation, parent
// training, supernetwork construction, stitch training, multi-objective
// search, sweeps, reporting and statistics.

#include "stitchnet/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

using namespace stitchnet;

namespace {

void add_run_config(CLI::App *cmd, RunConfig &cfg, bool &deterministic)
{
    cmd->add_option("--algo", cfg.algorithm, "ga | gomea | lk-gomea | random")
        ->default_val(cfg.algorithm);
    cmd->add_option("--pop", cfg.population, "population size")->default_val(cfg.population);
    cmd->add_option("--budget", cfg.budget, "evaluation budget (skipped evaluations count)")
        ->default_val(cfg.budget);
    cmd->add_option("--time-limit", cfg.time_limit_s, "wall clock limit in seconds (0 = off)")
        ->default_val(cfg.time_limit_s);
    cmd->add_option("--seed", cfg.seed, "run seed")->default_val(cfg.seed);
    cmd->add_option("--eval-limit", cfg.eval_limit,
                    "validation samples per evaluation (0 = whole split)")
        ->default_val(cfg.eval_limit);
    cmd->add_option("--lk-min-neighborhood", cfg.lk_min_neighborhood,
                    "minimum linkage-kernel neighborhood size c")
        ->default_val(cfg.lk_min_neighborhood);
    auto *workers = cmd->add_option("--workers", cfg.workers,
                                    "evaluation worker threads (asynchronous mode)");
    cmd->add_flag("--deterministic", deterministic,
                  "single-threaded bit-reproducible mode (default)")
        ->excludes(workers);
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"model stitching and recombination search"};
    app.set_config("--config", "", "config file (INI format; flags override)");
    app.require_subcommand(1);

    // gen-data
    GenDataArgs gen;
    auto *cmd_gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    cmd_gen->add_option("--task", gen.task, "shapes | two_spirals | rings")
        ->default_val(gen.task);
    cmd_gen->add_option("--n", gen.n, "sample count")->default_val(gen.n);
    cmd_gen->add_option("--classes", gen.classes, "class count (shapes only)")
        ->default_val(gen.classes);
    cmd_gen->add_option("--seed", gen.seed, "generator seed")->default_val(gen.seed);
    cmd_gen->add_option("--out", gen.out, "output dataset container (*.data)")->required();

    // train-parents
    TrainParentsArgs tp;
    auto *cmd_tp = app.add_subcommand("train-parents", "train a preset parent pair");
    cmd_tp->add_option("--preset", tp.preset, "a | b | mlp")->default_val(tp.preset);
    cmd_tp->add_option("--data", tp.data_path, "dataset container")->required();
    cmd_tp->add_option("--out-a", tp.out_a, "output network container for parent A")
        ->required();
    cmd_tp->add_option("--out-b", tp.out_b, "output network container for parent B")
        ->required();
    cmd_tp->add_option("--lr", tp.train.lr)->default_val(tp.train.lr);
    cmd_tp->add_option("--batch", tp.train.batch)->default_val(tp.train.batch);
    cmd_tp->add_option("--sample-budget", tp.train.sample_budget)
        ->default_val(tp.train.sample_budget);
    cmd_tp->add_option("--seed", tp.train.seed, "training seed")->default_val(tp.train.seed);
    cmd_tp->add_option("--arch-seed", tp.arch_seed, "architecture init seed")
        ->default_val(tp.arch_seed);

    // stitch
    StitchArgs st;
    auto *cmd_st = app.add_subcommand("stitch", "match two parents and build a supernetwork");
    cmd_st->add_option("--a", st.a_path, "parent A network container")->required();
    cmd_st->add_option("--b", st.b_path, "parent B network container")->required();
    cmd_st->add_option("--out", st.out, "output supernetwork container")->required();
    cmd_st->add_option("--seed", st.seed, "stitch weight init seed")->default_val(st.seed);
    cmd_st->add_option("--expansion-budget", st.expansion_budget,
                       "branch and bound node budget")
        ->default_val(st.expansion_budget);
    cmd_st->add_option("--stride-a", st.filter.stride_a, "keep every k-th eligible A node")
        ->default_val(st.filter.stride_a);
    cmd_st->add_option("--stride-b", st.filter.stride_b, "keep every k-th eligible B node")
        ->default_val(st.filter.stride_b);

    // train-stitches
    TrainStitchesArgs ts;
    auto *cmd_ts = app.add_subcommand("train-stitches", "train all stitching layers");
    cmd_ts->add_option("--supernet", ts.supernet_path, "supernetwork container")->required();
    cmd_ts->add_option("--data", ts.data_path, "dataset container")->required();
    cmd_ts->add_option("--out", ts.out, "output trained supernetwork")->required();
    cmd_ts->add_option("--report", ts.report_path, "stitch-training report (JSON)");
    cmd_ts->add_option("--method", ts.cfg.method, "closed_form | adam")
        ->default_val(ts.cfg.method);
    cmd_ts->add_option("--lr", ts.cfg.lr)->default_val(ts.cfg.lr);
    cmd_ts->add_option("--batch", ts.cfg.batch)->default_val(ts.cfg.batch);
    cmd_ts->add_option("--sample-budget", ts.cfg.sample_budget)
        ->default_val(ts.cfg.sample_budget);
    cmd_ts->add_option("--ridge", ts.cfg.ridge)->default_val(ts.cfg.ridge);
    cmd_ts->add_option("--seed", ts.cfg.seed)->default_val(ts.cfg.seed);

    // search
    SearchArgs se;
    bool se_deterministic = false;
    auto *cmd_se = app.add_subcommand("search", "multi-objective search over subnetworks");
    cmd_se->add_option("--supernet", se.supernet_path, "trained supernetwork")->required();
    cmd_se->add_option("--data", se.data_path, "dataset container")->required();
    cmd_se->add_option("--out-dir", se.out_dir, "run output directory")->required();
    add_run_config(cmd_se, se.cfg, se_deterministic);

    // sweep
    SweepArgs sw;
    bool sw_deterministic = false;
    std::string sw_sizes = "16,32,64";
    auto *cmd_sw = app.add_subcommand("sweep", "population-size sweep");
    cmd_sw->add_option("--supernet", sw.supernet_path, "trained supernetwork")->required();
    cmd_sw->add_option("--data", sw.data_path, "dataset container")->required();
    cmd_sw->add_option("--out-dir", sw.out_dir, "sweep output directory")->required();
    cmd_sw->add_option("--sizes", sw_sizes, "comma-separated population sizes")
        ->default_val(sw_sizes);
    cmd_sw->add_option("--config-out", sw.config_out,
                       "JSON config updated with the selected size");
    add_run_config(cmd_sw, sw.base, sw_deterministic);

    // report
    ReportArgs rp;
    auto *cmd_rp = app.add_subcommand("report", "re-evaluate archives and emit fronts");
    cmd_rp->add_option("--runs", rp.run_dirs, "run directories")->required()->expected(-1);
    cmd_rp->add_option("--supernet", rp.supernet_path, "trained supernetwork")->required();
    cmd_rp->add_option("--data", rp.data_path, "dataset container")->required();
    cmd_rp->add_option("--out", rp.out_path, "report CSV")->required();
    cmd_rp->add_option("--hv-out", rp.hv_out_path, "per-run hypervolume CSV");
    cmd_rp->add_option("--ece-bins", rp.ece_bins)->default_val(rp.ece_bins);

    // stats
    StatsArgs sa;
    std::vector<std::string> stat_groups;
    auto *cmd_sa = app.add_subcommand("stats", "compare algorithms across runs");
    cmd_sa->add_option("--runs", stat_groups,
                       "group directories; each contains one subdirectory per run")
        ->required()
        ->expected(-1);
    cmd_sa->add_option("--out", sa.out_path, "stats output file")->required();
    cmd_sa->add_option("--alpha", sa.alpha)->default_val(sa.alpha);

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_gen->parsed()) {
            Dataset ds = cmd_gen_data(gen);
            std::printf("dataset task=%s n=%lld classes=%lld -> %s\n", gen.task.c_str(),
                        static_cast<long long>(ds.size()),
                        static_cast<long long>(ds.task.num_classes), gen.out.c_str());
        } else if (cmd_tp->parsed()) {
            TrainParentsSummary s = cmd_train_parents(tp);
            std::printf("parent A: train %.4f validation %.4f\n", s.train_accuracy_a,
                        s.validation_accuracy_a);
            std::printf("parent B: train %.4f validation %.4f\n", s.train_accuracy_b,
                        s.validation_accuracy_b);
            std::printf("timing: training %.2fs\n", s.seconds);
        } else if (cmd_st->parsed()) {
            StitchSummary s = cmd_stitch(st);
            std::printf("candidates=%zu matches=%zu genotype_length=%zu%s\n", s.candidates,
                        s.matches, s.genotype_length,
                        s.timeout_hit ? " (warning: matching budget hit, best-so-far plan)"
                                      : "");
            std::printf("timing: candidates %.3fs matching %.3fs construction %.3fs\n",
                        s.sec_candidates, s.sec_matching, s.sec_construction);
        } else if (cmd_ts->parsed()) {
            TrainStitchesSummary s = cmd_train_stitches(ts);
            std::printf("trained %zu stitches, mean MSE %.6g\n", s.stitches, s.mean_mse);
            std::printf("timing: stitch-training %.2fs\n", s.seconds);
        } else if (cmd_se->parsed()) {
            if (se_deterministic)
                se.cfg.workers = 0;
            SearchSummary s = cmd_search(se);
            std::printf("evaluations=%lld skip_fraction=%.4f termination=%s hv=%.6f\n",
                        static_cast<long long>(s.evaluations), s.skip_fraction,
                        s.termination_reason.c_str(), s.final_hypervolume);
        } else if (cmd_sw->parsed()) {
            if (sw_deterministic)
                sw.base.workers = 0;
            for (const auto &tok : CLI::detail::split(sw_sizes, ','))
                sw.sizes.push_back(static_cast<size_t>(std::stoull(tok)));
            SweepSummary s = cmd_sweep(sw);
            std::printf("population,hypervolume\n");
            for (const auto &[size, hv] : s.rows)
                std::printf("%zu,%.6f\n", size, hv);
            std::printf("selected=%zu\n", s.selected);
        } else if (cmd_rp->parsed()) {
            ReportSummary s = cmd_report(rp);
            std::printf("report rows=%zu runs=%zu -> %s\n", s.rows.size(),
                        s.run_hypervolumes.size(), rp.out_path.c_str());
        } else if (cmd_sa->parsed()) {
            for (const auto &g : stat_groups) {
                std::vector<std::string> runs;
                for (const auto &e : std::filesystem::directory_iterator(g))
                    if (e.is_directory())
                        runs.push_back(e.path().string());
                std::sort(runs.begin(), runs.end());
                sa.group_run_dirs[std::filesystem::path(g).filename().string()] = runs;
            }
            StatsReport s = cmd_stats(sa);
            std::printf("best=%s median=%.6f\n", s.best_group.c_str(), s.best_median);
            for (const auto &d : s.decisions)
                std::printf("%s U=%.1f p=%.4g %s\n", d.other.c_str(), d.u, d.p,
                            d.significant ? "significant" : "not-significant");
        }
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
