#include "stitchnet/search.hpp"

#include "stitchnet/errors.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

namespace stitchnet {

// --- GA variation ------------------------------------------------------------

Genotype two_point_crossover(const Genotype &p1, const Genotype &p2, size_t cut1, size_t cut2)
{
    if (p1.size() != p2.size())
        throw std::invalid_argument("two_point_crossover: parent lengths differ");
    if (cut1 > cut2 || cut2 > p1.size())
        throw std::invalid_argument("two_point_crossover: bad cut points");
    Genotype child = p1;
    for (size_t i = cut1; i < cut2; ++i)
        child[i] = p2[i];
    return child;
}

void uniform_mutation(Genotype &g, Rng &rng)
{
    size_t l = g.size();
    double p = 1.0 / static_cast<double>(l);
    for (size_t i = 0; i < l; ++i) {
        if (!rng.bernoulli(p))
            continue;
        // Mutation resamples to a different value of the gene's alphabet, so
        // a mutated gene always changes.
        int64_t alphabet = gene_alphabet_size(i, l);
        int64_t offset = rng.int_range(1, alphabet - 1);
        g[i] = static_cast<uint8_t>((g[i] + offset) % alphabet);
    }
}

Genotype ga_generate(const Genotype &p1, const Genotype &p2, Rng &rng)
{
    size_t l = p1.size();
    size_t c1 = static_cast<size_t>(rng.int_range(0, static_cast<int64_t>(l)));
    size_t c2 = static_cast<size_t>(rng.int_range(0, static_cast<int64_t>(l)));
    if (c1 > c2)
        std::swap(c1, c2);
    Genotype child = two_point_crossover(p1, p2, c1, c2);
    uniform_mutation(child, rng);
    return child;
}

std::optional<size_t> ga_select_replacement(const ObjectivePoint &child,
                                            const std::vector<GaParent> &parents,
                                            double threshold, Rng &rng)
{
    std::vector<size_t> beatable;
    for (size_t i = 0; i < parents.size(); ++i)
        if (constrained_better(child, parents[i].point, threshold, parents[i].w1,
                               parents[i].w2))
            beatable.push_back(i);
    if (beatable.empty())
        return std::nullopt;
    return beatable[static_cast<size_t>(rng.below(beatable.size()))];
}

// --- GOM application ---------------------------------------------------------

namespace {

class GomApplication {
  public:
    struct Need {
        Genotype genotype;
        std::optional<EvalResult> inherited;
    };

    GomApplication(Genotype start, EvalResult start_result,
                   std::vector<std::vector<size_t>> subsets, double w1, double w2,
                   int64_t madds_ensemble, Rng &rng)
        : current_(std::move(start)), result_(std::move(start_result)),
          subsets_(std::move(subsets)), w1_(w1), w2_(w2), madds_ensemble_(madds_ensemble)
    {
        rng.shuffle(subsets_);
    }

    // Advances until a candidate needs evaluating; nullopt when all subsets
    // are exhausted. donor() supplies a genotype per subset.
    std::optional<Need> next(const std::function<const Genotype &()> &donor)
    {
        while (idx_ < subsets_.size()) {
            const auto &subset = subsets_[idx_++];
            const Genotype &d = donor();
            Genotype cand = current_;
            bool changed = false;
            for (size_t gi : subset)
                if (cand[gi] != d[gi]) {
                    cand[gi] = d[gi];
                    changed = true;
                }
            if (!changed)
                continue;
            auto inherited = maybe_skip(result_, current_, cand);
            pending_ = std::move(cand);
            return Need{*pending_, std::move(inherited)};
        }
        return std::nullopt;
    }

    void feed(const EvalResult &r, double threshold)
    {
        ++evaluations_;
        if (r.skipped)
            ++skipped_;
        ObjectivePoint cand = ObjectivePoint::from_eval(r.accuracy, r.madds, madds_ensemble_);
        ObjectivePoint cur =
            ObjectivePoint::from_eval(result_.accuracy, result_.madds, madds_ensemble_);
        bool equal = r.accuracy == result_.accuracy && r.madds == result_.madds;
        if (equal || constrained_better(cand, cur, threshold, w1_, w2_)) {
            if (!equal)
                improved_ = true;
            current_ = std::move(*pending_);
            result_ = r;
        }
        pending_.reset();
    }

    const Genotype &genotype() const { return current_; }
    const EvalResult &result() const { return result_; }
    int64_t evaluations() const { return evaluations_; }
    int64_t skipped_count() const { return skipped_; }
    bool improved() const { return improved_; }

  private:
    Genotype current_;
    EvalResult result_;
    std::vector<std::vector<size_t>> subsets_;
    size_t idx_ = 0;
    std::optional<Genotype> pending_;
    double w1_, w2_;
    int64_t madds_ensemble_;
    int64_t evaluations_ = 0;
    int64_t skipped_ = 0;
    bool improved_ = false;
};

} // namespace

GomOutcome gom_step(const Genotype &start, const EvalResult &start_result,
                    std::vector<std::vector<size_t>> subsets,
                    const std::vector<Genotype> &donors, double w1, double w2,
                    double threshold, int64_t madds_ensemble,
                    const std::function<EvalResult(const Genotype &)> &evaluate_fn, Rng &rng,
                    int64_t max_evals)
{
    GomApplication app(start, start_result, std::move(subsets), w1, w2, madds_ensemble, rng);
    auto donor_fn = [&]() -> const Genotype & {
        return donors[static_cast<size_t>(rng.below(donors.size()))];
    };
    GomOutcome out;
    while (auto need = app.next(donor_fn)) {
        if (max_evals >= 0 && app.evaluations() >= max_evals) {
            out.budget_hit = true;
            break;
        }
        EvalResult r = need->inherited ? *need->inherited : evaluate_fn(need->genotype);
        app.feed(r, threshold);
    }
    out.genotype = app.genotype();
    out.result = app.result();
    out.evaluations = app.evaluations();
    out.skipped = app.skipped_count();
    out.improved = app.improved();
    return out;
}

// --- evaluation service --------------------------------------------------------

namespace {

struct EvalJob {
    size_t loop_id = 0;
    Genotype genotype;
    std::optional<EvalResult> inherited; // pass-through for skipped evaluations
};

struct EvalDone {
    EvalJob job;
    EvalResult result;
};

// Bounded worker pool with a FIFO submission queue. With zero workers the
// service evaluates inline when asked for the next completion, which yields
// the deterministic synchronous mode.
class EvalService {
  public:
    EvalService(size_t workers, std::function<EvalResult(const Genotype &)> fn)
        : fn_(std::move(fn))
    {
        for (size_t i = 0; i < workers; ++i)
            threads_.emplace_back([this] { worker(); });
    }

    ~EvalService()
    {
        {
            std::lock_guard<std::mutex> lk(m_);
            stop_ = true;
        }
        cv_jobs_.notify_all();
        for (auto &t : threads_)
            t.join();
    }

    void submit(EvalJob job)
    {
        if (threads_.empty()) {
            sync_queue_.push_back(std::move(job));
            return;
        }
        {
            std::lock_guard<std::mutex> lk(m_);
            jobs_.push_back(std::move(job));
        }
        cv_jobs_.notify_one();
    }

    EvalDone next_completion()
    {
        if (threads_.empty()) {
            EvalJob job = std::move(sync_queue_.front());
            sync_queue_.pop_front();
            EvalResult r = job.inherited ? *job.inherited : fn_(job.genotype);
            return EvalDone{std::move(job), std::move(r)};
        }
        std::unique_lock<std::mutex> lk(m_);
        cv_done_.wait(lk, [&] { return !done_.empty(); });
        EvalDone d = std::move(done_.front());
        done_.pop_front();
        return d;
    }

  private:
    void worker()
    {
        while (true) {
            EvalJob job;
            {
                std::unique_lock<std::mutex> lk(m_);
                cv_jobs_.wait(lk, [&] { return stop_ || !jobs_.empty(); });
                if (jobs_.empty())
                    return;
                job = std::move(jobs_.front());
                jobs_.pop_front();
            }
            EvalResult r = job.inherited ? *job.inherited : fn_(job.genotype);
            {
                std::lock_guard<std::mutex> lk(m_);
                done_.push_back(EvalDone{std::move(job), std::move(r)});
            }
            cv_done_.notify_one();
        }
    }

    std::function<EvalResult(const Genotype &)> fn_;
    std::deque<EvalJob> sync_queue_; // zero-worker mode
    std::deque<EvalJob> jobs_;
    std::deque<EvalDone> done_;
    std::mutex m_;
    std::condition_variable cv_jobs_;
    std::condition_variable cv_done_;
    std::vector<std::thread> threads_;
    bool stop_ = false;
};

// --- shared run state ----------------------------------------------------------

struct SearchContext {
    const Supernetwork *supernet = nullptr;
    RunConfig cfg;
    size_t l = 0;
    int64_t madds_ensemble = 0;

    std::vector<Genotype> population;
    std::vector<EvalResult> results;
    std::vector<ObjectivePoint> points;
    std::vector<bool> evaluated;

    std::vector<std::pair<double, double>> weights;
    std::vector<size_t> weight_of;

    double threshold = 0.0;
    int64_t completions = 0;
    int64_t gom_applications = 0;
    Rng driver_rng;

    // GOMEA shared linkage tree, rebuilt from the live population on the
    // reassignment cadence.
    std::vector<std::vector<size_t>> shared_tree;
    bool tree_stale = true;

    void store_result(size_t i, const EvalResult &r)
    {
        results[i] = r;
        points[i] = ObjectivePoint::from_eval(r.accuracy, r.madds, madds_ensemble);
        evaluated[i] = true;
    }

    bool all_evaluated() const
    {
        return std::all_of(evaluated.begin(), evaluated.end(), [](bool b) { return b; });
    }

    void reassign_weights()
    {
        if (!all_evaluated())
            return;
        auto assignment = assign_weights(points, weights, driver_rng);
        weight_of = assignment;
    }

    std::pair<double, double> weight_pair(size_t i) const { return weights[weight_of[i]]; }

    const std::vector<std::vector<size_t>> &shared_subsets()
    {
        if (tree_stale) {
            shared_tree = build_linkage_tree(mutual_information_matrix(population));
            tree_stale = false;
        }
        return shared_tree;
    }
};

// --- per-individual loops --------------------------------------------------------

class Loop {
  public:
    virtual ~Loop() = default;
    // Resumes the loop; `result` carries the completion it was waiting for
    // (nullopt on the first call and on idle retries). Returns the next job
    // to evaluate, or nullopt when the loop cannot make progress right now.
    virtual std::optional<EvalJob> resume(SearchContext &ctx,
                                          std::optional<EvalResult> result) = 0;
};

class RandomLoop : public Loop {
  public:
    RandomLoop(size_t id, Rng rng) : id_(id), rng_(rng) {}

    std::optional<EvalJob> resume(SearchContext &ctx, std::optional<EvalResult> result) override
    {
        if (!started_) {
            started_ = true;
            return EvalJob{id_, ctx.population[id_], std::nullopt};
        }
        if (!init_done_ && result) {
            ctx.store_result(id_, *result);
            init_done_ = true;
        }
        return EvalJob{id_, biased_sample(ctx.l, rng_), std::nullopt};
    }

  private:
    size_t id_;
    Rng rng_;
    bool started_ = false;
    bool init_done_ = false;
};

class GaLoop : public Loop {
  public:
    GaLoop(size_t id, Rng rng) : id_(id), rng_(rng) {}

    std::optional<EvalJob> resume(SearchContext &ctx, std::optional<EvalResult> result) override
    {
        if (!started_) {
            started_ = true;
            return EvalJob{id_, ctx.population[id_], std::nullopt};
        }
        if (!init_done_) {
            ctx.store_result(id_, *result);
            init_done_ = true;
            return make_child(ctx);
        }
        process_child(ctx, *result);
        return make_child(ctx);
    }

  private:
    EvalJob make_child(SearchContext &ctx)
    {
        // Two distinct parents uniformly from the evaluated individuals.
        std::vector<size_t> pool;
        for (size_t i = 0; i < ctx.population.size(); ++i)
            if (ctx.evaluated[i])
                pool.push_back(i);
        p1_ = pool[static_cast<size_t>(rng_.below(pool.size()))];
        p2_ = p1_;
        if (pool.size() > 1)
            while (p2_ == p1_)
                p2_ = pool[static_cast<size_t>(rng_.below(pool.size()))];

        p1_geno_ = ctx.population[p1_];
        p2_geno_ = ctx.population[p2_];
        p1_res_ = ctx.results[p1_];
        p2_res_ = ctx.results[p2_];
        child_ = ga_generate(p1_geno_, p2_geno_, rng_);

        // Skip check against the designated reference parent: the crossover
        // base supplying the genes outside the cut segment.
        auto inherited = maybe_skip(p1_res_, p1_geno_, child_);
        return EvalJob{id_, child_, std::move(inherited)};
    }

    void process_child(SearchContext &ctx, const EvalResult &r)
    {
        ObjectivePoint child_pt = ObjectivePoint::from_eval(r.accuracy, r.madds,
                                                            ctx.madds_ensemble);
        // Compare against the current occupants of the parent slots, each
        // under its own scalarization weight.
        std::vector<GaParent> parents;
        auto [w11, w12] = ctx.weight_pair(p1_);
        auto [w21, w22] = ctx.weight_pair(p2_);
        parents.push_back({ctx.points[p1_], w11, w12});
        parents.push_back({ctx.points[p2_], w21, w22});
        auto sel = ga_select_replacement(child_pt, parents, ctx.threshold, rng_);
        if (sel) {
            size_t idx = *sel == 0 ? p1_ : p2_;
            ctx.population[idx] = child_;
            ctx.store_result(idx, r);
        }
    }

    size_t id_;
    Rng rng_;
    bool started_ = false;
    bool init_done_ = false;
    size_t p1_ = 0, p2_ = 0;
    Genotype p1_geno_, p2_geno_, child_;
    EvalResult p1_res_, p2_res_;
};

class GomeaLoop : public Loop {
  public:
    GomeaLoop(size_t id, Rng rng, bool linkage_kernels)
        : id_(id), rng_(rng), lk_(linkage_kernels)
    {
    }

    std::optional<EvalJob> resume(SearchContext &ctx, std::optional<EvalResult> result) override
    {
        if (!started_) {
            started_ = true;
            return EvalJob{id_, ctx.population[id_], std::nullopt};
        }
        if (!init_done_) {
            if (result) {
                ctx.store_result(id_, *result);
                init_done_ = true;
            } else {
                return std::nullopt;
            }
        } else if (app_ && result) {
            app_->feed(*result, ctx.threshold);
            ctx.population[id_] = app_->genotype();
            ctx.store_result(id_, app_->result());
        }

        while (true) {
            if (!app_) {
                if (!start_application(ctx))
                    return std::nullopt; // converged neighborhood; retry later
            }
            auto need = app_->next(donor_fn_);
            if (need)
                return EvalJob{id_, need->genotype, std::move(need->inherited)};

            // Application finished.
            bool any_evals = app_->evaluations() > 0;
            app_.reset();
            donors_.clear();
            ctx.gom_applications += 1;
            if (ctx.gom_applications % static_cast<int64_t>(ctx.population.size()) == 0) {
                ctx.reassign_weights();
                ctx.tree_stale = true;
            }
            if (!any_evals)
                return std::nullopt; // nothing changed; retry after other loops move
        }
    }

  private:
    bool start_application(SearchContext &ctx)
    {
        std::vector<std::vector<size_t>> subsets;
        if (lk_) {
            int64_t n = static_cast<int64_t>(ctx.population.size());
            int64_t k = sample_kernel_size(n, ctx.cfg.lk_min_neighborhood, rng_);
            std::vector<size_t> nb = knn_neighborhood(ctx.population, id_, k);
            donors_.clear();
            bool uniform = true;
            for (size_t i : nb) {
                donors_.push_back(ctx.population[i]);
                if (ctx.population[i] != ctx.population[nb[0]])
                    uniform = false;
            }
            if (uniform || donors_.size() < 2)
                return false; // neighborhood converged
            subsets = build_linkage_tree(mutual_information_matrix(donors_));
        } else {
            subsets = ctx.shared_subsets();
            donors_ = ctx.population;
        }
        auto [w1, w2] = ctx.weight_pair(id_);
        app_ = std::make_unique<GomApplication>(ctx.population[id_], ctx.results[id_],
                                                std::move(subsets), w1, w2,
                                                ctx.madds_ensemble, rng_);
        donor_fn_ = [this]() -> const Genotype & {
            return donors_[static_cast<size_t>(rng_.below(donors_.size()))];
        };
        return true;
    }

    size_t id_;
    Rng rng_;
    bool lk_;
    bool started_ = false;
    bool init_done_ = false;
    std::unique_ptr<GomApplication> app_;
    std::vector<Genotype> donors_;
    std::function<const Genotype &()> donor_fn_;
};

} // namespace

// --- driver ----------------------------------------------------------------------

RunResult run_search(const Supernetwork &supernet, const Dataset &dataset,
                     const RunConfig &cfg)
{
    if (cfg.algorithm != "ga" && cfg.algorithm != "gomea" && cfg.algorithm != "lk-gomea" &&
        cfg.algorithm != "random")
        throw std::invalid_argument("run_search: unknown algorithm '" + cfg.algorithm + "'");
    if (cfg.population < 2)
        throw std::invalid_argument("run_search: population must be >= 2");
    if (cfg.budget < static_cast<int64_t>(cfg.population))
        throw std::invalid_argument("run_search: budget must be >= population size");
    if (cfg.algorithm == "lk-gomea" &&
        static_cast<int64_t>(cfg.population) < cfg.lk_min_neighborhood)
        throw std::invalid_argument("run_search: population must be >= lk_min_neighborhood");

    size_t l = supernet.genotype_length();
    size_t n = cfg.population;

    RunResult out;
    out.madds_ensemble = network_madds(decode(supernet, reference_genotype(l, 2)).graph);

    SearchContext ctx;
    ctx.supernet = &supernet;
    ctx.cfg = cfg;
    ctx.l = l;
    ctx.madds_ensemble = out.madds_ensemble;
    ctx.driver_rng = Rng(cfg.seed).fork(61);
    ctx.weights = weight_grid(n);
    ctx.weight_of.resize(n);
    for (size_t i = 0; i < n; ++i)
        ctx.weight_of[i] = i;

    // Reference solutions anchor the population; the rest is biased sampling.
    Rng init_rng = Rng(cfg.seed).fork(62);
    for (size_t i = 0; i < n; ++i) {
        if (i < 3)
            ctx.population.push_back(reference_genotype(l, static_cast<uint8_t>(i)));
        else
            ctx.population.push_back(biased_sample(l, init_rng));
    }
    ctx.results.resize(n);
    ctx.points.resize(n);
    ctx.evaluated.assign(n, false);

    auto evaluator = [&](const Genotype &g) {
        return evaluate(supernet, g, dataset, Split::Validation, cfg.eval_limit);
    };
    EvalService service(cfg.workers, evaluator);

    std::vector<std::unique_ptr<Loop>> loops;
    Rng loop_seed = Rng(cfg.seed).fork(63);
    for (size_t i = 0; i < n; ++i) {
        Rng r = loop_seed.fork(i);
        if (cfg.algorithm == "random")
            loops.push_back(std::make_unique<RandomLoop>(i, r));
        else if (cfg.algorithm == "ga")
            loops.push_back(std::make_unique<GaLoop>(i, r));
        else
            loops.push_back(std::make_unique<GomeaLoop>(i, r, cfg.algorithm == "lk-gomea"));
    }

    SteeringSchedule steering{cfg.budget};
    int64_t submitted = 0;
    int64_t pending = 0;
    int64_t skipped_total = 0;
    std::string closed_reason;
    std::set<size_t> idle;
    auto t0 = std::chrono::steady_clock::now();

    auto elapsed_s = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    auto resume_loop = [&](size_t id, std::optional<EvalResult> result) {
        auto job = loops[id]->resume(ctx, std::move(result));
        if (!job) {
            idle.insert(id);
            return;
        }
        if (submitted >= cfg.budget) {
            closed_reason = "budget";
            return;
        }
        if (cfg.time_limit_s > 0.0 && elapsed_s() > cfg.time_limit_s) {
            if (closed_reason.empty())
                closed_reason = "time";
            return;
        }
        service.submit(std::move(*job));
        ++submitted;
        ++pending;
    };

    for (size_t i = 0; i < n; ++i)
        resume_loop(i, std::nullopt);

    while (pending > 0) {
        EvalDone done = service.next_completion();
        --pending;
        ctx.completions += 1;
        ctx.threshold = steering.threshold_at(ctx.completions);

        ObjectivePoint pt =
            ObjectivePoint::from_eval(done.result.accuracy, done.result.madds,
                                      ctx.madds_ensemble);
        out.archive.prune(ctx.threshold);
        out.archive.try_add(done.job.genotype, pt, ctx.threshold);
        if (done.result.skipped)
            ++skipped_total;

        LogRecord rec;
        rec.eval_index = ctx.completions;
        rec.algo = cfg.algorithm;
        rec.seed = cfg.seed;
        rec.genotype = done.job.genotype;
        rec.accuracy = done.result.accuracy;
        rec.madds = done.result.madds;
        rec.skipped = done.result.skipped;
        rec.feasible = done.result.accuracy >= ctx.threshold;
        rec.threshold = ctx.threshold;
        rec.wall_ms = cfg.workers == 0
                          ? 0
                          : static_cast<int64_t>(elapsed_s() * 1000.0);
        out.log.push_back(std::move(rec));
        out.hv_trace.push_back(normalized_hypervolume(archive_hypervolume(out.archive)));

        if (cfg.algorithm == "ga" && ctx.completions % static_cast<int64_t>(n) == 0)
            ctx.reassign_weights();

        resume_loop(done.job.loop_id, done.result);

        // Give idle loops another chance; population state has moved.
        std::vector<size_t> retry(idle.begin(), idle.end());
        idle.clear();
        for (size_t id : retry)
            resume_loop(id, std::nullopt);
    }

    out.evaluations = ctx.completions;
    out.skip_fraction = ctx.completions == 0
                            ? 0.0
                            : static_cast<double>(skipped_total) /
                                  static_cast<double>(ctx.completions);
    if (submitted >= cfg.budget)
        out.termination_reason = "budget";
    else if (closed_reason == "time")
        out.termination_reason = "time";
    else
        out.termination_reason = "converged";
    return out;
}

} // namespace stitchnet
