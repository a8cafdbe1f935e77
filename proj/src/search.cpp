#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_set>

#include "ihanas/search.hpp"

namespace ihanas {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Re-breeding budget for offspring whose genome was already evaluated.
constexpr int kBreedAttempts = 8;

}  // namespace

void SearchConfig::check() const {
    if (population < 1) throw ConfigError("population", "must be >= 1");
    if (offspring < 1) throw ConfigError("offspring", "must be >= 1");
    if (generations < 1) throw ConfigError("generations", "must be >= 1");
    if (!(p_crossover >= 0.0 && p_crossover <= 1.0)) throw ConfigError("p_crossover", "must be in [0, 1]");
    if (!(p_mutation >= 0.0 && p_mutation <= 1.0)) throw ConfigError("p_mutation", "must be in [0, 1]");
    for (auto [name, v] : {std::pair{"mutation_rates.deletion", rates.deletion},
                           std::pair{"mutation_rates.duplication", rates.duplication},
                           std::pair{"mutation_rates.rotation", rates.rotation},
                           std::pair{"mutation_rates.perturbation", rates.perturbation}})
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(name, "must be in [0, 1]");
    if (refine_every < 0) throw ConfigError("refine_every", "must be >= 0");
    if (refine_every > 0 && evaluator != "surrogate")
        throw ConfigError("refine_every", "refinement needs evaluator 'surrogate'");
    if (refine_batch < 1) throw ConfigError("refine_batch", "must be >= 1");
    if (n_mc < 1) throw ConfigError("n_mc", "must be >= 1");
    if (!(replay_ratio >= 0.0)) throw ConfigError("replay_ratio", "must be >= 0");
    if (finetune_epochs < 0) throw ConfigError("finetune_epochs", "must be >= 0");
    if (!std::isfinite(val_loss_max)) throw ConfigError("val_loss_max", "must be finite");
    if (workload.prefill_tokens < 1) throw ConfigError("workload.prefill_tokens", "must be >= 1");
    if (workload.decode_tokens < 1) throw ConfigError("workload.decode_tokens", "must be >= 1");
    if (evaluator != "oracle" && evaluator != "surrogate")
        throw ConfigError("evaluator", "must be 'oracle' or 'surrogate'");
    if (strategy != "nsga" && strategy != "random") throw ConfigError("strategy", "must be 'nsga' or 'random'");
    if (backend != "ring" && backend.rfind("analytic:", 0) != 0)
        throw ConfigError("backend", "must be 'analytic:<name>' or 'ring'");
    if (!ranges.well_formed()) throw ConfigError("ranges", "not well formed");
    if (global.d_model < 1) throw ConfigError("global.d_model", "must be >= 1");
    if (global.block_size < 1) throw ConfigError("global.block_size", "must be >= 1");
    if (global.max_layers < 1) throw ConfigError("global.max_layers", "must be >= 1");
    if (oracle_noise_sd < 0.0) throw ConfigError("oracle_noise_sd", "must be >= 0");
    if (bootstrap_corpus_size < 2) throw ConfigError("bootstrap_corpus_size", "must be >= 2");
    if (bootstrap_epochs < 0) throw ConfigError("bootstrap_epochs", "must be >= 0");
}

SearchConfig search_preset(const std::string& name) {
    SearchConfig c;
    if (name == "surrogate") {
        c.evaluator = "surrogate";
        c.refine_every = 5;
    } else if (name == "ring") {
        c.offspring = 12;
        c.generations = 20;
        c.val_loss_max = 3.5;
        c.workload = {512, 256};
        c.backend = "ring";
    } else {
        throw std::invalid_argument("unknown preset '" + name + "' (surrogate | ring)");
    }
    return c;
}

// ---------------------------------------------------------------------------
// Config JSON

nlohmann::json to_json(const SearchConfig& c) {
    nlohmann::json j{{"population", c.population},
                     {"offspring", c.offspring},
                     {"generations", c.generations},
                     {"p_crossover", c.p_crossover},
                     {"p_mutation", c.p_mutation},
                     {"mutation_rates",
                      {{"deletion", c.rates.deletion},
                       {"duplication", c.rates.duplication},
                       {"rotation", c.rates.rotation},
                       {"perturbation", c.rates.perturbation}}},
                     {"refine_every", c.refine_every},
                     {"refine_batch", c.refine_batch},
                     {"n_mc", c.n_mc},
                     {"replay_ratio", c.replay_ratio},
                     {"finetune_epochs", c.finetune_epochs},
                     {"val_loss_max", c.val_loss_max},
                     {"workload", {{"prefill_tokens", c.workload.prefill_tokens}, {"decode_tokens", c.workload.decode_tokens}}},
                     {"backend", c.backend},
                     {"evaluator", c.evaluator},
                     {"strategy", c.strategy},
                     {"ranges", to_json(c.ranges)},
                     {"global",
                      {{"d_model", c.global.d_model},
                       {"block_size", c.global.block_size},
                       {"max_layers", c.global.max_layers}}},
                     {"seed", c.seed},
                     {"oracle_seed", c.oracle_seed},
                     {"oracle_noise_sd", c.oracle_noise_sd},
                     {"surrogate_checkpoint", c.surrogate_checkpoint},
                     {"corpus_path", c.corpus_path},
                     {"bootstrap_corpus_size", c.bootstrap_corpus_size},
                     {"bootstrap_epochs", c.bootstrap_epochs}};
    if (c.substrate) j["substrate"] = to_json(*c.substrate);
    if (c.chip_grid) j["chip_grid"] = to_json(*c.chip_grid);
    if (c.hv_ref) j["hv_ref"] = *c.hv_ref;
    return j;
}

namespace {

class Reader {
public:
    Reader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "<root>" : prefix_, "must be an object");
    }

    template <class T>
    void get(const char* key, T& out, bool required = false) {
        seen_.insert(key);
        const std::string path = prefix_.empty() ? key : prefix_ + "." + key;
        if (!j_.contains(key)) {
            if (required) throw ConfigError(path, "missing required field");
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(path, "wrong type");
        }
    }

    const nlohmann::json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    std::string path(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path(it.key().c_str()), "unknown field");
    }

private:
    const nlohmann::json& j_;
    std::string prefix_;
    std::set<std::string> seen_;
};

}  // namespace

SearchConfig search_config_from_json(const nlohmann::json& j) {
    SearchConfig c;
    Reader r(j, "");
    r.get("population", c.population, true);
    r.get("offspring", c.offspring, true);
    r.get("generations", c.generations, true);
    r.get("p_crossover", c.p_crossover, true);
    r.get("p_mutation", c.p_mutation, true);
    if (const auto* m = r.sub("mutation_rates")) {
        Reader mr(*m, "mutation_rates");
        mr.get("deletion", c.rates.deletion);
        mr.get("duplication", c.rates.duplication);
        mr.get("rotation", c.rates.rotation);
        mr.get("perturbation", c.rates.perturbation);
        mr.reject_unknown();
    }
    r.get("refine_every", c.refine_every);
    r.get("refine_batch", c.refine_batch);
    r.get("n_mc", c.n_mc);
    r.get("replay_ratio", c.replay_ratio);
    r.get("finetune_epochs", c.finetune_epochs);
    r.get("val_loss_max", c.val_loss_max, true);
    if (const auto* w = r.sub("workload")) {
        Reader wr(*w, "workload");
        wr.get("prefill_tokens", c.workload.prefill_tokens);
        wr.get("decode_tokens", c.workload.decode_tokens);
        wr.reject_unknown();
    }
    r.get("backend", c.backend, true);
    r.get("evaluator", c.evaluator, true);
    r.get("strategy", c.strategy);
    if (const auto* s = r.sub("substrate")) {
        try {
            c.substrate = substrate_from_json(*s);
        } catch (const std::exception& e) {
            throw ConfigError(r.path("substrate"), e.what());
        }
    }
    if (const auto* g = r.sub("chip_grid")) {
        try {
            c.chip_grid = chip_grid_from_json(*g);
        } catch (const std::exception& e) {
            throw ConfigError(r.path("chip_grid"), e.what());
        }
    }
    if (const auto* rg = r.sub("ranges")) {
        try {
            c.ranges = ranges_from_json(*rg);
        } catch (const std::exception& e) {
            throw ConfigError("ranges", e.what());
        }
    }
    if (const auto* g = r.sub("global")) {
        Reader gr(*g, "global");
        gr.get("d_model", c.global.d_model);
        gr.get("block_size", c.global.block_size);
        gr.get("max_layers", c.global.max_layers);
        gr.reject_unknown();
    }
    r.get("seed", c.seed);
    r.get("oracle_seed", c.oracle_seed);
    r.get("oracle_noise_sd", c.oracle_noise_sd);
    r.get("surrogate_checkpoint", c.surrogate_checkpoint);
    r.get("corpus_path", c.corpus_path);
    r.get("bootstrap_corpus_size", c.bootstrap_corpus_size);
    r.get("bootstrap_epochs", c.bootstrap_epochs);
    if (j.contains("hv_ref")) {
        std::array<double, 2> ref{};
        r.get("hv_ref", ref);
        c.hv_ref = ref;
    }
    r.reject_unknown();
    c.check();
    return c;
}

// ---------------------------------------------------------------------------

double max_params_m(const SpaceRanges& r, const GlobalConfig& g) {
    LayerGene l{true, true, r.n_h.last(), r.n_h.last(), r.d_qk.last(), r.d_v.last(), r.d_mlp.last()};
    return static_cast<double>(layer_weight_count(l, g.d_model)) * g.max_layers / 1e6;
}

Acquisition acquisition_select(const std::vector<Individual>& pop, const EncoderSurrogate& s, int b, int n_mc,
                               std::uint64_t seed) {
    Acquisition a;
    for (const auto& ind : pop) a.predictions.push_back(mc_predict(s, s.features(ind.genome), n_mc, mix_seed(seed, ind.id)));
    std::vector<ObjectiveVector> objs;
    for (const auto& ind : pop) objs.push_back(ind.obj);
    const auto fronts = fast_nondominated_sort(objs);
    std::vector<std::size_t> first = fronts.empty() ? std::vector<std::size_t>{} : fronts.front();
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < pop.size(); ++i)
        if (!std::binary_search(first.begin(), first.end(), i)) rest.push_back(i);
    std::stable_sort(first.begin(), first.end(),
                     [&](std::size_t x, std::size_t y) { return a.predictions[x].mean < a.predictions[y].mean; });
    std::stable_sort(rest.begin(), rest.end(),
                     [&](std::size_t x, std::size_t y) { return a.predictions[x].stddev > a.predictions[y].stddev; });
    const std::size_t n_exp = std::min(static_cast<std::size_t>(b / 2), first.size());
    const std::size_t n_explore = std::min(static_cast<std::size_t>(b) - n_exp, rest.size());
    a.exploit.assign(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(n_exp));
    a.explore.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_explore));
    return a;
}

SurrogateContext make_surrogate_context(const SearchConfig& cfg) {
    SurrogateContext ctx;
    if (!cfg.surrogate_checkpoint.empty()) {
        ctx.baseline = EncoderSurrogate::from_json(load_checkpoint(cfg.surrogate_checkpoint));
        if (!cfg.corpus_path.empty()) {
            auto c = load_corpus(cfg.corpus_path);
            for (auto& r : c.rows)
                if (std::isfinite(r.val_loss)) ctx.corpus.push_back(std::move(r));
        }
        return ctx;
    }
    LabeledCorpus c = cfg.corpus_path.empty()
                          ? make_synthetic_corpus(static_cast<std::size_t>(cfg.bootstrap_corpus_size),
                                                  mix_seed(cfg.oracle_seed, 0xB007ULL), cfg.ranges, cfg.global)
                          : load_corpus(cfg.corpus_path);
    if (!cfg.corpus_path.empty()) c.split(mix_seed(cfg.seed, 0x5B17ULL));
    TrainConfig tc;
    tc.epochs = cfg.bootstrap_epochs;
    tc.seed = mix_seed(cfg.seed, 0x7A1AULL);
    ctx.baseline = train_encoder(c, EncoderHyper{}, tc);
    for (std::size_t i : c.train) ctx.corpus.push_back(c.rows[i]);
    return ctx;
}

namespace {

std::unique_ptr<HardwareBackend> build_backend(const SearchConfig& cfg) {
    if (cfg.backend == "ring") return std::make_unique<RingBackend>(cfg.chip_grid.value_or(ChipGrid{}));
    if (cfg.substrate) return std::make_unique<SubstrateBackend>(*cfg.substrate);
    try {
        return make_backend(cfg.backend);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("backend", e.what());
    }
}

// Keeps the non-dominated (val_loss, params) set of feasible points.
void offer_2d(std::vector<std::array<double, 2>>& front, std::array<double, 2> p) {
    for (const auto& q : front)
        if (q[0] <= p[0] && q[1] <= p[1]) return;  // dominated or duplicate
    std::erase_if(front, [&](const std::array<double, 2>& q) { return p[0] <= q[0] && p[1] <= q[1]; });
    front.push_back(p);
}

std::vector<ObjectiveVector> objectives(const std::vector<Individual>& v) {
    std::vector<ObjectiveVector> out;
    out.reserve(v.size());
    for (const auto& i : v) out.push_back(i.obj);
    return out;
}

}  // namespace

SearchResult run_search(const SearchConfig& cfg, const SurrogateContext* ctx_in) {
    cfg.check();
    SearchResult res;
    const auto backend = build_backend(cfg);
    res.backend = backend->name();
    res.hv_ref = cfg.hv_ref.value_or(std::array<double, 2>{cfg.val_loss_max, max_params_m(cfg.ranges, cfg.global)});

    const bool use_surrogate = cfg.evaluator == "surrogate";
    std::optional<SurrogateContext> owned;
    const SurrogateContext* ctx = ctx_in;
    if (use_surrogate && !ctx) {
        owned = make_surrogate_context(cfg);
        ctx = &*owned;
    }
    EncoderSurrogate working;
    if (use_surrogate) working = ctx->baseline;
    std::vector<LabeledArch> buffer;

    Rng rng(cfg.seed);
    std::uint64_t next_id = 1;
    std::vector<std::array<double, 2>> front2d;
    std::unordered_set<std::uint64_t> seen;

    auto evaluate = [&](ArchGenome g, int born, std::string lineage, std::array<std::uint64_t, 2> parents) {
        Individual ind;
        ind.id = next_id++;
        ind.born = born;
        ind.lineage = std::move(lineage);
        ind.parents = parents;
        ind.params_m = static_cast<double>(count_params(g, 0)) / 1e6;
        const double y = use_surrogate ? working.predict(g) : synth_oracle(g, cfg.oracle_seed, cfg.oracle_noise_sd);
        HwMetrics hw;
        try {
            hw = backend->evaluate(g, cfg.workload);
        } catch (const std::exception&) {
            hw = HwMetrics::infeasible();
        }
        ind.obj = {y, hw.e_tok_uj, hw.ttft_ms, hw.tpot_ms, false, 0.0};
        if (!hw.feasible || !std::isfinite(y)) {
            ind.obj.violation = kInf;
        } else {
            ind.obj.violation = std::max(0.0, y - cfg.val_loss_max);
            ind.obj.feasible = y < cfg.val_loss_max;
        }
        seen.insert(genome_hash(g));
        ind.genome = std::move(g);
        res.history.push_back(ind);
        return ind;
    };

    std::vector<Individual> pop;
    for (int i = 0; i < cfg.population; ++i)
        pop.push_back(evaluate(random_genome(cfg.ranges, rng.next_u64(), cfg.global), -1, "init", {0, 0}));

    ParetoArchive archive;
    for (int t = 0; t < cfg.generations; ++t) {
        std::vector<Individual> offspring;
        if (cfg.strategy == "random") {
            while (static_cast<int>(offspring.size()) < cfg.offspring)
                offspring.push_back(evaluate(random_genome(cfg.ranges, rng.next_u64(), cfg.global), t, "random", {0, 0}));
        } else {
            const auto objs = objectives(pop);
            const auto rc = rank_and_crowding(objs);
            const auto pool = tournament_select(objs, rc.crowding, pop.size(), rng);
            while (static_cast<int>(offspring.size()) < cfg.offspring) {
                ArchGenome c;
                std::string lineage;
                std::array<std::uint64_t, 2> parents{};
                for (int attempt = 0; attempt < kBreedAttempts; ++attempt) {
                    const Individual& p1 = pop[pool[rng.index(pool.size())]];
                    const Individual& p2 = pop[pool[rng.index(pool.size())]];
                    parents = {p1.id, p2.id};
                    if (rng.bernoulli(cfg.p_crossover)) {
                        c = crossover(p1.genome, p2.genome, cfg.ranges, rng);
                        lineage = "x";
                    } else {
                        c = p1.genome;
                        lineage = "copy";
                    }
                    if (rng.bernoulli(cfg.p_mutation)) c = mutate(std::move(c), cfg.ranges, cfg.rates, rng, &lineage);
                    c = repair(std::move(c), cfg.ranges);
                    if (!seen.count(genome_hash(c))) break;
                }
                offspring.push_back(evaluate(std::move(c), t, lineage, parents));
            }
        }

        std::vector<Individual> merged = pop;
        merged.insert(merged.end(), offspring.begin(), offspring.end());
        const auto keep = nsga_survival(objectives(merged), static_cast<std::size_t>(cfg.population));
        std::vector<Individual> next;
        for (std::size_t i : keep) next.push_back(merged[i]);
        pop = std::move(next);

        archive.update(merged);
        for (const auto& ind : merged)
            if (ind.obj.feasible) offer_2d(front2d, {ind.obj.val_loss, ind.params_m});

        GenerationStats st;
        st.generation = t;
        st.evaluations = res.history.size();
        st.best_val_loss = kInf;
        for (const auto& ind : pop)
            if (ind.obj.feasible) {
                ++st.feasible;
                st.best_val_loss = std::min(st.best_val_loss, ind.obj.val_loss);
            }

        if (cfg.refine_every > 0 && t > 0 && t % cfg.refine_every == 0) {
            RefinementEvent ev;
            ev.generation = t;
            const auto acq = acquisition_select(pop, working, cfg.refine_batch, cfg.n_mc, mix_seed(cfg.seed, 0xAC0000ULL + t));
            std::vector<std::size_t> picked = acq.exploit;
            picked.insert(picked.end(), acq.explore.begin(), acq.explore.end());
            for (std::size_t i : acq.exploit) ev.exploit_ids.push_back(pop[i].id);
            for (std::size_t i : acq.explore) ev.explore_ids.push_back(pop[i].id);
            double err = 0.0;
            std::size_t n_ok = 0;
            for (std::size_t i : picked) {
                const double y = synth_oracle(pop[i].genome, cfg.oracle_seed, cfg.oracle_noise_sd);
                ev.labels.push_back(y);
                if (!std::isfinite(y)) {
                    ++ev.dropped;
                    continue;
                }
                err += std::abs(working.predict(pop[i].genome) - y);
                ++n_ok;
                buffer.push_back({pop[i].genome, y});
            }
            ev.mae_before = n_ok ? err / static_cast<double>(n_ok) : 0.0;
            ev.buffer_size = buffer.size();
            if (!buffer.empty()) {
                FineTuneConfig ft;
                ft.replay_ratio = cfg.replay_ratio;
                ft.epochs = cfg.finetune_epochs;
                ft.seed = mix_seed(cfg.seed, 0xF7000ULL + t);
                working = fine_tune(ctx->baseline, buffer, ctx->corpus, ft);
                err = 0.0;
                for (const auto& row : buffer) err += std::abs(working.predict(row.genome) - row.val_loss);
                ev.mae_after = err / static_cast<double>(buffer.size());
            }
            res.events.push_back(std::move(ev));
            st.refined = true;
        }

        st.archive_size = archive.size();
        st.hypervolume = hypervolume_2d(front2d, res.hv_ref).value;
        res.stats.push_back(st);
        res.fronts_2d.push_back(front2d);
    }
    res.archive = archive.members();
    res.population = std::move(pop);
    return res;
}

// ---------------------------------------------------------------------------

AblationResult ablation_suite(const SearchConfig& base, const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw std::invalid_argument("ablation_suite: at least two seeds are required");
    struct Recipe {
        const char* name;
        const char* strategy;
        AttentionVariant variant;
    };
    const Recipe recipes[] = {{"NSGA+IHA", "nsga", AttentionVariant::iha},
                              {"Random+IHA", "random", AttentionVariant::iha},
                              {"NSGA+GQA", "nsga", AttentionVariant::gqa}};
    std::vector<std::vector<std::vector<std::vector<std::array<double, 2>>>>> fronts;  // [recipe][seed][gen]
    std::array<double, 2> worst{0.0, 0.0};
    for (const auto& rc : recipes) {
        auto& per_seed = fronts.emplace_back();
        for (std::uint64_t s : seeds) {
            SearchConfig cfg = base;
            cfg.seed = s;
            cfg.strategy = rc.strategy;
            cfg.ranges.variant = rc.variant;
            auto r = run_search(cfg);
            for (const auto& f : r.fronts_2d)
                for (const auto& p : f) {
                    worst[0] = std::max(worst[0], p[0]);
                    worst[1] = std::max(worst[1], p[1]);
                }
            per_seed.push_back(std::move(r.fronts_2d));
        }
    }
    AblationResult out;
    out.ref = {worst[0] * 1.1, worst[1] * 1.1};
    for (std::size_t k = 0; k < fronts.size(); ++k) {
        AblationCurve c;
        c.recipe = recipes[k].name;
        c.seeds = seeds;
        for (const auto& per_gen : fronts[k]) {
            std::vector<double> hv;
            for (const auto& f : per_gen) hv.push_back(hypervolume_2d(f, out.ref).value);
            c.hv.push_back(std::move(hv));
        }
        const std::size_t gens = c.hv.front().size();
        for (std::size_t g = 0; g < gens; ++g) {
            double m = 0.0;
            for (const auto& h : c.hv) m += h[g];
            m /= static_cast<double>(c.hv.size());
            double v = 0.0;
            for (const auto& h : c.hv) v += (h[g] - m) * (h[g] - m);
            c.mean.push_back(m);
            c.stddev.push_back(std::sqrt(v / static_cast<double>(c.hv.size() - 1)));
        }
        std::vector<double> finals;
        for (const auto& h : c.hv) finals.push_back(h.back());
        std::sort(finals.begin(), finals.end());
        const std::size_t n = finals.size();
        c.median_final = n % 2 ? finals[n / 2] : 0.5 * (finals[n / 2 - 1] + finals[n / 2]);
        out.curves.push_back(std::move(c));
    }
    return out;
}

nlohmann::json to_json(const AblationResult& a) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : a.curves)
        curves.push_back({{"recipe", c.recipe},
                          {"seeds", c.seeds},
                          {"hypervolume", c.hv},
                          {"mean", c.mean},
                          {"std", c.stddev},
                          {"median_final", c.median_final}});
    return {{"reference", a.ref}, {"axes", {"val_loss", "params_millions"}}, {"curves", curves}};
}

}  // namespace ihanas
