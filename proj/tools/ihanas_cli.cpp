// ihanas: command-line front end.
// Exit codes: 0 ok, 2 bad input or configuration, 3 runtime / backend failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "artifacts.hpp"
#include "ihanas/genome.hpp"
#include "ihanas/hwcost.hpp"
#include "ihanas/iha_ref.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/search.hpp"
#include "ihanas/surrogate.hpp"

namespace fs = std::filesystem;
using namespace ihanas;

namespace {

constexpr int kOk = 0, kInput = 2, kRuntime = 3;

struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

nlohmann::json read_json(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw InputError(std::string(what) + ": no such file '" + path + "'");
    try {
        return nlohmann::json::parse(tools::read_text(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(std::string(what) + ": " + path + ": " + e.what());
    }
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path)) throw InputError(std::string(what) + ": no such file '" + path + "'");
}

// Manifests are never clobbered silently.
void prepare_out(const fs::path& out, bool force) {
    if (fs::exists(out / "manifest.json") && !force)
        throw InputError("refusing to overwrite " + (out / "manifest.json").string() + " (use --force)");
    fs::create_directories(out);
}

struct RunOptions {
    std::string config, preset, out, backend, evaluator;
    std::optional<std::uint64_t> seed;
    std::optional<int> generations;
    bool force = false;
};

SearchConfig load_search_config(const RunOptions& o) {
    if (o.config.empty() == o.preset.empty()) throw InputError("give exactly one of --config or --preset");
    SearchConfig c;
    if (!o.config.empty()) {
        c = search_config_from_json(read_json(o.config, "config"));
    } else {
        try {
            c = search_preset(o.preset);
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
    }
    if (o.seed) c.seed = *o.seed;
    if (o.generations) c.generations = *o.generations;
    if (!o.backend.empty()) c.backend = o.backend;
    if (!o.evaluator.empty()) c.evaluator = o.evaluator;
    c.check();
    return c;
}

void add_run_flags(CLI::App* sub, RunOptions& o) {
    sub->add_option("--config", o.config, "search configuration (JSON)");
    sub->add_option("--preset", o.preset, "built-in configuration: surrogate | ring");
    sub->add_option("--seed", o.seed, "override the configured seed");
    sub->add_option("--generations", o.generations, "override the configured generation count");
    sub->add_option("--backend", o.backend, "analytic:NAME | ring");
    sub->add_option("--evaluator", o.evaluator, "oracle | surrogate");
    sub->add_option("--out", o.out, "output directory")->required();
    sub->add_flag("--force", o.force, "overwrite an existing run");
}

int cmd_search(const RunOptions& o, bool quiet) {
    const SearchConfig cfg = load_search_config(o);
    const fs::path out = o.out;
    prepare_out(out, o.force);
    const auto r = run_search(cfg);

    tools::write_text(out / "generations.csv", tools::generations_csv(r));
    tools::write_text(out / "archive.csv", tools::archive_csv(r));
    tools::write_text(out / "events.jsonl", tools::events_jsonl(r));
    tools::write_text(out / "front.svg", tools::front_svg(r.archive, "Archive: " + r.backend));
    fs::remove_all(out / "genomes");
    fs::create_directories(out / "genomes");
    for (const auto& i : r.archive)
        save_genome_file(i.genome, (out / "genomes" / (std::to_string(i.id) + ".json")).string());

    nlohmann::json m{{"command", "search"},
                     {"config", to_json(cfg)},
                     {"backend", r.backend},
                     {"hv_ref", r.hv_ref},
                     {"evaluations", r.history.size()},
                     {"archive_size", r.archive.size()},
                     {"refinements", r.events.size()},
                     {"final_hypervolume", r.stats.empty() ? 0.0 : r.stats.back().hypervolume},
                     {"files", {"generations.csv", "archive.csv", "events.jsonl", "front.svg", "genomes/"}}};
    tools::write_text(out / "manifest.json", m.dump(2) + "\n");

    if (!quiet) {
        std::printf("backend %s, %zu evaluations, archive %zu, hypervolume %.6g\n", r.backend.c_str(),
                    r.history.size(), r.archive.size(), m["final_hypervolume"].get<double>());
        std::printf("wrote %s\n", out.string().c_str());
    }
    return kOk;
}

int cmd_ablate(const RunOptions& o, const std::vector<std::uint64_t>& seeds, bool quiet) {
    const SearchConfig cfg = load_search_config(o);
    if (seeds.size() < 2) throw InputError("--seeds: need at least two seeds");
    const fs::path out = o.out;
    prepare_out(out, o.force);
    const auto a = ablation_suite(cfg, seeds);
    tools::write_text(out / "ablation.json", to_json(a).dump(2) + "\n");
    tools::write_text(out / "ablation.csv", tools::ablation_csv(a));
    tools::write_text(out / "ablation.svg", tools::ablation_svg(a));
    nlohmann::json m{{"command", "ablate"},
                     {"config", to_json(cfg)},
                     {"seeds", seeds},
                     {"files", {"ablation.json", "ablation.csv", "ablation.svg"}}};
    tools::write_text(out / "manifest.json", m.dump(2) + "\n");
    if (!quiet)
        for (const auto& c : a.curves) std::printf("%-12s median final HV %.6g\n", c.recipe.c_str(), c.median_final);
    return kOk;
}

struct PackOptions {
    std::string genome, grid, out;
    int prefill = 512, decode = 256;
    std::size_t top_k = 3;
};

int cmd_pack(const PackOptions& o, bool quiet) {
    require_file(o.genome, "genome");
    ArchGenome g;
    try {
        g = load_genome_file(o.genome);
    } catch (const std::exception& e) {
        throw InputError(std::string("genome: ") + e.what());
    }
    const auto bad = validate(g, SpaceRanges{});
    if (!bad.empty()) {
        std::string msg = "genome: invalid";
        for (const auto& v : bad) msg += "\n  layer " + std::to_string(v.layer) + " " + v.field + ": " + v.rule;
        throw InputError(msg);
    }
    ChipGrid grid;
    if (!o.grid.empty()) {
        try {
            grid = chip_grid_from_json(read_json(o.grid, "chip grid"));
        } catch (const InputError&) {
            throw;
        } catch (const std::exception& e) {
            throw InputError(std::string("chip grid: ") + e.what());
        }
    }
    if (o.prefill < 1 || o.decode < 1) throw InputError("--prefill and --decode must be >= 1");
    const Workload wl{o.prefill, o.decode};
    const auto r = chip_grid_search(g, wl, grid, o.top_k);

    if (!quiet) {
        std::printf("%zu active layers, %.3f M layer weights, workload %d+%d tokens\n", static_cast<std::size_t>(g.active_layers()),
                    static_cast<double>(count_params(g, 0)) / 1e6, wl.prefill_tokens, wl.decode_tokens);
        std::printf("\ngrid  n_mac  w_core_kb  n_chips_max  feasible\n");
        for (const auto& c : r.configs)
            std::printf("%4zu  %5d  %9d  %11d  %s\n", c.grid_index, c.n_mac, c.w_core_kb, c.n_chips_max,
                        c.feasible ? "yes" : "no");
        std::printf("\nrank  n_mac  w_core_kb  cores  n_chips  TTFT_ms     TPOT_ms     E_tok_uJ    area\n");
        for (std::size_t k = 0; k < r.top.size(); ++k) {
            const auto& t = r.top[k];
            std::printf("%4zu  %5d  %9d  %5lld  %7d  %-10.4g  %-10.4g  %-10.4g  %.4g\n", k + 1, t.plan.chip.n_mac,
                        t.plan.chip.w_core_kb, static_cast<long long>(t.plan.chip.cores()), t.plan.n_chips(),
                        t.metrics.ttft_ms, t.metrics.tpot_ms, t.metrics.e_tok_uj, t.area_total);
        }
    }
    if (r.top.empty()) std::fprintf(stderr, "warning: no grid configuration can hold this genome\n");

    if (!o.out.empty()) {
        const fs::path out = o.out;
        fs::create_directories(out);
        tools::write_text(out / "grid.csv", tools::grid_csv(r));
        for (std::size_t k = 0; k < r.top.size(); ++k)
            tools::write_text(out / ("ring_plan_" + std::to_string(k + 1) + ".csv"), ring_plan_csv(r.top[k].plan));
    }
    return kOk;
}

struct SurrogateOptions {
    std::string corpus, ckpt, curve, model = "encoder";
    std::vector<std::string> genomes;
    int epochs = 200;
    std::uint64_t seed = 100;
    std::optional<std::uint64_t> split_seed;
    std::uint64_t oracle_seed = 0;
    double noise_sd = 0.02;
    int n_mc = 10;
};

LabeledCorpus load_split_corpus(const SurrogateOptions& o) {
    require_file(o.corpus, "corpus");
    LabeledCorpus c;
    try {
        c = load_corpus(o.corpus);
    } catch (const std::invalid_argument& e) {
        throw InputError(std::string("corpus: ") + e.what());
    }
    c.split(o.split_seed.value_or(mix_seed(o.seed, 0x5B17ULL)));
    if (c.test.size() < 2)
        throw InputError("corpus: need at least 2 held-out rows, found " + std::to_string(c.test.size()));
    return c;
}

int cmd_surrogate_train(const SurrogateOptions& o, bool quiet) {
    const auto c = load_split_corpus(o);
    TrainConfig tc;
    tc.epochs = o.epochs;
    tc.seed = o.seed;
    TrainReport rep;
    nlohmann::json ckpt;
    std::size_t n_params = 0;
    if (o.model == "encoder") {
        const auto s = train_encoder(c, EncoderHyper{}, tc, &rep);
        ckpt = s.to_json();
        n_params = s.param_count();
    } else if (o.model == "mlp") {
        const auto s = mlp_baseline_train(c, tc, 128, 40, &rep);
        ckpt = s.to_json();
        n_params = s.param_count();
    } else {
        throw InputError("--model: must be 'encoder' or 'mlp'");
    }
    save_checkpoint(ckpt, o.ckpt);
    std::string curve = "epoch,train_l1,test_l1\n";
    curve += "0," + tools::num(rep.initial_train_l1) + "," + tools::num(rep.initial_test_l1) + "\n";
    for (std::size_t e = 0; e < rep.train_l1.size(); ++e)
        curve += std::to_string(e + 1) + "," + tools::num(rep.train_l1[e]) + "," + tools::num(rep.test_l1[e]) + "\n";
    tools::write_text(o.curve.empty() ? o.ckpt + ".curve.csv" : o.curve, curve);
    if (!quiet) {
        std::printf("%s surrogate, %zu parameters\n", o.model.c_str(), n_params);
        std::printf("rows: %zu train, %zu test\n", c.train.size(), c.test.size());
        std::printf("train L1 %.6g -> %.6g, best test L1 %.6g (epoch %d)\n", rep.initial_train_l1,
                    rep.train_l1.empty() ? rep.initial_train_l1 : rep.train_l1.back(), rep.best_test_l1,
                    rep.best_epoch + 1);
    }
    return kOk;
}

int cmd_surrogate_eval(const SurrogateOptions& o) {
    const auto c = load_split_corpus(o);
    std::vector<double> pred, truth;
    if (o.model == "oracle") {
        // labels straight from the synthetic oracle; a sanity baseline
        for (std::size_t i : c.test) pred.push_back(synth_oracle(c.rows[i].genome, o.oracle_seed, o.noise_sd));
    } else {
        const auto j = read_json(o.ckpt, "checkpoint");
        const std::string kind = j.value("kind", "");
        if (kind == "mlp") {
            const auto s = MlpSurrogate::from_json(j);
            for (std::size_t i : c.test) pred.push_back(s.predict(c.rows[i].genome));
        } else {
            const auto s = EncoderSurrogate::from_json(j);
            for (std::size_t i : c.test) pred.push_back(s.predict(c.rows[i].genome));
        }
    }
    for (std::size_t i : c.test) truth.push_back(c.rows[i].val_loss);
    auto j = to_json(evaluate_ranking(pred, truth));
    j["n_test"] = c.test.size();
    std::cout << j.dump(2) << "\n";
    return kOk;
}

int cmd_surrogate_mc(const SurrogateOptions& o) {
    const auto s = EncoderSurrogate::from_json(read_json(o.ckpt, "checkpoint"));
    if (o.genomes.empty()) throw InputError("--genome: give at least one genome file");
    if (o.n_mc < 1) throw InputError("--n-mc: must be >= 1");
    std::printf("genome,mean,std\n");
    for (const auto& path : o.genomes) {
        require_file(path, "genome");
        const auto p = mc_predict(s, s.features(load_genome_file(path)), o.n_mc, o.seed);
        std::printf("%s,%s,%s\n", path.c_str(), tools::num(p.mean).c_str(), tools::num(p.stddev).c_str());
    }
    return kOk;
}

int cmd_count(int d_model) {
    if (d_model < 1) throw InputError("--d-model: must be >= 1");
    const SpaceRanges r;
    const auto gqa = count_attention_configs(AttentionVariant::gqa, d_model, r);
    const auto iha = count_attention_configs(AttentionVariant::iha, d_model, r);
    if (gqa > 0)
        std::printf("GQA: %lld, IHA: %lld, ratio ≈ %.1f×\n", static_cast<long long>(gqa),
                    static_cast<long long>(iha), static_cast<double>(iha) / static_cast<double>(gqa));
    else
        std::printf("GQA: 0, IHA: %lld\n", static_cast<long long>(iha));
    return kOk;
}

int cmd_check_iha(std::uint64_t seed, int draws) {
    if (draws < 1) throw InputError("--draws: must be >= 1");
    bool all = true;
    for (const auto& c : run_iha_checks(seed, draws)) {
        std::printf("%-4s %-40s max error %.3g\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.max_error);
        all = all && c.passed;
    }
    return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous-attention architecture search toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "only print errors and requested data");

    RunOptions run;
    auto* search = app.add_subcommand("search", "run the evolutionary search and write run artifacts");
    add_run_flags(search, run);

    auto* ablate = app.add_subcommand("ablate", "NSGA+IHA vs Random+IHA vs NSGA+GQA over several seeds");
    add_run_flags(ablate, run);
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    ablate->add_option("--seeds", seeds, "seed list")->delimiter(',');

    PackOptions pack;
    auto* pk = app.add_subcommand("pack", "place one genome on a ring of chips over the chip grid");
    pk->add_option("--genome", pack.genome, "genome JSON")->required();
    pk->add_option("--chip-grid", pack.grid, "chip grid JSON (default: built-in 45-point grid)");
    pk->add_option("--prefill", pack.prefill, "prefill tokens");
    pk->add_option("--decode", pack.decode, "decode tokens");
    pk->add_option("--top-k", pack.top_k, "rows in the ranked table");
    pk->add_option("--out", pack.out, "directory for grid.csv and ring_plan_<rank>.csv");

    SurrogateOptions so;
    auto* sur = app.add_subcommand("surrogate", "train, evaluate or query a surrogate");
    sur->require_subcommand(1);
    auto* st = sur->add_subcommand("train", "train on a corpus, write checkpoint and learning curve");
    st->add_option("--corpus", so.corpus, "corpus (JSON Lines)")->required();
    st->add_option("--ckpt", so.ckpt, "checkpoint to write")->required();
    st->add_option("--curve", so.curve, "learning-curve CSV (default: <ckpt>.curve.csv)");
    st->add_option("--model", so.model, "encoder | mlp");
    st->add_option("--epochs", so.epochs, "training epochs");
    st->add_option("--seed", so.seed, "initialisation and shuffling seed");
    st->add_option("--split-seed", so.split_seed, "train/test split seed");
    auto* se = sur->add_subcommand("eval", "ranking metrics on the held-out split");
    se->add_option("--corpus", so.corpus, "corpus (JSON Lines)")->required();
    se->add_option("--ckpt", so.ckpt, "checkpoint");
    se->add_option("--model", so.model, "checkpoint | oracle");
    se->add_option("--seed", so.seed, "seed used at training time (selects the split)");
    se->add_option("--split-seed", so.split_seed, "train/test split seed");
    se->add_option("--oracle-seed", so.oracle_seed, "noise seed for --model oracle");
    se->add_option("--noise-sd", so.noise_sd, "noise level for --model oracle");
    auto* sm = sur->add_subcommand("mc", "MC-dropout mean and std for genomes");
    sm->add_option("--ckpt", so.ckpt, "encoder checkpoint")->required();
    sm->add_option("--genome", so.genomes, "genome JSON (repeatable)")->required();
    sm->add_option("--n-mc", so.n_mc, "dropout passes");
    sm->add_option("--seed", so.seed, "dropout seed");

    std::size_t corpus_n = 256;
    std::uint64_t corpus_seed = 0;
    std::string corpus_out;
    auto* cg = app.add_subcommand("corpus", "synthetic corpora")->require_subcommand(1);
    auto* cgen = cg->add_subcommand("gen", "label random genomes with the synthetic oracle");
    cgen->add_option("--n", corpus_n, "rows");
    cgen->add_option("--seed", corpus_seed, "genome and noise seed");
    cgen->add_option("--out", corpus_out, "corpus file")->required();

    int d_model = 768;
    auto* cnt = app.add_subcommand("count", "attention configuration counts per layer");
    cnt->add_option("--d-model", d_model, "model width");

    std::uint64_t iha_seed = 1;
    int draws = 100;
    auto* chk = app.add_subcommand("check-iha", "run the reference attention property suite");
    chk->add_option("--seed", iha_seed, "draw seed");
    chk->add_option("--draws", draws, "random draws per property");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kInput;
    }

    try {
        if (*search) return cmd_search(run, quiet);
        if (*ablate) return cmd_ablate(run, seeds, quiet);
        if (*pk) return cmd_pack(pack, quiet);
        if (*st) return cmd_surrogate_train(so, quiet);
        if (*se) {
            if (so.model != "oracle" && so.ckpt.empty()) throw InputError("--ckpt: required unless --model oracle");
            return cmd_surrogate_eval(so);
        }
        if (*sm) return cmd_surrogate_mc(so);
        if (*cgen) {
            if (corpus_n < 2) throw InputError("--n: must be >= 2");
            save_corpus(make_synthetic_corpus(corpus_n, corpus_seed), corpus_out);
            if (!quiet) std::printf("wrote %zu rows to %s\n", corpus_n, corpus_out.c_str());
            return kOk;
        }
        if (*cnt) return cmd_count(d_model);
        if (*chk) return cmd_check_iha(iha_seed, draws);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kInput;
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kRuntime;
    }
    return kOk;
}
