#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ihanas/genome.hpp"
#include "ihanas/hwcost.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/rng.hpp"
#include "ihanas/surrogate.hpp"

namespace ihanas {

/// Malformed configuration; `field` names the offending key path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Per-operator firing probabilities, applied inside the p_m gate.
struct MutationRates {
    double deletion = 0.1;
    double duplication = 0.1;
    double rotation = 0.05;
    double perturbation = 0.4;
};

struct SearchConfig {
    int population = 24;
    int offspring = 48;
    int generations = 40;
    double p_crossover = 0.6;
    double p_mutation = 0.3;
    MutationRates rates;

    int refine_every = 0;  // K; 0 disables refinement
    int refine_batch = 8;
    int n_mc = 10;
    double replay_ratio = 5.0;
    int finetune_epochs = 10;

    double val_loss_max = 3.8;  // feasible iff val_loss < val_loss_max
    Workload workload;
    std::string backend = "analytic:gemmini";
    std::optional<SubstrateSpec> substrate;  // overrides the preset named by backend
    std::optional<ChipGrid> chip_grid;       // for backend "ring"
    std::string evaluator = "oracle";        // oracle | surrogate
    std::string strategy = "nsga";           // nsga | random

    SpaceRanges ranges;
    GlobalConfig global;
    std::uint64_t seed = 0;
    std::uint64_t oracle_seed = 7;
    double oracle_noise_sd = 0.02;

    // surrogate evaluator inputs; empty paths bootstrap from a synthetic corpus
    std::string surrogate_checkpoint;
    std::string corpus_path;
    int bootstrap_corpus_size = 256;
    int bootstrap_epochs = 30;

    // hypervolume reference in (val_loss, params in millions); default is
    // (val_loss_max, largest model of the space)
    std::optional<std::array<double, 2>> hv_ref;

    /// Throws ConfigError naming the first bad field.
    void check() const;
};

/// "surrogate" (N=24, lambda=48, G=40, K=5, loss < 3.8, 256/256) or
/// "ring" (N=24, lambda=12, G=20, loss < 3.5, 512/256, ring backend).
SearchConfig search_preset(const std::string& name);

nlohmann::json to_json(const SearchConfig& c);
/// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
SearchConfig search_config_from_json(const nlohmann::json& j);

struct Individual {
    std::uint64_t id = 0;
    ArchGenome genome;
    ObjectiveVector obj;
    double params_m = 0.0;  // layer weights in millions (no embeddings)
    int born = 0;           // generation; -1 for the initial population
    std::string lineage;    // e.g. "init", "x+del+pert", "copy", "random"
    std::array<std::uint64_t, 2> parents{0, 0};
};

/// Feasible, mutually non-dominated individuals over the whole run.
class ParetoArchive {
public:
    /// Offers every feasible individual; ids already present are ignored.
    void update(const std::vector<Individual>& candidates);
    const std::vector<Individual>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }

private:
    std::vector<Individual> members_;
};

/// Fronts of the fast non-dominated sort under constraint-domination, each in
/// input order.
std::vector<std::vector<std::size_t>> fast_nondominated_sort(const std::vector<ObjectiveVector>& pts);

/// NSGA-II environmental selection; returns indices into `pool`.
std::vector<std::size_t> nsga_survival(const std::vector<ObjectiveVector>& pool, std::size_t n);

/// Rank (front index) and within-front crowding distance of every point.
struct RankCrowding {
    std::vector<std::size_t> rank;
    std::vector<double> crowding;
};
RankCrowding rank_and_crowding(const std::vector<ObjectiveVector>& pts);

/// Binary tournament by constraint-domination, then crowding, then draw
/// order. Returns `pool_size` indices.
std::vector<std::size_t> tournament_select(const std::vector<ObjectiveVector>& pop, const std::vector<double>& crowding,
                                           std::size_t pool_size, Rng& rng);

/// Layers [0, cut) of p1 followed by [cut, L) of p2; global config from p1. No repair.
ArchGenome crossover_at(const ArchGenome& p1, const ArchGenome& p2, std::size_t cut);
/// cut ~ U[1, L-1], then repair.
ArchGenome crossover(const ArchGenome& p1, const ArchGenome& p2, const SpaceRanges& r, Rng& rng);

// Single mutation operators (no repair).
void mutate_delete(ArchGenome& g, std::size_t slot);
void mutate_duplicate(ArchGenome& g, std::size_t from, std::size_t to);
/// Cyclic left shift of the active-layer sequence by `shift`; masked slots stay in place.
void mutate_rotate(ArchGenome& g, std::size_t shift);
void mutate_reflect(ArchGenome& g);
/// field: 0 n_h, 1 n_kv, 2 d_qk, 3 d_v, 4 d_mlp; direction +1 or -1 grid step.
void mutate_perturb(ArchGenome& g, std::size_t slot, int field, int direction, const SpaceRanges& r);

/// Fires each operator independently in order (deletion, duplication,
/// rotation/reflection, perturbation), then repairs. Appends operator tags
/// to `tags` when non-null.
ArchGenome mutate(ArchGenome g, const SpaceRanges& r, const MutationRates& rates, Rng& rng,
                  std::string* tags = nullptr);

struct Acquisition {
    std::vector<std::size_t> exploit;  // indices into the population
    std::vector<std::size_t> explore;
    std::vector<McPrediction> predictions;  // per population member
};

Acquisition acquisition_select(const std::vector<Individual>& pop, const EncoderSurrogate& s, int b, int n_mc,
                               std::uint64_t seed);

struct GenerationStats {
    int generation = 0;
    std::size_t evaluations = 0;  // cumulative
    double best_val_loss = 0.0;   // best feasible in the population; +inf if none
    std::size_t feasible = 0;     // feasible members of the population
    std::size_t archive_size = 0;
    double hypervolume = 0.0;
    bool refined = false;
};

struct RefinementEvent {
    int generation = 0;
    std::vector<std::uint64_t> exploit_ids;
    std::vector<std::uint64_t> explore_ids;
    std::vector<double> labels;
    std::size_t dropped = 0;
    std::size_t buffer_size = 0;
    double mae_before = 0.0;  // working surrogate vs. new labels, before the refit
    double mae_after = 0.0;
};

/// Initial surrogate for the surrogate evaluator: frozen baseline plus its
/// training corpus (the replay source).
struct SurrogateContext {
    EncoderSurrogate baseline;
    std::vector<LabeledArch> corpus;
};

/// Loads the checkpoint/corpus named by cfg or trains on a synthetic corpus.
SurrogateContext make_surrogate_context(const SearchConfig& cfg);

struct SearchResult {
    std::vector<Individual> archive;
    std::vector<Individual> population;
    std::vector<GenerationStats> stats;
    std::vector<RefinementEvent> events;
    std::vector<Individual> history;  // every evaluated individual, in evaluation order
    /// feasible 2-D non-dominated (val_loss, params_m) set after each generation
    std::vector<std::vector<std::array<double, 2>>> fronts_2d;
    std::array<double, 2> hv_ref{0.0, 0.0};
    std::string backend;
};

/// Throws ConfigError for invalid config, std::runtime_error when the backend
/// or evaluator cannot be built.
SearchResult run_search(const SearchConfig& cfg, const SurrogateContext* ctx = nullptr);

/// Largest layer-weight count of the space, in millions.
double max_params_m(const SpaceRanges& r, const GlobalConfig& g);

struct AblationCurve {
    std::string recipe;
    std::vector<std::uint64_t> seeds;
    std::vector<std::vector<double>> hv;  // [seed][generation]
    std::vector<double> mean;
    std::vector<double> stddev;
    double median_final = 0.0;
};

struct AblationResult {
    std::array<double, 2> ref{0.0, 0.0};
    std::vector<AblationCurve> curves;  // NSGA+IHA, Random+IHA, NSGA+GQA
};

/// Runs the three recipes per seed and rescores every generation's 2-D front
/// against one shared reference (componentwise worst of the union x 1.1).
AblationResult ablation_suite(const SearchConfig& base, const std::vector<std::uint64_t>& seeds);

nlohmann::json to_json(const AblationResult& a);

}  // namespace ihanas
