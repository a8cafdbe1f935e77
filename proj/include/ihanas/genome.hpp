#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace ihanas {

inline constexpr std::int64_t kDefaultVocab = 50257;

struct GlobalConfig {
    int d_model = 768;
    int block_size = 1024;
    int max_layers = 40;

    bool operator==(const GlobalConfig&) const = default;
};

/// Per-layer IHA shape. When `mask` is 0 every other field is ignored; when
/// `attn` is 0 the attention block is an identity.
struct LayerGene {
    bool mask = false;
    bool attn = true;
    int n_h = 1;
    int n_kv = 1;
    int d_qk = 64;
    int d_v = 64;
    int d_mlp = 512;

    bool operator==(const LayerGene&) const = default;
};

struct ArchGenome {
    GlobalConfig global;
    std::vector<LayerGene> layers;

    int active_layers() const;
    bool operator==(const ArchGenome&) const = default;
};

/// Inclusive arithmetic grid {min, min+step, ..., <= max}.
struct GridRange {
    int min = 1;
    int step = 1;
    int max = 1;

    bool contains(int v) const;
    /// Clamp to [min, max], then round to the nearest grid value (ties toward the smaller).
    int snap(int v) const;
    int last() const;
    int size() const;
    std::vector<int> values() const;
    bool well_formed() const { return step > 0 && min <= max; }

    bool operator==(const GridRange&) const = default;
};

enum class AttentionVariant { gqa, iha };

/// Domain of every per-layer field. `variant == gqa` restricts the space to
/// the GQA-feasible subset: n_h | d_model and d_qk = d_v = d_model / n_h.
struct SpaceRanges {
    GridRange n_h{1, 1, 16};
    GridRange n_kv{1, 1, 16};
    GridRange d_qk{64, 32, 512};
    GridRange d_v{64, 32, 512};
    GridRange d_mlp{512, 256, 4096};
    AttentionVariant variant = AttentionVariant::iha;

    bool well_formed() const;
};

struct Violation {
    int layer;  // -1 for genome-level rules
    std::string field;
    std::string rule;
};

std::vector<Violation> validate(const ArchGenome& g, const SpaceRanges& r);

/// Clamp, snap to grid, then lower n_kv to the largest admissible divisor of
/// n_h. Also normalizes the slot count to max_layers and guarantees at least
/// one active layer. Idempotent.
ArchGenome repair(ArchGenome g, const SpaceRanges& r);

/// KV-group (1-based) serving query head h (1-based). Throws std::domain_error
/// unless n_kv | n_h and 1 <= h <= n_h.
int group_map(int h, int n_h, int n_kv);

/// Weight-matrix scalar count of one layer (attention projections + MLP).
std::int64_t layer_weight_count(const LayerGene& gene, int d_model);

/// Total weight count: active layers plus one tied embedding table of `vocab`
/// rows. Throws std::domain_error when no layer is active.
std::int64_t count_params(const ArchGenome& g, std::int64_t vocab = kDefaultVocab);

std::int64_t count_attention_configs(AttentionVariant variant, int d_model, const SpaceRanges& r);

/// Uniform independent draw of every field followed by repair.
ArchGenome random_genome(const SpaceRanges& r, std::uint64_t seed, const GlobalConfig& global = {});

/// Stable 64-bit hash of the canonical field values.
std::uint64_t genome_hash(const ArchGenome& g);

nlohmann::json to_json(const ArchGenome& g);
ArchGenome genome_from_json(const nlohmann::json& j);
/// Canonical text form (sorted keys, 2-space indent, trailing newline).
std::string dump_genome(const ArchGenome& g);
ArchGenome load_genome_file(const std::string& path);
void save_genome_file(const ArchGenome& g, const std::string& path);

nlohmann::json to_json(const SpaceRanges& r);
SpaceRanges ranges_from_json(const nlohmann::json& j);

const char* to_string(AttentionVariant v);

}  // namespace ihanas
