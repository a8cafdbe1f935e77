#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ihanas/genome.hpp"

namespace ihanas {

struct Workload {
    int prefill_tokens = 256;
    int decode_tokens = 256;

    /// Mean context seen by a decode step: L_p + L_d / 2.
    std::int64_t decode_context() const { return prefill_tokens + decode_tokens / 2; }
    /// Context the KV cache must hold at the end of decode.
    std::int64_t max_context() const { return std::int64_t{prefill_tokens} + decode_tokens; }
};

struct HwMetrics {
    double e_tok_uj = 0.0;
    double ttft_ms = 0.0;
    double tpot_ms = 0.0;
    bool feasible = true;

    static HwMetrics infeasible();
};

/// Per-layer resource profile. `ops` = gemm_ops + attn_ops (decode MACs/token).
struct LayerProfile {
    std::int64_t weight_bytes = 0;
    std::int64_t kv_bytes_per_token = 0;
    std::int64_t ops = 0;
    std::int64_t act_bytes = 0;
    std::int64_t gemm_ops = 0;
    std::int64_t attn_ops = 0;
};

/// Throws std::domain_error for an inactive layer.
LayerProfile profile_layer(const LayerGene& gene, const GlobalConfig& global,
                           std::int64_t context_tokens, int bytes_per_elem = 1);

/// Profiles of the active layers, in order, at the workload's decode context.
std::vector<LayerProfile> profile_model(const ArchGenome& g, const Workload& wl, int bytes_per_elem = 1);

// ---------------------------------------------------------------------------
// Single-chip parametric substrates

enum class Dataflow { weight_stationary, row_stationary, flexible };

const char* to_string(Dataflow d);

/// Roofline substrate. Reuse factors scale the DRAM traffic of a decode step:
/// weight-stationary mappings fetch `ws_weight_fraction` of the weights per
/// token, row-stationary ones fetch `rs_activation_fraction` of activations.
struct SubstrateSpec {
    std::string name;
    std::int64_t macs = 256;
    std::int64_t sram_bytes = 768 * 1024;
    Dataflow dataflow = Dataflow::weight_stationary;
    double clock_hz = 1.0e9;
    double e_mac_j = 0.2e-12;
    double e_sram_j_per_byte = 1.0e-12;
    double e_dram_j_per_byte = 32.0e-12;
    double dram_bw_bytes_per_s = 25.6e9;
    double ws_weight_fraction = 0.5;
    double rs_activation_fraction = 0.25;
    double gemm_utilization = 0.9;
    double attention_utilization = 0.5;
};

/// Names accepted by substrate_preset.
std::vector<std::string> substrate_names();
/// Presets sized after the gemmini / eyeriss / flat / dxe templates.
SubstrateSpec substrate_preset(const std::string& name);

HwMetrics substrate_cost(const ArchGenome& g, const SubstrateSpec& spec, const Workload& wl);

nlohmann::json to_json(const SubstrateSpec& s);
SubstrateSpec substrate_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Multi-chip ring

/// One DXE-style chip: n_dxt tiles x n_vac cores, each core with n_mac
/// multipliers, w_core KiB of weight memory and k_core KiB of KV storage.
struct ChipTemplate {
    int n_mac = 16;
    int w_core_kb = 24;
    int k_core_kb = 8;
    int n_dxt = 8;
    int n_vac = 16;
    std::int64_t scratchpad_bytes = 64 * 1024;
    std::int64_t max_context = 768;
    double clock_hz = 1.0e9;
    double e_mac_j = 0.2e-12;
    double e_sram_j_per_byte = 1.0e-12;
    double hop_latency_s = 1.0e-6;
    double hop_energy_j_per_byte = 10.0e-12;

    std::int64_t cores() const { return std::int64_t{n_dxt} * n_vac; }
    std::int64_t weight_capacity() const { return cores() * w_core_kb * 1024; }
    std::int64_t kv_capacity() const { return cores() * k_core_kb * 1024; }
    double macs_per_second() const { return static_cast<double>(cores()) * n_mac * clock_hz; }
    /// Weight + KV memory plus 512 B input buffers per tile and per chip.
    std::int64_t sram_bytes() const;
};

/// Silicon area relative to the reference 8x16-core single-chip template.
double chip_area(const ChipTemplate& c);

/// Stage feasibility limits (weight mem, KV mem, scratchpad, max context).
struct ChipLimits {
    std::int64_t weight = 0;
    std::int64_t kv = 0;
    std::int64_t scratchpad = 0;
    std::int64_t context = 0;

    static ChipLimits of(const ChipTemplate& c) {
        return {c.weight_capacity(), c.kv_capacity(), c.scratchpad_bytes, c.max_context};
    }
};

using Partition = std::vector<std::vector<std::size_t>>;

/// Greedy in-order scan: extend the open stage while weight, KV and ops budget
/// all fit, otherwise seal it. Empty optional when a single layer cannot fit.
std::optional<Partition> greedy_contiguous_partition(std::span<const LayerProfile> layers,
                                                     const ChipLimits& chip, std::int64_t budget);

struct StageTotals {
    std::size_t first = 0;
    std::size_t last = 0;  // inclusive
    std::int64_t weight_bytes = 0;
    std::int64_t kv_bytes_per_token = 0;
    std::int64_t kv_bytes = 0;  // kv_bytes_per_token * context
    std::int64_t ops = 0;
    std::int64_t act_bytes = 0;  // max over the stage
};

struct RingPlan {
    ChipTemplate chip;
    std::vector<StageTotals> stages;
    std::int64_t budget = 0;            // smallest feasible per-stage ops budget
    std::int64_t hop_bytes_per_token = 0;

    int n_chips() const { return static_cast<int>(stages.size()); }
    std::int64_t bottleneck_ops() const;
    Partition partition() const;
};

/// Binary search over the per-stage ops budget for the smallest one whose
/// greedy partition exists and uses at most n_chips_max stages.
std::optional<RingPlan> balanced_contiguous_pack(std::span<const LayerProfile> layers,
                                                 const ChipTemplate& chip, int n_chips_max);

HwMetrics ring_simulate(const RingPlan& plan, const Workload& wl);

struct ChipGrid {
    std::vector<int> n_mac{16, 32, 64};
    std::vector<int> w_core_kb{24, 48, 96, 192, 384};
    std::vector<int> n_chips_max{8, 16, 32};
    ChipTemplate base;
    std::int64_t max_cores_per_chip = 4096;

    std::size_t size() const { return n_mac.size() * w_core_kb.size() * n_chips_max.size(); }
};

nlohmann::json to_json(const ChipGrid& g);
ChipGrid chip_grid_from_json(const nlohmann::json& j);

/// Smallest power-of-two core count holding the largest single layer's
/// weights and KV, split as n_dxt x n_vac with n_vac >= n_dxt. Empty when it
/// exceeds max_cores.
std::optional<ChipTemplate> size_chip(ChipTemplate chip, std::span<const LayerProfile> layers,
                                      std::int64_t max_cores);

struct ChipCandidate {
    std::size_t grid_index = 0;
    int n_chips_max = 0;
    RingPlan plan;
    HwMetrics metrics;
    double area_per_chip = 0.0;
    double area_total = 0.0;

    std::array<double, 4> objectives() const {
        return {metrics.ttft_ms, metrics.tpot_ms, metrics.e_tok_uj, area_total};
    }
};

struct GridOutcome {
    std::size_t grid_index = 0;
    int n_mac = 0;
    int w_core_kb = 0;
    int n_chips_max = 0;
    bool feasible = false;
};

struct GridSearchResult {
    std::vector<GridOutcome> configs;     // all grid points, in grid order
    std::vector<ChipCandidate> feasible;  // simulated configs, in grid order
    std::vector<ChipCandidate> top;       // Pareto-filtered, ranked by crowding
};

GridSearchResult chip_grid_search(const ArchGenome& g, const Workload& wl, const ChipGrid& grid,
                                  std::size_t top_k = 3);

/// CSV: stage,first_layer,last_layer,weight_bytes,kv_bytes,ops,act_bytes,latency_ms
std::string ring_plan_csv(const RingPlan& plan);

// ---------------------------------------------------------------------------

class HardwareBackend {
public:
    virtual ~HardwareBackend() = default;
    virtual HwMetrics evaluate(const ArchGenome& g, const Workload& wl) const = 0;
    virtual std::string name() const = 0;
};

class SubstrateBackend final : public HardwareBackend {
public:
    explicit SubstrateBackend(SubstrateSpec spec) : spec_(std::move(spec)) {}
    HwMetrics evaluate(const ArchGenome& g, const Workload& wl) const override;
    std::string name() const override { return "analytic:" + spec_.name; }
    const SubstrateSpec& spec() const { return spec_; }

private:
    SubstrateSpec spec_;
};

/// Runs the chip-grid co-search and reports the retained pair with the lowest
/// energy-delay product (E_tok x TPOT). Infinite metrics when no config fits.
class RingBackend final : public HardwareBackend {
public:
    explicit RingBackend(ChipGrid grid, std::size_t top_k = 3) : grid_(std::move(grid)), top_k_(top_k) {}
    HwMetrics evaluate(const ArchGenome& g, const Workload& wl) const override;
    std::string name() const override { return "ring"; }

private:
    ChipGrid grid_;
    std::size_t top_k_;
};

/// "analytic:<preset>" or "ring". Throws std::invalid_argument otherwise.
std::unique_ptr<HardwareBackend> make_backend(const std::string& selector);

}  // namespace ihanas
