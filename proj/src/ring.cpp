#include <algorithm>
#include <bit>
#include <numeric>
#include <sstream>

#include "ihanas/hwcost.hpp"
#include "ihanas/metrics.hpp"

namespace ihanas {

namespace {

// Reference single-chip template: 8 tiles x 16 cores, 24 KiB weights + 8 KiB KV per core.
const ChipTemplate kReferenceChip{};

}  // namespace

std::int64_t ChipTemplate::sram_bytes() const {
    return cores() * (std::int64_t{w_core_kb} + k_core_kb) * 1024 + std::int64_t{n_dxt} * 512 + 512;
}

double chip_area(const ChipTemplate& c) {
    return static_cast<double>(c.sram_bytes()) / static_cast<double>(kReferenceChip.sram_bytes());
}

std::optional<Partition> greedy_contiguous_partition(std::span<const LayerProfile> layers,
                                                     const ChipLimits& chip, std::int64_t budget) {
    Partition parts;
    std::vector<std::size_t> stage;
    std::int64_t w = 0, k = 0, o = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const LayerProfile& l = layers[i];
        const std::int64_t dk = l.kv_bytes_per_token * chip.context;
        if (l.weight_bytes > chip.weight || dk > chip.kv || l.ops > budget || l.act_bytes > chip.scratchpad)
            return std::nullopt;  // layer alone exceeds the chip
        if (w + l.weight_bytes <= chip.weight && k + dk <= chip.kv && o + l.ops <= budget) {
            stage.push_back(i);
            w += l.weight_bytes;
            k += dk;
            o += l.ops;
        } else {
            parts.push_back(std::move(stage));
            stage = {i};
            w = l.weight_bytes;
            k = dk;
            o = l.ops;
        }
    }
    if (!stage.empty()) parts.push_back(std::move(stage));
    return parts;
}

std::int64_t RingPlan::bottleneck_ops() const {
    std::int64_t b = 0;
    for (const auto& s : stages) b = std::max(b, s.ops);
    return b;
}

Partition RingPlan::partition() const {
    Partition p;
    for (const auto& s : stages) {
        std::vector<std::size_t> idx(s.last - s.first + 1);
        std::iota(idx.begin(), idx.end(), s.first);
        p.push_back(std::move(idx));
    }
    return p;
}

std::optional<RingPlan> balanced_contiguous_pack(std::span<const LayerProfile> layers,
                                                 const ChipTemplate& chip, int n_chips_max) {
    if (layers.empty()) return std::nullopt;
    const ChipLimits lim = ChipLimits::of(chip);
    std::int64_t lo = 0, hi = 0;
    for (const auto& l : layers) {
        if (l.weight_bytes > lim.weight || l.kv_bytes_per_token * lim.context > lim.kv ||
            l.act_bytes > lim.scratchpad)
            return std::nullopt;
        lo = std::max(lo, l.ops);
        hi += l.ops;
    }

    std::optional<Partition> best;
    std::int64_t best_budget = 0;
    while (lo <= hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        auto p = greedy_contiguous_partition(layers, lim, mid);
        if (p && static_cast<int>(p->size()) <= n_chips_max) {
            best = std::move(p);
            best_budget = mid;
            hi = mid - 1;
        } else {
            lo = mid + 1;
        }
    }
    if (!best) return std::nullopt;

    RingPlan plan;
    plan.chip = chip;
    plan.budget = best_budget;
    for (const auto& stage : *best) {
        StageTotals t;
        t.first = stage.front();
        t.last = stage.back();
        for (std::size_t i : stage) {
            t.weight_bytes += layers[i].weight_bytes;
            t.kv_bytes_per_token += layers[i].kv_bytes_per_token;
            t.ops += layers[i].ops;
            t.act_bytes = std::max(t.act_bytes, layers[i].act_bytes);
        }
        t.kv_bytes = t.kv_bytes_per_token * lim.context;
        plan.stages.push_back(t);
    }
    return plan;
}

HwMetrics ring_simulate(const RingPlan& plan, const Workload& wl) {
    const ChipTemplate& c = plan.chip;
    const double rate = c.macs_per_second();
    const int n = plan.n_chips();
    const double ctx = static_cast<double>(wl.decode_context());
    double slowest = 0.0, prefill = 0.0, energy = 0.0;
    for (const auto& s : plan.stages) {
        const double tau = static_cast<double>(s.ops) / rate;
        slowest = std::max(slowest, tau);
        prefill += static_cast<double>(wl.prefill_tokens) * tau;
        energy += static_cast<double>(s.ops) * c.e_mac_j +
                  (static_cast<double>(s.weight_bytes) + static_cast<double>(s.kv_bytes_per_token) * ctx) *
                      c.e_sram_j_per_byte;
    }
    // A ring of one chip never leaves the die.
    const int hops = n > 1 ? n : 0;
    const double hop_latency = n > 1 ? c.hop_latency_s : 0.0;
    energy += static_cast<double>(hops) * static_cast<double>(plan.hop_bytes_per_token) * c.hop_energy_j_per_byte;
    const double tpot = slowest + hop_latency;
    const double ttft = prefill + static_cast<double>(n - 1) * c.hop_latency_s;
    return {energy * 1e6, ttft * 1e3, tpot * 1e3, true};
}

std::optional<ChipTemplate> size_chip(ChipTemplate chip, std::span<const LayerProfile> layers,
                                      std::int64_t max_cores) {
    std::int64_t need = 1;
    const std::int64_t w_core = std::int64_t{chip.w_core_kb} * 1024;
    const std::int64_t k_core = std::int64_t{chip.k_core_kb} * 1024;
    for (const auto& l : layers) {
        need = std::max(need, (l.weight_bytes + w_core - 1) / w_core);
        const std::int64_t kv = l.kv_bytes_per_token * chip.max_context;
        need = std::max(need, (kv + k_core - 1) / k_core);
    }
    const auto cores = std::bit_ceil(static_cast<std::uint64_t>(need));
    if (cores > static_cast<std::uint64_t>(max_cores)) return std::nullopt;
    const int log2 = std::countr_zero(cores);
    chip.n_dxt = 1 << (log2 / 2);
    chip.n_vac = static_cast<int>(cores >> (log2 / 2));
    return chip;
}

GridSearchResult chip_grid_search(const ArchGenome& g, const Workload& wl, const ChipGrid& grid,
                                  std::size_t top_k) {
    GridSearchResult result;
    const auto layers = profile_model(g, wl);
    std::size_t index = 0;
    for (int n_mac : grid.n_mac) {
        for (int w_core : grid.w_core_kb) {
            for (int cap : grid.n_chips_max) {
                GridOutcome outcome{index, n_mac, w_core, cap, false};
                ChipTemplate base = grid.base;
                base.n_mac = n_mac;
                base.w_core_kb = w_core;
                base.max_context = wl.max_context();
                if (auto chip = size_chip(base, layers, grid.max_cores_per_chip)) {
                    if (auto plan = balanced_contiguous_pack(layers, *chip, cap)) {
                        plan->hop_bytes_per_token = g.global.d_model;
                        ChipCandidate c;
                        c.grid_index = index;
                        c.n_chips_max = cap;
                        c.metrics = ring_simulate(*plan, wl);
                        c.area_per_chip = chip_area(*chip);
                        c.area_total = c.area_per_chip * plan->n_chips();
                        c.plan = std::move(*plan);
                        result.feasible.push_back(std::move(c));
                        outcome.feasible = true;
                    }
                }
                result.configs.push_back(outcome);
                ++index;
            }
        }
    }

    std::vector<std::vector<double>> pts;
    for (const auto& c : result.feasible) {
        const auto o = c.objectives();
        pts.emplace_back(o.begin(), o.end());
    }
    // Pareto filter; identical objective tuples keep only the first grid point.
    std::vector<std::size_t> front;
    for (std::size_t i : pareto_front(pts)) {
        const bool dup = std::any_of(front.begin(), front.end(), [&](std::size_t j) { return pts[j] == pts[i]; });
        if (!dup) front.push_back(i);
    }
    std::vector<std::vector<double>> front_pts;
    for (std::size_t i : front) front_pts.push_back(pts[i]);
    const auto crowd = crowding_distance(front_pts);
    std::vector<std::size_t> order(front.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return crowd[a] > crowd[b]; });
    for (std::size_t r = 0; r < order.size() && r < top_k; ++r)
        result.top.push_back(result.feasible[front[order[r]]]);
    return result;
}

std::string ring_plan_csv(const RingPlan& plan) {
    std::ostringstream os;
    os.precision(17);
    os << "stage,first_layer,last_layer,weight_bytes,kv_bytes,ops,act_bytes,latency_ms\n";
    const double rate = plan.chip.macs_per_second();
    for (std::size_t s = 0; s < plan.stages.size(); ++s) {
        const auto& t = plan.stages[s];
        os << s << ',' << t.first << ',' << t.last << ',' << t.weight_bytes << ',' << t.kv_bytes << ','
           << t.ops << ',' << t.act_bytes << ',' << static_cast<double>(t.ops) / rate * 1e3 << '\n';
    }
    return os.str();
}

nlohmann::json to_json(const ChipGrid& g) {
    return {{"n_mac", g.n_mac},
            {"w_core_kb", g.w_core_kb},
            {"n_chips_max", g.n_chips_max},
            {"max_cores_per_chip", g.max_cores_per_chip},
            {"chip",
             {{"k_core_kb", g.base.k_core_kb},
              {"scratchpad_bytes", g.base.scratchpad_bytes},
              {"clock_hz", g.base.clock_hz},
              {"e_mac_j", g.base.e_mac_j},
              {"e_sram_j_per_byte", g.base.e_sram_j_per_byte},
              {"hop_latency_s", g.base.hop_latency_s},
              {"hop_energy_j_per_byte", g.base.hop_energy_j_per_byte}}}};
}

ChipGrid chip_grid_from_json(const nlohmann::json& j) {
    ChipGrid g;
    if (j.contains("n_mac")) g.n_mac = j["n_mac"].get<std::vector<int>>();
    if (j.contains("w_core_kb")) g.w_core_kb = j["w_core_kb"].get<std::vector<int>>();
    if (j.contains("n_chips_max")) g.n_chips_max = j["n_chips_max"].get<std::vector<int>>();
    if (j.contains("max_cores_per_chip")) g.max_cores_per_chip = j["max_cores_per_chip"].get<std::int64_t>();
    if (j.contains("chip")) {
        const auto& c = j["chip"];
        g.base.k_core_kb = c.value("k_core_kb", g.base.k_core_kb);
        g.base.scratchpad_bytes = c.value("scratchpad_bytes", g.base.scratchpad_bytes);
        g.base.clock_hz = c.value("clock_hz", g.base.clock_hz);
        g.base.e_mac_j = c.value("e_mac_j", g.base.e_mac_j);
        g.base.e_sram_j_per_byte = c.value("e_sram_j_per_byte", g.base.e_sram_j_per_byte);
        g.base.hop_latency_s = c.value("hop_latency_s", g.base.hop_latency_s);
        g.base.hop_energy_j_per_byte = c.value("hop_energy_j_per_byte", g.base.hop_energy_j_per_byte);
    }
    return g;
}

HwMetrics RingBackend::evaluate(const ArchGenome& g, const Workload& wl) const {
    const auto res = chip_grid_search(g, wl, grid_, top_k_);
    if (res.top.empty()) return HwMetrics::infeasible();
    const ChipCandidate* best = &res.top.front();
    for (const auto& c : res.top)
        if (c.metrics.e_tok_uj * c.metrics.tpot_ms < best->metrics.e_tok_uj * best->metrics.tpot_ms) best = &c;
    return best->metrics;
}

}  // namespace ihanas
