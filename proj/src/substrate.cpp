#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ihanas/hwcost.hpp"

namespace ihanas {

HwMetrics HwMetrics::infeasible() {
    constexpr double inf = std::numeric_limits<double>::infinity();
    return {inf, inf, inf, false};
}

LayerProfile profile_layer(const LayerGene& gene, const GlobalConfig& global,
                           std::int64_t context_tokens, int bytes_per_elem) {
    if (!gene.mask) throw std::domain_error("profile_layer: layer is inactive");
    const std::int64_t bytes = bytes_per_elem;
    const std::int64_t weights = layer_weight_count(gene, global.d_model);
    LayerProfile p;
    p.weight_bytes = weights * bytes;
    p.gemm_ops = weights;
    if (gene.attn) {
        p.kv_bytes_per_token = std::int64_t{gene.n_kv} * (gene.d_qk + gene.d_v) * bytes;
        p.attn_ops = std::int64_t{gene.n_h} * (gene.d_qk + gene.d_v) * context_tokens;
    }
    p.ops = p.gemm_ops + p.attn_ops;
    const std::int64_t widest =
        std::max({std::int64_t{global.d_model}, std::int64_t{gene.n_h} * gene.d_v, std::int64_t{gene.d_mlp}});
    p.act_bytes = widest * bytes * 2;
    return p;
}

std::vector<LayerProfile> profile_model(const ArchGenome& g, const Workload& wl, int bytes_per_elem) {
    std::vector<LayerProfile> out;
    for (const auto& l : g.layers)
        if (l.mask) out.push_back(profile_layer(l, g.global, wl.decode_context(), bytes_per_elem));
    return out;
}

const char* to_string(Dataflow d) {
    switch (d) {
        case Dataflow::weight_stationary: return "weight_stationary";
        case Dataflow::row_stationary: return "row_stationary";
        case Dataflow::flexible: return "flexible";
    }
    return "?";
}

std::vector<std::string> substrate_names() { return {"gemmini", "eyeriss", "flat", "dxe"}; }

SubstrateSpec substrate_preset(const std::string& name) {
    SubstrateSpec s;
    s.name = name;
    if (name == "gemmini") {
        s.macs = 256;
        s.sram_bytes = 768 * 1024;
        s.dataflow = Dataflow::weight_stationary;
        s.ws_weight_fraction = 0.5;
        s.gemm_utilization = 0.9;
        s.attention_utilization = 0.4;
    } else if (name == "eyeriss") {
        s.macs = 168;
        s.sram_bytes = 200 * 1024;
        s.dataflow = Dataflow::row_stationary;
        s.rs_activation_fraction = 0.25;
        s.gemm_utilization = 0.7;
        s.attention_utilization = 0.6;
    } else if (name == "flat") {
        s.macs = 1024;
        s.sram_bytes = 200 * 1024;
        s.dataflow = Dataflow::flexible;
        s.ws_weight_fraction = 0.6;
        s.rs_activation_fraction = 0.3;
        s.gemm_utilization = 0.6;
        s.attention_utilization = 0.95;
    } else if (name == "dxe") {
        s.macs = 2048;
        s.sram_bytes = 4 * 1024 * 1024;
        s.dataflow = Dataflow::weight_stationary;
        s.ws_weight_fraction = 0.05;
        s.gemm_utilization = 0.85;
        s.attention_utilization = 0.5;
    } else {
        throw std::invalid_argument("unknown substrate preset: " + name);
    }
    return s;
}

namespace {

struct LayerCost {
    double latency_s;
    double energy_j;
    double compute_s;
};

LayerCost layer_cost(const LayerProfile& p, const SubstrateSpec& s, Dataflow mode,
                     std::int64_t context, bool weights_resident) {
    const double weight_frac = weights_resident ? 0.0
                               : mode == Dataflow::weight_stationary ? s.ws_weight_fraction
                                                                     : 1.0;
    const double act_frac = mode == Dataflow::row_stationary ? s.rs_activation_fraction : 1.0;
    const double kv_bytes = static_cast<double>(p.kv_bytes_per_token) * static_cast<double>(context);
    const double dram_bytes = static_cast<double>(p.weight_bytes) * weight_frac + kv_bytes +
                              static_cast<double>(p.act_bytes) * act_frac;
    const double sram_bytes = static_cast<double>(p.weight_bytes) + kv_bytes + static_cast<double>(p.act_bytes);
    const double rate = static_cast<double>(s.macs) * s.clock_hz;
    const double compute_s = static_cast<double>(p.gemm_ops) / (rate * s.gemm_utilization) +
                             static_cast<double>(p.attn_ops) / (rate * s.attention_utilization);
    const double memory_s = dram_bytes / s.dram_bw_bytes_per_s;
    const double energy = static_cast<double>(p.ops) * s.e_mac_j + dram_bytes * s.e_dram_j_per_byte +
                          sram_bytes * s.e_sram_j_per_byte;
    return {std::max(compute_s, memory_s), energy, compute_s};
}

}  // namespace

HwMetrics substrate_cost(const ArchGenome& g, const SubstrateSpec& s, const Workload& wl) {
    const auto profiles = profile_model(g, wl);
    std::int64_t total_weights = 0;
    for (const auto& p : profiles) total_weights += p.weight_bytes;
    const bool resident = total_weights <= s.sram_bytes;
    const std::int64_t ctx = wl.decode_context();

    double tpot = 0.0, ttft = 0.0, energy = 0.0;
    for (const auto& p : profiles) {
        LayerCost c;
        if (s.dataflow == Dataflow::flexible) {
            const auto ws = layer_cost(p, s, Dataflow::weight_stationary, ctx, resident);
            const auto rs = layer_cost(p, s, Dataflow::row_stationary, ctx, resident);
            c = rs.latency_s < ws.latency_s ? rs : ws;
        } else {
            c = layer_cost(p, s, s.dataflow, ctx, resident);
        }
        tpot += c.latency_s;
        energy += c.energy_j;
        // prefill: L_p batched token steps at the compute-bound rate
        ttft += static_cast<double>(wl.prefill_tokens) * c.compute_s;
    }
    return {energy * 1e6, ttft * 1e3, tpot * 1e3, true};
}

nlohmann::json to_json(const SubstrateSpec& s) {
    return {{"name", s.name},
            {"macs", s.macs},
            {"sram_bytes", s.sram_bytes},
            {"dataflow", to_string(s.dataflow)},
            {"clock_hz", s.clock_hz},
            {"e_mac_j", s.e_mac_j},
            {"e_sram_j_per_byte", s.e_sram_j_per_byte},
            {"e_dram_j_per_byte", s.e_dram_j_per_byte},
            {"dram_bw_bytes_per_s", s.dram_bw_bytes_per_s},
            {"ws_weight_fraction", s.ws_weight_fraction},
            {"rs_activation_fraction", s.rs_activation_fraction},
            {"gemm_utilization", s.gemm_utilization},
            {"attention_utilization", s.attention_utilization}};
}

SubstrateSpec substrate_from_json(const nlohmann::json& j) {
    SubstrateSpec s;
    s.name = j.at("name").get<std::string>();
    s.macs = j.at("macs").get<std::int64_t>();
    s.sram_bytes = j.at("sram_bytes").get<std::int64_t>();
    const auto df = j.at("dataflow").get<std::string>();
    if (df == "weight_stationary") s.dataflow = Dataflow::weight_stationary;
    else if (df == "row_stationary") s.dataflow = Dataflow::row_stationary;
    else if (df == "flexible") s.dataflow = Dataflow::flexible;
    else throw std::invalid_argument("dataflow: unknown tag '" + df + "'");
    s.clock_hz = j.at("clock_hz").get<double>();
    s.e_mac_j = j.at("e_mac_j").get<double>();
    s.e_sram_j_per_byte = j.at("e_sram_j_per_byte").get<double>();
    s.e_dram_j_per_byte = j.at("e_dram_j_per_byte").get<double>();
    s.dram_bw_bytes_per_s = j.at("dram_bw_bytes_per_s").get<double>();
    s.ws_weight_fraction = j.at("ws_weight_fraction").get<double>();
    s.rs_activation_fraction = j.at("rs_activation_fraction").get<double>();
    s.gemm_utilization = j.at("gemm_utilization").get<double>();
    s.attention_utilization = j.at("attention_utilization").get<double>();
    if (s.macs <= 0 || s.sram_bytes <= 0 || s.clock_hz <= 0 || s.dram_bw_bytes_per_s <= 0 ||
        s.gemm_utilization <= 0 || s.attention_utilization <= 0)
        throw std::invalid_argument("substrate '" + s.name + "': constants must be positive");
    return s;
}

HwMetrics SubstrateBackend::evaluate(const ArchGenome& g, const Workload& wl) const {
    return substrate_cost(g, spec_, wl);
}

std::unique_ptr<HardwareBackend> make_backend(const std::string& selector) {
    if (selector == "ring") return std::make_unique<RingBackend>(ChipGrid{});
    const std::string prefix = "analytic:";
    if (selector.rfind(prefix, 0) == 0)
        return std::make_unique<SubstrateBackend>(substrate_preset(selector.substr(prefix.size())));
    throw std::invalid_argument("backend must be 'analytic:<name>' or 'ring', got '" + selector + "'");
}

}  // namespace ihanas
