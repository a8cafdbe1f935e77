#include "ihanas/genome.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ihanas/rng.hpp"

namespace ihanas {

int ArchGenome::active_layers() const {
    return static_cast<int>(std::count_if(layers.begin(), layers.end(),
                                          [](const LayerGene& l) { return l.mask; }));
}

bool GridRange::contains(int v) const {
    return v >= min && v <= max && (v - min) % step == 0;
}

int GridRange::last() const { return min + ((max - min) / step) * step; }

int GridRange::size() const { return (max - min) / step + 1; }

int GridRange::snap(int v) const {
    const int hi = last();
    if (v <= min) return min;
    if (v >= hi) return hi;
    const int below = min + ((v - min) / step) * step;
    const int above = below + step;
    if (below == v) return v;
    // ties go to the smaller value
    return (v - below) <= (above - v) ? below : above;
}

std::vector<int> GridRange::values() const {
    std::vector<int> out;
    for (int v = min; v <= max; v += step) out.push_back(v);
    return out;
}

bool SpaceRanges::well_formed() const {
    return n_h.well_formed() && n_kv.well_formed() && d_qk.well_formed() &&
           d_v.well_formed() && d_mlp.well_formed() && n_h.min >= 1 && n_kv.min >= 1;
}

const char* to_string(AttentionVariant v) {
    return v == AttentionVariant::gqa ? "gqa" : "iha";
}

namespace {

void check_range(std::vector<Violation>& out, int layer, const char* field, int v,
                 const GridRange& g) {
    if (!g.contains(v)) {
        std::ostringstream os;
        os << v << " not in [" << g.min << ":" << g.step << ":" << g.max << "]";
        out.push_back({layer, field, os.str()});
    }
}

// Nearest n_h grid value dividing d_model (ties toward the smaller), or 0.
int nearest_model_divisor(int n_h, int d_model, const GridRange& grid) {
    int best = 0;
    int best_dist = std::numeric_limits<int>::max();
    for (int v : grid.values()) {
        if (d_model % v != 0) continue;
        const int dist = std::abs(v - n_h);
        if (dist < best_dist) {
            best = v;
            best_dist = dist;
        }
    }
    return best;
}

// Largest n_kv grid value <= current dividing n_h; otherwise the smallest
// admissible one above it; 0 when the grid holds no divisor of n_h.
int lower_kv(int n_kv, int n_h, const GridRange& grid) {
    const auto vals = grid.values();
    for (auto it = vals.rbegin(); it != vals.rend(); ++it)
        if (*it <= n_kv && n_h % *it == 0) return *it;
    for (int v : vals)
        if (n_h % v == 0) return v;
    return 0;
}

LayerGene repair_layer(LayerGene l, const SpaceRanges& r, int d_model) {
    l.n_h = r.n_h.snap(l.n_h);
    l.n_kv = r.n_kv.snap(l.n_kv);
    l.d_qk = r.d_qk.snap(l.d_qk);
    l.d_v = r.d_v.snap(l.d_v);
    l.d_mlp = r.d_mlp.snap(l.d_mlp);
    if (r.variant == AttentionVariant::gqa) {
        if (const int h = nearest_model_divisor(l.n_h, d_model, r.n_h); h != 0) {
            l.n_h = h;
            l.d_qk = d_model / h;
            l.d_v = d_model / h;
        }
    }
    if (const int kv = lower_kv(l.n_kv, l.n_h, r.n_kv); kv != 0) l.n_kv = kv;
    return l;
}

}  // namespace

std::vector<Violation> validate(const ArchGenome& g, const SpaceRanges& r) {
    std::vector<Violation> out;
    if (g.global.d_model < 1) out.push_back({-1, "d_model", "must be >= 1"});
    if (g.global.block_size < 1) out.push_back({-1, "block_size", "must be >= 1"});
    if (g.global.max_layers < 1) out.push_back({-1, "max_layers", "must be >= 1"});
    if (static_cast<int>(g.layers.size()) != g.global.max_layers)
        out.push_back({-1, "layers", "length must equal max_layers"});
    if (g.active_layers() == 0) out.push_back({-1, "mask", "at least one layer must be active"});

    const bool gqa = r.variant == AttentionVariant::gqa;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const LayerGene& l = g.layers[i];
        if (!l.mask) continue;
        const int li = static_cast<int>(i);
        check_range(out, li, "n_h", l.n_h, r.n_h);
        check_range(out, li, "n_kv", l.n_kv, r.n_kv);
        if (l.n_kv >= 1 && l.n_h >= 1 && l.n_h % l.n_kv != 0)
            out.push_back({li, "n_kv", "must divide n_h"});
        if (gqa) {
            const int d = g.global.d_model;
            if (l.n_h < 1 || d % l.n_h != 0) {
                out.push_back({li, "n_h", "must divide d_model"});
            } else {
                if (l.d_qk != d / l.n_h) out.push_back({li, "d_qk", "must equal d_model/n_h"});
                if (l.d_v != d / l.n_h) out.push_back({li, "d_v", "must equal d_model/n_h"});
            }
        } else {
            check_range(out, li, "d_qk", l.d_qk, r.d_qk);
            check_range(out, li, "d_v", l.d_v, r.d_v);
        }
        check_range(out, li, "d_mlp", l.d_mlp, r.d_mlp);
    }
    return out;
}

ArchGenome repair(ArchGenome g, const SpaceRanges& r) {
    g.global.d_model = std::max(1, g.global.d_model);
    g.global.block_size = std::max(1, g.global.block_size);
    g.global.max_layers = std::max(1, g.global.max_layers);
    g.layers.resize(static_cast<std::size_t>(g.global.max_layers));
    for (auto& l : g.layers) l = repair_layer(l, r, g.global.d_model);
    if (g.active_layers() == 0) g.layers.front().mask = true;
    return g;
}

int group_map(int h, int n_h, int n_kv) {
    if (n_h < 1 || n_kv < 1 || n_h % n_kv != 0)
        throw std::domain_error("group_map: n_kv must divide n_h");
    if (h < 1 || h > n_h) throw std::domain_error("group_map: head index out of range");
    const int ratio = n_h / n_kv;
    return 1 + (h - 1) / ratio;
}

std::int64_t layer_weight_count(const LayerGene& l, int d_model) {
    const std::int64_t d = d_model;
    std::int64_t n = 2 * d * l.d_mlp;
    if (l.attn) {
        n += d * (std::int64_t{l.n_h} * l.d_qk);
        n += d * (std::int64_t{l.n_kv} * l.d_qk);
        n += d * (std::int64_t{l.n_kv} * l.d_v);
        n += (std::int64_t{l.n_h} * l.d_v) * d;
    }
    return n;
}

std::int64_t count_params(const ArchGenome& g, std::int64_t vocab) {
    if (g.active_layers() == 0) throw std::domain_error("count_params: no active layer");
    std::int64_t n = vocab * g.global.d_model;
    for (const auto& l : g.layers)
        if (l.mask) n += layer_weight_count(l, g.global.d_model);
    return n;
}

std::int64_t count_attention_configs(AttentionVariant variant, int d_model, const SpaceRanges& r) {
    std::int64_t pairs = 0;
    for (int h : r.n_h.values()) {
        if (variant == AttentionVariant::gqa && (d_model % h != 0)) continue;
        for (int kv : r.n_kv.values())
            if (h % kv == 0) ++pairs;
    }
    if (variant == AttentionVariant::gqa) return pairs;
    return pairs * r.d_qk.size() * r.d_v.size();
}

ArchGenome random_genome(const SpaceRanges& r, std::uint64_t seed, const GlobalConfig& global) {
    Rng rng(seed);
    auto draw = [&rng](const GridRange& g) {
        return g.min + g.step * static_cast<int>(rng.uniform_int(0, g.size() - 1));
    };
    ArchGenome g;
    g.global = global;
    g.layers.resize(static_cast<std::size_t>(std::max(1, global.max_layers)));
    for (auto& l : g.layers) {
        l.mask = rng.bernoulli(0.5);
        l.attn = rng.bernoulli(0.5);
        l.n_h = draw(r.n_h);
        l.n_kv = draw(r.n_kv);
        l.d_qk = draw(r.d_qk);
        l.d_v = draw(r.d_v);
        l.d_mlp = draw(r.d_mlp);
    }
    return repair(std::move(g), r);
}

std::uint64_t genome_hash(const ArchGenome& g) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::int64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= static_cast<std::uint64_t>((v >> (8 * i)) & 0xff);
            h *= 0x100000001b3ULL;
        }
    };
    feed(g.global.d_model);
    feed(g.global.block_size);
    feed(g.global.max_layers);
    for (const auto& l : g.layers) {
        feed(l.mask);
        feed(l.attn);
        feed(l.n_h);
        feed(l.n_kv);
        feed(l.d_qk);
        feed(l.d_v);
        feed(l.d_mlp);
    }
    return h;
}

nlohmann::json to_json(const ArchGenome& g) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : g.layers) {
        layers.push_back({{"mask", l.mask ? 1 : 0},
                          {"attn", l.attn ? 1 : 0},
                          {"n_h", l.n_h},
                          {"n_kv", l.n_kv},
                          {"d_qk", l.d_qk},
                          {"d_v", l.d_v},
                          {"d_mlp", l.d_mlp}});
    }
    return {{"global",
             {{"d_model", g.global.d_model},
              {"block_size", g.global.block_size},
              {"max_layers", g.global.max_layers}}},
            {"layers", std::move(layers)}};
}

ArchGenome genome_from_json(const nlohmann::json& j) {
    ArchGenome g;
    const auto& gl = j.at("global");
    g.global.d_model = gl.at("d_model").get<int>();
    g.global.block_size = gl.at("block_size").get<int>();
    g.global.max_layers = gl.at("max_layers").get<int>();
    for (const auto& lj : j.at("layers")) {
        LayerGene l;
        l.mask = lj.at("mask").get<int>() != 0;
        l.attn = lj.at("attn").get<int>() != 0;
        l.n_h = lj.at("n_h").get<int>();
        l.n_kv = lj.at("n_kv").get<int>();
        l.d_qk = lj.at("d_qk").get<int>();
        l.d_v = lj.at("d_v").get<int>();
        l.d_mlp = lj.at("d_mlp").get<int>();
        g.layers.push_back(l);
    }
    return g;
}

std::string dump_genome(const ArchGenome& g) { return to_json(g).dump(2) + "\n"; }

ArchGenome load_genome_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open genome file: " + path);
    return genome_from_json(nlohmann::json::parse(in));
}

void save_genome_file(const ArchGenome& g, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write genome file: " + path);
    out << dump_genome(g);
}

namespace {
nlohmann::json grid_json(const GridRange& g) { return {g.min, g.step, g.max}; }
GridRange grid_from(const nlohmann::json& j) {
    return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()};
}
}  // namespace

nlohmann::json to_json(const SpaceRanges& r) {
    return {{"n_h", grid_json(r.n_h)},     {"n_kv", grid_json(r.n_kv)},
            {"d_qk", grid_json(r.d_qk)},   {"d_v", grid_json(r.d_v)},
            {"d_mlp", grid_json(r.d_mlp)}, {"variant", to_string(r.variant)}};
}

SpaceRanges ranges_from_json(const nlohmann::json& j) {
    SpaceRanges r;
    if (j.contains("n_h")) r.n_h = grid_from(j["n_h"]);
    if (j.contains("n_kv")) r.n_kv = grid_from(j["n_kv"]);
    if (j.contains("d_qk")) r.d_qk = grid_from(j["d_qk"]);
    if (j.contains("d_v")) r.d_v = grid_from(j["d_v"]);
    if (j.contains("d_mlp")) r.d_mlp = grid_from(j["d_mlp"]);
    if (j.contains("variant")) {
        const auto v = j["variant"].get<std::string>();
        if (v == "gqa") r.variant = AttentionVariant::gqa;
        else if (v == "iha") r.variant = AttentionVariant::iha;
        else throw std::invalid_argument("variant must be 'gqa' or 'iha'");
    }
    if (!r.well_formed()) throw std::invalid_argument("space ranges are not well formed");
    return r;
}

}  // namespace ihanas
