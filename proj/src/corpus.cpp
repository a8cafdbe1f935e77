#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "ihanas/rng.hpp"
#include "ihanas/surrogate.hpp"

namespace ihanas {

std::size_t LabeledCorpus::split(std::uint64_t seed, double test_fraction) {
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("split: test_fraction must be in [0, 1)");
    const std::size_t before = rows.size();
    std::erase_if(rows, [](const LabeledArch& r) { return !std::isfinite(r.val_loss); });
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(idx.begin(), idx.end());
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    return before - rows.size();
}

std::vector<ArchGenome> LabeledCorpus::genomes(std::span<const std::size_t> idx) const {
    std::vector<ArchGenome> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(rows.at(i).genome);
    return out;
}

LabeledCorpus load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read corpus " + path);
    LabeledCorpus c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            const auto& y = j.at("val_loss");
            // null encodes a non-finite label
            const double v = y.is_null() ? std::numeric_limits<double>::quiet_NaN() : y.get<double>();
            c.rows.push_back({genome_from_json(j.at("genome")), v});
        } catch (const std::exception& e) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return c;
}

void save_corpus(const LabeledCorpus& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write corpus " + path);
    for (const auto& r : c.rows) {
        nlohmann::json j{{"genome", to_json(r.genome)}};
        j["val_loss"] = std::isfinite(r.val_loss) ? nlohmann::json(r.val_loss) : nlohmann::json(nullptr);
        out << j.dump() << '\n';
    }
}

double synth_loss_formula(double params, int active_layers, double identity_fraction) {
    return 4.2 - 0.30 * std::log1p(params / 1e6) + 0.5 / std::sqrt(static_cast<double>(active_layers)) +
           0.05 * identity_fraction;
}

double synth_oracle(const ArchGenome& g, std::uint64_t noise_seed, double noise_sd) {
    const int active = g.active_layers();
    int identity = 0;
    for (const auto& l : g.layers)
        if (l.mask && !l.attn) ++identity;
    const double y = synth_loss_formula(static_cast<double>(count_params(g, 0)), active,
                                        static_cast<double>(identity) / active);
    if (noise_sd == 0.0) return y;
    Rng rng(genome_hash(g) ^ noise_seed);
    return y + noise_sd * rng.normal();
}

LabeledCorpus make_synthetic_corpus(std::size_t n, std::uint64_t seed, const SpaceRanges& ranges,
                                    const GlobalConfig& global) {
    LabeledCorpus c;
    c.rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto g = random_genome(ranges, mix_seed(seed, i), global);
        const double y = synth_oracle(g, seed);
        c.rows.push_back({std::move(g), y});
    }
    c.split(mix_seed(seed, 0xC0FFEEULL));
    return c;
}

}  // namespace ihanas
