// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.
// Every comparison target is an independent brute-force oracle from oracles.hpp
// or a literal; nothing here is checked against the library itself.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "../oracles.hpp"
#include "artifacts.hpp"
#include "ihanas/genome.hpp"
#include "ihanas/hwcost.hpp"
#include "ihanas/iha_ref.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/rng.hpp"
#include "ihanas/search.hpp"
#include "ihanas/surrogate.hpp"

using namespace ihanas;
using Eigen::MatrixXd;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------- 1
// Per-layer shape choices counted by walking every tuple.
std::pair<long, long> enumerate_configs(int d_model, const SpaceRanges& r) {
    long gqa = 0, iha = 0;
    for (int nh = r.n_h.min; nh <= r.n_h.max; nh += r.n_h.step) {
        for (int nkv = r.n_kv.min; nkv <= r.n_kv.max; nkv += r.n_kv.step) {
            if (nh % nkv) continue;
            if (d_model % nh == 0) ++gqa;
            for (int dq = r.d_qk.min; dq <= r.d_qk.max; dq += r.d_qk.step)
                for (int dv = r.d_v.min; dv <= r.d_v.max; dv += r.d_v.step) ++iha;
        }
    }
    return {gqa, iha};
}

Outcome c1_counts() {
    const auto t0 = std::chrono::steady_clock::now();
    const SpaceRanges r;
    const bool lit = count_attention_configs(AttentionVariant::gqa, 768, r) == 27 &&
                     count_attention_configs(AttentionVariant::iha, 768, r) == 11250;
    bool agree = true;
    for (int d : {64, 96, 256, 768, 960, 1024, 4096}) {
        const auto [g, i] = enumerate_configs(d, r);
        agree = agree && count_attention_configs(AttentionVariant::gqa, d, r) == g &&
                count_attention_configs(AttentionVariant::iha, d, r) == i;
    }
    const double s = seconds_since(t0);
    return {lit && agree && s < 1.0,
            fmt("GQA %lld, IHA %lld at d_model=768; enumerator agrees on 7 widths: %s; %.3f s",
                static_cast<long long>(count_attention_configs(AttentionVariant::gqa, 768, r)),
                static_cast<long long>(count_attention_configs(AttentionVariant::iha, 768, r)), agree ? "yes" : "no",
                s)};
}

// ---------------------------------------------------------------- 2
Outcome c2_param_count() {
    const std::size_t d = 64, f = 4 * d;
    const std::size_t oracle = 9 * d + 9 * d + 40 * d +
                               4 * (2 * 2 * d + 4 * (d * d + d) + (d * f + f) + (f * d + d)) + d + 1;
    const auto n = EncoderSurrogate::param_count(EncoderHyper{});
    const EncoderSurrogate s(EncoderHyper{}, FieldNormalizer{}, 1);
    return {n == 203713 && oracle == 203713 && s.params().size() == 203713,
            fmt("library %zu, instantiated %zu, shape enumeration %zu, expected 203713", n, s.params().size(),
                oracle)};
}

// ---------------------------------------------------------------- 3
Outcome c3_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = make_synthetic_corpus(40, 17);
    const auto norm = FieldNormalizer::fit(c.genomes(c.train));
    EncoderSurrogate s(EncoderHyper{}, norm, 23);
    Rng r(5);
    // the head starts at zero; give it weight so every upstream gradient is live,
    // and centre the output the way training does so the loss stays O(1)
    for (const auto& t : s.tensors())
        if (t.name == "head.w")
            for (std::size_t i = 0; i < t.size(); ++i) s.params()[t.offset + i] = 0.05 * r.normal();
    std::vector<double> ys;
    for (std::size_t i : c.train) ys.push_back(c.rows[i].val_loss);
    std::nth_element(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(ys.size() / 2), ys.end());
    s.set_output_bias(ys[ys.size() / 2]);
    auto batch = make_samples(c, c.train, norm, 40);
    batch.resize(4);

    // probe every tensor, then fill up to 1000 with uniform draws
    std::vector<std::size_t> probe;
    for (const auto& t : s.tensors())
        for (int k = 0; k < 3; ++k) probe.push_back(t.offset + r.index(t.size()));
    while (probe.size() < 1000) probe.push_back(r.index(s.params().size()));

    double worst = 0;
    for (ForwardMode m : {ForwardMode{false, 0}, ForwardMode{true, 99}}) {
        ParamVector g;
        s.loss_and_grad(batch, &g, m);
        auto& p = s.params();
        const std::size_t n = m.dropout ? 200 : probe.size();
        for (std::size_t k = 0; k < n; ++k) {
            const std::size_t i = probe[k];
            const double o = p[i], h = 1e-5;
            p[i] = o + h;
            const double up = s.loss_and_grad(batch, nullptr, m);
            p[i] = o - h;
            const double dn = s.loss_and_grad(batch, nullptr, m);
            p[i] = o;
            const double fd = (up - dn) / (2 * h);
            worst = std::max(worst, std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6}));
        }
    }
    const double sec = seconds_since(t0);
    return {worst < 1e-4 && sec < 60.0,
            fmt("max relative error %.2e over %zu parameters (+200 with dropout), batch 4; %.1f s", worst,
                probe.size(), sec)};
}

// ---------------------------------------------------------------- 4
Outcome c4_packing() {
    const auto t0 = std::chrono::steady_clock::now();
    ChipTemplate chip;
    chip.n_dxt = chip.n_vac = 1;
    chip.w_core_kb = chip.k_core_kb = 1;
    chip.max_context = 4;
    chip.scratchpad_bytes = 512;
    const auto lim = ChipLimits::of(chip);
    Rng r(404);
    int mismatches = 0, feasible = 0;
    for (int t = 0; t < 500; ++t) {
        const auto n = static_cast<std::size_t>(r.uniform_int(1, 10));
        std::vector<LayerProfile> ls;
        std::vector<oracle::Layer> ol;
        for (std::size_t i = 0; i < n; ++i) {
            LayerProfile p;
            p.weight_bytes = r.uniform_int(1, 700);
            p.kv_bytes_per_token = r.uniform_int(0, 150);
            p.ops = p.gemm_ops = r.uniform_int(1, 100);
            p.act_bytes = r.uniform_int(1, 540);
            ls.push_back(p);
            ol.push_back({p.weight_bytes, p.kv_bytes_per_token * lim.context, p.ops, p.act_bytes});
        }
        const int cap = static_cast<int>(r.uniform_int(1, static_cast<std::int64_t>(n)));
        const auto got = balanced_contiguous_pack(ls, chip, cap);
        const auto want = oracle::best_bottleneck(ol, lim.weight, lim.kv, lim.scratchpad, cap);
        if (got.has_value() != want.has_value() || (got && got->bottleneck_ops() != *want)) ++mismatches;
        feasible += got.has_value();
    }
    const double s = seconds_since(t0);
    return {mismatches == 0 && s < 30.0,
            fmt("500 instances (N <= 10, %d feasible), %d bottleneck mismatches vs exhaustive cuts; %.2f s", feasible,
                mismatches, s)};
}

// ---------------------------------------------------------------- 5
Outcome c5_nsga() {
    Rng r(55);
    int bad_sort = 0, bad_archive = 0;
    for (int t = 0; t < 200; ++t) {
        const int m = 2 + t % 3;
        const auto n = 1 + r.index(30);
        std::vector<ObjectiveVector> pop;
        std::vector<oracle::Point> pts;
        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 4> f{0, 0, 0, 0};
            for (int k = 0; k < m; ++k) f[static_cast<std::size_t>(k)] = static_cast<double>(r.uniform_int(0, 6));
            const bool feas = r.bernoulli(0.75);
            const double viol = feas ? 0.0 : static_cast<double>(r.uniform_int(1, 3));
            pop.push_back({f[0], f[1], f[2], f[3], feas, viol});
            pts.push_back({{f.begin(), f.end()}, feas, viol});
        }
        const auto want = oracle::layer_index(pts);
        std::vector<int> got(n, -1);
        const auto fronts = fast_nondominated_sort(pop);
        for (std::size_t k = 0; k < fronts.size(); ++k)
            for (std::size_t i : fronts[k]) got[i] = static_cast<int>(k);
        bad_sort += got != want;

        ParetoArchive a;
        std::vector<Individual> inds;
        for (std::size_t i = 0; i < n; ++i) {
            Individual d;
            d.id = i + 1;
            d.obj = pop[i];
            inds.push_back(d);
        }
        const std::size_t cut = r.index(n + 1);
        a.update({inds.begin(), inds.begin() + static_cast<std::ptrdiff_t>(cut)});
        a.update({inds.begin() + static_cast<std::ptrdiff_t>(cut), inds.end()});
        std::vector<std::vector<double>> feas;
        std::vector<std::uint64_t> ids;
        for (std::size_t i = 0; i < n; ++i)
            if (pts[i].feasible) {
                feas.push_back(pts[i].f);
                ids.push_back(i + 1);
            }
        std::set<std::uint64_t> w, g;
        for (std::size_t i : oracle::front(feas)) w.insert(ids[i]);
        for (const auto& d : a.members()) g.insert(d.id);
        bad_archive += w != g;
    }
    return {bad_sort == 0 && bad_archive == 0,
            fmt("200 populations (<= 30 points, 2-4 objectives): %d sort and %d archive disagreements with brute force",
                bad_sort, bad_archive)};
}

// ---------------------------------------------------------------- 6
oracle::Mat to_mat(const MatrixXd& m) {
    oracle::Mat o(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            o[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return o;
}

double max_diff(const MatrixXd& a, const oracle::Mat& b) {
    double m = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a(i, j) - b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    return m;
}

Outcome c6_iha() {
    Rng r(66);
    double worst_mha = 0, worst_gqa = 0;
    for (int t = 0; t < 100; ++t) {
        const int nkv = static_cast<int>(r.uniform_int(1, 4));
        const int d = static_cast<int>(r.uniform_int(2, 12));
        const int len = static_cast<int>(r.uniform_int(1, 8));
        const bool causal = r.bernoulli(0.5);
        const int dq = static_cast<int>(r.uniform_int(1, 6)), dv = static_cast<int>(r.uniform_int(1, 6));
        MatrixXd x(len, d);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();

        // n_kv = n_h: plain multi-head attention
        const LayerGene mha{true, true, nkv, nkv, dq, dv, 512};
        const auto wm = AttnWeights::random(mha, d, r.next_u64());
        std::vector<oracle::Head> hm;
        for (int h = 0; h < nkv; ++h)
            hm.push_back({to_mat(wm.wq.middleCols(h * dq, dq)), to_mat(wm.wk.middleCols(h * dq, dq)),
                          to_mat(wm.wv.middleCols(h * dv, dv))});
        worst_mha = std::max(worst_mha, max_diff(iha_forward(x, mha, wm, causal), oracle::mha(to_mat(x), hm, to_mat(wm.wo), causal)));

        // grouped: every query head gets its own copy of the group's K/V
        const int nh = nkv * static_cast<int>(r.uniform_int(2, 4));
        const LayerGene gq{true, true, nh, nkv, dq, dv, 512};
        const auto wg = AttnWeights::random(gq, d, r.next_u64());
        std::vector<oracle::Head> hg;
        for (int h = 0; h < nh; ++h) {
            const int grp = h / (nh / nkv);
            hg.push_back({to_mat(wg.wq.middleCols(h * dq, dq)), to_mat(wg.wk.middleCols(grp * dq, dq)),
                          to_mat(wg.wv.middleCols(grp * dv, dv))});
        }
        worst_gqa = std::max(worst_gqa, max_diff(iha_forward(x, gq, wg, causal), oracle::mha(to_mat(x), hg, to_mat(wg.wo), causal)));
    }
    return {worst_mha < 1e-10 && worst_gqa < 1e-10,
            fmt("100 draws: max |diff| %.2e vs MHA, %.2e vs replicated-head GQA (tolerance 1e-10)", worst_mha,
                worst_gqa)};
}

// ---------------------------------------------------------------- 7
Outcome c7_metrics() {
    Rng r(77);
    double dt = 0, dr = 0;
    int k_bad = 0, mae_bad = 0;
    for (int t = 0; t < 100; ++t) {
        const auto n = static_cast<std::size_t>(r.uniform_int(2, 50));
        std::vector<double> p(n), q(n);
        const bool ties = t % 3 == 0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = ties ? static_cast<double>(r.uniform_int(0, 5)) : r.normal();
            q[i] = ties ? static_cast<double>(r.uniform_int(0, 5)) : r.normal();
        }
        dt = std::max(dt, std::abs(kendall_tau(p, q) - oracle::tau_b(p, q)));
        dr = std::max(dr, std::abs(spearman_rho(p, q) - oracle::rho(p, q)));
        for (double x : {0.01, 0.05, 0.1, 0.5, 1.0}) {
            k_bad += k_at_x(p, q, x) != oracle::k_at(p, q, x);
            mae_bad += mae_at_top(p, q, x) != oracle::mae_top(p, q, x);
        }
    }
    return {dt <= 1e-12 && dr <= 1e-12 && k_bad == 0 && mae_bad == 0,
            fmt("100 vectors (n <= 50): max |dtau| %.1e, |drho| %.1e, k mismatches %d, MAE mismatches %d", dt, dr, k_bad,
                mae_bad)};
}

// ---------------------------------------------------------------- 8
Outcome c8_ablation() {
    const auto t0 = std::chrono::steady_clock::now();
    SearchConfig cfg = search_preset("surrogate");
    cfg.evaluator = "oracle";  // synthetic oracle labels instead of a trained surrogate
    cfg.refine_every = 0;
    cfg.generations = 15;
    const auto a = ablation_suite(cfg, {1, 2, 3, 4, 5});
    double nsga_iha = 0, rnd = 0, nsga_gqa = 0;
    for (const auto& c : a.curves) {
        if (c.recipe == "NSGA+IHA") nsga_iha = c.median_final;
        if (c.recipe == "Random+IHA") rnd = c.median_final;
        if (c.recipe == "NSGA+GQA") nsga_gqa = c.median_final;
    }
    const double s = seconds_since(t0);
    return {nsga_iha > rnd && nsga_iha >= nsga_gqa && s < 600.0,
            fmt("median final HV over 5 seeds at G=15: NSGA+IHA %.4g, Random+IHA %.4g, NSGA+GQA %.4g; %.1f s", nsga_iha,
                rnd, nsga_gqa, s)};
}

// ---------------------------------------------------------------- 9
Outcome c9_determinism() {
    const auto t0 = std::chrono::steady_clock::now();
    // both presets at full length: surrogate evaluator with 7 refinements, and the ring backend
    const SearchConfig a = search_preset("surrogate");
    const SearchConfig b = search_preset("ring");
    bool same = true;
    std::size_t bytes = 0;
    for (const auto& cfg : {a, b}) {
        const auto x = tools::archive_csv(run_search(cfg));
        const auto y = tools::archive_csv(run_search(cfg));
        same = same && x == y && x.size() > 100;
        bytes += x.size();
    }
    return {same, fmt("two runs each of the surrogate and ring presets: archive CSVs %s (%zu bytes); %.1f s",
                      same ? "byte-identical" : "DIFFER", bytes, seconds_since(t0))};
}

// ---------------------------------------------------------------- 10
Outcome c10_chip_grid() {
    const ChipGrid grid;
    int bad = 0, checked = 0, with_top = 0;
    bool card = grid.size() == 45;
    std::vector<ArchGenome> gs;
    for (std::uint64_t s = 0; s < 40; ++s) gs.push_back(random_genome({}, 1000 + s));
    ArchGenome smol;
    smol.global = {960, 2048, 40};
    smol.layers.assign(40, LayerGene{false, true, 1, 1, 64, 64, 512});
    for (int i = 0; i < 32; ++i) smol.layers[static_cast<std::size_t>(i)] = {true, true, 15, 5, 64, 64, 2560};
    gs.push_back(smol);
    for (const auto& g : gs) {
        const auto r = chip_grid_search(g, Workload{512, 256}, grid, 3);
        card = card && r.configs.size() == 45;
        ++checked;
        with_top += !r.top.empty();
        for (std::size_t i = 0; i < r.top.size(); ++i)
            for (std::size_t j = 0; j < r.top.size(); ++j) {
                if (i == j) continue;
                const auto a = r.top[i].objectives(), b = r.top[j].objectives();
                bad += oracle::dominates({a.begin(), a.end()}, {b.begin(), b.end()});
            }
    }
    return {card && bad == 0 && with_top > 0,
            fmt("grid of %zu configs; %d genomes (%d with a non-empty top-3), %d dominated pairs inside a top-K",
                grid.size(), checked, with_top, bad)};
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        std::function<Outcome()> run;
    };
    const Criterion all[] = {{"config counts", c1_counts},
                             {"encoder parameter count", c2_param_count},
                             {"encoder gradients", c3_gradients},
                             {"balanced packing", c4_packing},
                             {"NSGA sort and archive", c5_nsga},
                             {"IHA reference kernel", c6_iha},
                             {"ranking metrics", c7_metrics},
                             {"ablation direction", c8_ablation},
                             {"determinism", c9_determinism},
                             {"chip-grid contract", c10_chip_grid}};
    int failed = 0, k = 0;
    for (const auto& c : all) {
        ++k;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("[%s] %2d %-24s %s\n", o.pass ? "PASS" : "FAIL", k, c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", k - failed, k);
    return failed ? 1 : 0;
}
