#include <doctest.h>

#include "../oracles.hpp"
#include "ihanas/hwcost.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/rng.hpp"

using namespace ihanas;

namespace {

LayerProfile prof(std::int64_t w, std::int64_t kv, std::int64_t o, std::int64_t a) {
    LayerProfile p;
    p.weight_bytes = w;
    p.kv_bytes_per_token = kv;
    p.ops = o;
    p.gemm_ops = o;
    p.act_bytes = a;
    return p;
}

// 1 core, 1 KiB weights, 1 KiB KV, context 4, 512 B scratchpad
ChipTemplate tiny_chip() {
    ChipTemplate c;
    c.n_dxt = 1;
    c.n_vac = 1;
    c.w_core_kb = 1;
    c.k_core_kb = 1;
    c.max_context = 4;
    c.scratchpad_bytes = 512;
    return c;
}

ArchGenome genome_with(std::vector<LayerGene> active) {
    ArchGenome g;
    g.layers.assign(40, LayerGene{});
    for (std::size_t i = 0; i < active.size(); ++i) {
        g.layers[i] = active[i];
        g.layers[i].mask = true;
    }
    return g;
}

}  // namespace

TEST_CASE("profile_layer") {
    GlobalConfig gc;
    LayerGene l{true, true, 6, 3, 64, 96, 1536};
    const auto p = profile_layer(l, gc, 384);
    CHECK(p.kv_bytes_per_token == 480);
    CHECK(p.weight_bytes == layer_weight_count(l, 768));
    CHECK(p.attn_ops == 6LL * 160 * 384);
    CHECK(p.ops == p.weight_bytes + p.attn_ops);
    CHECK(p.act_bytes == 2 * 1536);
    LayerGene big = l;
    big.d_mlp = 3072;
    const auto q = profile_layer(big, gc, 384);
    CHECK(q.weight_bytes - p.weight_bytes == 2LL * 768 * 1536);
    CHECK(q.ops - p.ops == 2LL * 768 * 1536);
    l.attn = false;
    CHECK(profile_layer(l, gc, 384).kv_bytes_per_token == 0);
    l.mask = false;
    CHECK_THROWS_AS(profile_layer(l, gc, 384), std::domain_error);
}

TEST_CASE("substrate roofline regimes") {
    const ArchGenome g = genome_with({LayerGene{true, true, 8, 2, 128, 128, 2048}});
    const Workload wl;
    SubstrateSpec mem = substrate_preset("gemmini");
    mem.sram_bytes = 1;            // no residency
    mem.dram_bw_bytes_per_s = 1e6; // hopelessly memory bound
    SubstrateSpec mem2 = mem;
    mem2.macs *= 2;
    CHECK(substrate_cost(g, mem2, wl).tpot_ms == substrate_cost(g, mem, wl).tpot_ms);

    SubstrateSpec cmp = substrate_preset("gemmini");
    cmp.dram_bw_bytes_per_s = 1e18;
    SubstrateSpec cmp2 = cmp;
    cmp2.macs *= 2;
    CHECK(substrate_cost(g, cmp2, wl).tpot_ms == doctest::Approx(substrate_cost(g, cmp, wl).tpot_ms / 2));
}

TEST_CASE("substrate outputs grow with every added layer") {
    Rng r(12);
    for (const auto& name : substrate_names()) {
        const auto spec = substrate_preset(name);
        for (int t = 0; t < 20; ++t) {
            ArchGenome g = random_genome({}, r.next_u64());
            std::size_t off = 0;
            while (off < g.layers.size() && g.layers[off].mask) ++off;
            if (off == g.layers.size()) continue;
            const auto before = substrate_cost(g, spec, {});
            g.layers[off].mask = true;
            const auto after = substrate_cost(g, spec, {});
            CHECK(after.e_tok_uj > before.e_tok_uj);
            CHECK(after.ttft_ms > before.ttft_ms);
            CHECK(after.tpot_ms > before.tpot_ms);
            CHECK(before.e_tok_uj > 0);
            CHECK(substrate_cost(g, spec, {}).tpot_ms == after.tpot_ms);
        }
    }
}

TEST_CASE("substrates disagree on some genome pair") {
    std::vector<std::vector<HwMetrics>> m;
    std::vector<SubstrateSpec> specs;
    for (const auto& n : substrate_names()) specs.push_back(substrate_preset(n));
    for (std::uint64_t s = 0; s < 60; ++s) {
        const ArchGenome g = random_genome({}, s);
        std::vector<HwMetrics> row;
        for (const auto& sp : specs) row.push_back(substrate_cost(g, sp, {}));
        m.push_back(row);
    }
    auto vec = [](const HwMetrics& h) { return std::vector<double>{h.e_tok_uj, h.ttft_ms, h.tpot_ms}; };
    bool found = false;
    for (std::size_t a = 0; a < m.size() && !found; ++a)
        for (std::size_t b = 0; b < m.size() && !found; ++b)
            for (std::size_t s1 = 0; s1 < specs.size() && !found; ++s1)
                for (std::size_t s2 = 0; s2 < specs.size() && !found; ++s2)
                    found = oracle::dominates(vec(m[a][s1]), vec(m[b][s1])) &&
                            oracle::dominates(vec(m[b][s2]), vec(m[a][s2]));
    CHECK(found);
}

TEST_CASE("substrate spec json round trip and validation") {
    const auto s = substrate_preset("flat");
    const auto back = substrate_from_json(to_json(s));
    CHECK(to_json(back) == to_json(s));
    auto j = to_json(s);
    j["dataflow"] = "diagonal";
    CHECK_THROWS_AS(substrate_from_json(j), std::invalid_argument);
    j = to_json(s);
    j["macs"] = 0;
    CHECK_THROWS_AS(substrate_from_json(j), std::invalid_argument);
    CHECK_THROWS_AS(substrate_preset("tpu"), std::invalid_argument);
    CHECK_THROWS_AS(make_backend("cloud"), std::invalid_argument);
    CHECK(make_backend("analytic:dxe")->name() == "analytic:dxe");
}

TEST_CASE("greedy partition examples") {
    const std::vector<LayerProfile> ls(3, prof(40, 10, 30, 10));
    const ChipLimits lim{100, 100, 100, 1};
    CHECK(*greedy_contiguous_partition(ls, lim, 60) == Partition{{0, 1}, {2}});
    CHECK(*greedy_contiguous_partition(ls, lim, 30) == Partition{{0}, {1}, {2}});
    const std::vector<LayerProfile> fat{prof(150, 0, 1, 1)};
    CHECK_FALSE(greedy_contiguous_partition(fat, lim, 60).has_value());
    CHECK_FALSE(greedy_contiguous_partition(ls, lim, 29).has_value());
}

TEST_CASE("greedy stage count never grows with the budget") {
    Rng r(21);
    for (int t = 0; t < 100; ++t) {
        std::vector<LayerProfile> ls;
        for (int i = 0; i < 8; ++i)
            ls.push_back(prof(r.uniform_int(1, 60), r.uniform_int(0, 30), r.uniform_int(1, 50), 1));
        const ChipLimits lim{100, 100, 100, 1};
        std::size_t prev = 1000;
        for (std::int64_t b = 50; b <= 400; b += 10) {
            const auto p = greedy_contiguous_partition(ls, lim, b);
            REQUIRE(p.has_value());
            CHECK(p->size() <= prev);
            prev = p->size();
        }
    }
}

TEST_CASE("balanced pack examples") {
    ChipTemplate c = tiny_chip();
    c.max_context = 1;
    const std::vector<LayerProfile> ls(3, prof(10, 1, 30, 10));
    auto p = balanced_contiguous_pack(ls, c, 8);
    REQUIRE(p);
    CHECK(p->n_chips() == 3);
    CHECK(p->bottleneck_ops() == 30);
    CHECK(p->budget == 30);
    p = balanced_contiguous_pack(ls, c, 2);
    REQUIRE(p);
    CHECK(p->partition() == Partition{{0, 1}, {2}});
    CHECK(p->bottleneck_ops() == 60);
    CHECK(p->budget == 60);
    CHECK_FALSE(balanced_contiguous_pack(std::vector<LayerProfile>{prof(5000, 0, 1, 1)}, c, 8));
}

TEST_CASE("balanced pack matches the exhaustive partition oracle") {
    Rng r(31);
    const ChipTemplate c = tiny_chip();
    const auto lim = ChipLimits::of(c);
    int feasible = 0;
    for (int t = 0; t < 300; ++t) {
        const auto n = static_cast<std::size_t>(r.uniform_int(1, 10));
        std::vector<LayerProfile> ls;
        std::vector<oracle::Layer> ol;
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = prof(r.uniform_int(1, 700), r.uniform_int(0, 150), r.uniform_int(1, 100),
                                r.uniform_int(1, 540));
            ls.push_back(p);
            ol.push_back({p.weight_bytes, p.kv_bytes_per_token * lim.context, p.ops, p.act_bytes});
        }
        const int cap = static_cast<int>(r.uniform_int(1, static_cast<std::int64_t>(n)));
        const auto got = balanced_contiguous_pack(ls, c, cap);
        const auto want = oracle::best_bottleneck(ol, lim.weight, lim.kv, lim.scratchpad, cap);
        REQUIRE(got.has_value() == want.has_value());
        if (!got) continue;
        ++feasible;
        CHECK(got->bottleneck_ops() == *want);
        CHECK(got->n_chips() <= cap);
        // stages contiguous, ordered, covering and within limits
        std::size_t next = 0;
        for (const auto& s : got->stages) {
            CHECK(s.first == next);
            next = s.last + 1;
            CHECK(s.weight_bytes <= lim.weight);
            CHECK(s.kv_bytes <= lim.kv);
            CHECK(s.ops <= got->budget);
        }
        CHECK(next == n);
    }
    CHECK(feasible > 100);
}

TEST_CASE("ring simulation") {
    ChipTemplate c = tiny_chip();
    c.max_context = 1;
    const Workload wl{256, 256};
    const std::vector<LayerProfile> ls(4, prof(10, 1, 1000, 10));
    const auto one = balanced_contiguous_pack(ls, c, 1);
    REQUIRE(one);
    const double rate = c.macs_per_second();
    auto m1 = ring_simulate(*one, wl);
    CHECK(m1.ttft_ms == doctest::Approx(256 * 4000 / rate * 1e3));
    CHECK(m1.tpot_ms == doctest::Approx(4000 / rate * 1e3));

    const auto two = balanced_contiguous_pack(ls, c, 2);
    REQUIRE(two);
    REQUIRE(two->n_chips() == 2);
    const auto m2 = ring_simulate(*two, wl);
    CHECK(m2.tpot_ms - c.hop_latency_s * 1e3 == doctest::Approx(m1.tpot_ms / 2));

    // op energy component doubles with e_mac
    RingPlan p = *one;
    const double base = ring_simulate(p, wl).e_tok_uj;
    p.chip.e_mac_j *= 2;
    const double op_part = 4000 * c.e_mac_j * 1e6;
    CHECK(ring_simulate(p, wl).e_tok_uj - base == doctest::Approx(op_part));
}

TEST_CASE("chip grid co-search") {
    ChipGrid grid;
    CHECK(grid.size() == 45u);
    const Workload wl{512, 256};
    for (std::uint64_t s = 0; s < 4; ++s) {
        const ArchGenome g = random_genome({}, s);
        const auto res = chip_grid_search(g, wl, grid, 3);
        CHECK(res.configs.size() == 45u);
        CHECK(res.top.size() <= 3u);
        for (const auto& a : res.top)
            for (const auto& b : res.top) {
                const auto oa = a.objectives(), ob = b.objectives();
                CHECK_FALSE(oracle::dominates({oa.begin(), oa.end()}, {ob.begin(), ob.end()}));
            }
        // retained pairs are non-dominated among all feasible configurations too
        for (const auto& a : res.top)
            for (const auto& f : res.feasible) {
                const auto oa = a.objectives(), of = f.objectives();
                CHECK_FALSE(oracle::dominates({of.begin(), of.end()}, {oa.begin(), oa.end()}));
            }
    }
    // one layer too wide for any template
    ArchGenome huge = genome_with({LayerGene{true, true, 16, 16, 512, 512, 4096}});
    huge.global.d_model = 65536;
    ChipGrid small = grid;
    small.max_cores_per_chip = 16;
    const auto none = chip_grid_search(huge, wl, small, 3);
    CHECK(none.top.empty());
    CHECK_FALSE(RingBackend(small).evaluate(huge, wl).feasible);
}

TEST_CASE("size_chip picks the smallest power-of-two core count") {
    ChipTemplate c;
    c.w_core_kb = 24;
    c.max_context = 768;
    const std::vector<LayerProfile> ls{prof(24 * 1024 * 5, 0, 1, 1)};
    const auto chip = size_chip(c, ls, 4096);
    REQUIRE(chip);
    CHECK(chip->cores() == 8);
    CHECK(chip->n_vac >= chip->n_dxt);
    CHECK_FALSE(size_chip(c, ls, 4));
}

TEST_CASE("chip grid json round trip") {
    ChipGrid g;
    g.n_mac = {16, 64};
    g.base.hop_latency_s = 2e-6;
    const auto back = chip_grid_from_json(to_json(g));
    CHECK(back.n_mac == g.n_mac);
    CHECK(back.base.hop_latency_s == 2e-6);
    CHECK(back.size() == 30u);
}
