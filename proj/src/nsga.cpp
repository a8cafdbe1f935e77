#include <algorithm>
#include <numeric>

#include "ihanas/search.hpp"

namespace ihanas {

std::vector<std::vector<std::size_t>> fast_nondominated_sort(const std::vector<ObjectiveVector>& pts) {
    const std::size_t n = pts.size();
    std::vector<std::vector<std::size_t>> dominated(n);
    std::vector<std::size_t> count(n, 0);
    std::vector<std::vector<std::size_t>> fronts;
    std::vector<std::size_t> current;
    for (std::size_t p = 0; p < n; ++p) {
        for (std::size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (constraint_dominates(pts[p], pts[q])) dominated[p].push_back(q);
            else if (constraint_dominates(pts[q], pts[p])) ++count[p];
        }
        if (count[p] == 0) current.push_back(p);
    }
    while (!current.empty()) {
        std::vector<std::size_t> next;
        for (std::size_t p : current)
            for (std::size_t q : dominated[p])
                if (--count[q] == 0) next.push_back(q);
        std::sort(next.begin(), next.end());
        fronts.push_back(std::move(current));
        current = std::move(next);
    }
    return fronts;
}

namespace {

std::vector<double> front_crowding(const std::vector<ObjectiveVector>& pts, const std::vector<std::size_t>& front) {
    std::vector<std::vector<double>> v;
    v.reserve(front.size());
    for (std::size_t i : front) {
        const auto a = pts[i].values();
        v.emplace_back(a.begin(), a.end());
    }
    return crowding_distance(v);
}

}  // namespace

RankCrowding rank_and_crowding(const std::vector<ObjectiveVector>& pts) {
    RankCrowding rc;
    rc.rank.assign(pts.size(), 0);
    rc.crowding.assign(pts.size(), 0.0);
    const auto fronts = fast_nondominated_sort(pts);
    for (std::size_t f = 0; f < fronts.size(); ++f) {
        const auto cd = front_crowding(pts, fronts[f]);
        for (std::size_t k = 0; k < fronts[f].size(); ++k) {
            rc.rank[fronts[f][k]] = f;
            rc.crowding[fronts[f][k]] = cd[k];
        }
    }
    return rc;
}

std::vector<std::size_t> nsga_survival(const std::vector<ObjectiveVector>& pool, std::size_t n) {
    std::vector<std::size_t> out;
    for (const auto& front : fast_nondominated_sort(pool)) {
        if (out.size() + front.size() <= n) {
            out.insert(out.end(), front.begin(), front.end());
            if (out.size() == n) break;
            continue;
        }
        const auto cd = front_crowding(pool, front);
        std::vector<std::size_t> order(front.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cd[a] > cd[b]; });
        for (std::size_t k = 0; out.size() < n; ++k) out.push_back(front[order[k]]);
        break;
    }
    return out;
}

std::vector<std::size_t> tournament_select(const std::vector<ObjectiveVector>& pop, const std::vector<double>& crowding,
                                           std::size_t pool_size, Rng& rng) {
    std::vector<std::size_t> pool;
    pool.reserve(pool_size);
    for (std::size_t s = 0; s < pool_size; ++s) {
        const std::size_t a = rng.index(pop.size());
        const std::size_t b = rng.index(pop.size());
        std::size_t win = a;
        if (constraint_dominates(pop[b], pop[a])) win = b;
        else if (!constraint_dominates(pop[a], pop[b]) && crowding[b] > crowding[a]) win = b;
        pool.push_back(win);
    }
    return pool;
}

ArchGenome crossover_at(const ArchGenome& p1, const ArchGenome& p2, std::size_t cut) {
    ArchGenome c = p1;
    for (std::size_t i = cut; i < c.layers.size() && i < p2.layers.size(); ++i) c.layers[i] = p2.layers[i];
    return c;
}

ArchGenome crossover(const ArchGenome& p1, const ArchGenome& p2, const SpaceRanges& r, Rng& rng) {
    const std::size_t l = p1.layers.size();
    if (l < 2) return repair(p1, r);
    const auto cut = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(l) - 1));
    return repair(crossover_at(p1, p2, cut), r);
}

void mutate_delete(ArchGenome& g, std::size_t slot) {
    g.layers[slot].mask = !g.layers[slot].mask;
    if (g.active_layers() == 0) g.layers[slot].mask = true;
}

void mutate_duplicate(ArchGenome& g, std::size_t from, std::size_t to) { g.layers[to] = g.layers[from]; }

namespace {

std::vector<std::size_t> active_slots(const ArchGenome& g) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < g.layers.size(); ++i)
        if (g.layers[i].mask) idx.push_back(i);
    return idx;
}

}  // namespace

void mutate_rotate(ArchGenome& g, std::size_t shift) {
    const auto idx = active_slots(g);
    if (idx.size() < 2) return;
    std::vector<LayerGene> seq;
    for (std::size_t i : idx) seq.push_back(g.layers[i]);
    std::rotate(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(shift % seq.size()), seq.end());
    for (std::size_t k = 0; k < idx.size(); ++k) g.layers[idx[k]] = seq[k];
}

void mutate_reflect(ArchGenome& g) {
    const auto idx = active_slots(g);
    for (std::size_t a = 0, b = idx.size(); a + 1 < b; ++a, --b) std::swap(g.layers[idx[a]], g.layers[idx[b - 1]]);
}

void mutate_perturb(ArchGenome& g, std::size_t slot, int field, int direction, const SpaceRanges& r) {
    LayerGene& l = g.layers[slot];
    switch (field) {
        case 0: l.n_h = r.n_h.snap(l.n_h + direction * r.n_h.step); break;
        case 1: l.n_kv = r.n_kv.snap(l.n_kv + direction * r.n_kv.step); break;
        case 2: l.d_qk = r.d_qk.snap(l.d_qk + direction * r.d_qk.step); break;
        case 3: l.d_v = r.d_v.snap(l.d_v + direction * r.d_v.step); break;
        case 4: l.d_mlp = r.d_mlp.snap(l.d_mlp + direction * r.d_mlp.step); break;
        default: throw std::invalid_argument("mutate_perturb: field must be in [0, 4]");
    }
}

ArchGenome mutate(ArchGenome g, const SpaceRanges& r, const MutationRates& rates, Rng& rng, std::string* tags) {
    auto tag = [&](const char* t) {
        if (tags) *tags += t;
    };
    const std::size_t l = g.layers.size();
    if (rng.bernoulli(rates.deletion)) {
        const auto idx = active_slots(g);
        if (!idx.empty()) mutate_delete(g, idx[rng.index(idx.size())]);
        tag("+del");
    }
    if (rng.bernoulli(rates.duplication) && l > 1) {
        const auto from = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(l) - 2));
        const auto to = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(from) + 1,
                                                                 static_cast<std::int64_t>(l) - 1));
        mutate_duplicate(g, from, to);
        tag("+dup");
    }
    if (rng.bernoulli(rates.rotation)) {
        const int n = g.active_layers();
        if (rng.bernoulli(0.5)) {
            if (n > 1) mutate_rotate(g, static_cast<std::size_t>(rng.uniform_int(1, n - 1)));
            tag("+rot");
        } else {
            mutate_reflect(g);
            tag("+ref");
        }
    }
    if (rng.bernoulli(rates.perturbation)) {
        const auto idx = active_slots(g);
        if (!idx.empty()) {
            const std::size_t slot = idx[rng.index(idx.size())];
            const int field = static_cast<int>(rng.index(5));
            const int dir = rng.bernoulli(0.5) ? 1 : -1;
            mutate_perturb(g, slot, field, dir, r);
        }
        tag("+pert");
    }
    return repair(std::move(g), r);
}

void ParetoArchive::update(const std::vector<Individual>& candidates) {
    for (const auto& c : candidates) {
        if (!c.obj.feasible) continue;
        if (std::any_of(members_.begin(), members_.end(), [&](const Individual& m) { return m.id == c.id; }))
            continue;
        const auto cv = c.obj.values();
        bool beaten = false;
        for (const auto& m : members_) {
            const auto mv = m.obj.values();
            if (dominates(mv, cv)) {
                beaten = true;
                break;
            }
        }
        if (beaten) continue;
        std::erase_if(members_, [&](const Individual& m) {
            const auto mv = m.obj.values();
            return dominates(cv, mv);
        });
        members_.push_back(c);
    }
}

}  // namespace ihanas
