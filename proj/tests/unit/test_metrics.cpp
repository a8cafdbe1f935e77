#include <doctest.h>

#include "../oracles.hpp"
#include "ihanas/metrics.hpp"
#include "ihanas/rng.hpp"

using namespace ihanas;
using V = std::vector<double>;

namespace {

V draw(Rng& r, std::size_t n, bool ties) {
    V v(n);
    for (auto& x : v) x = ties ? static_cast<double>(r.uniform_int(0, 5)) : r.normal();
    return v;
}

}  // namespace

TEST_CASE("kendall tau examples") {
    const V a{1, 2, 3, 4};
    CHECK(kendall_tau(a, a) == doctest::Approx(1.0));
    CHECK(kendall_tau(a, V{4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(kendall_tau(a, V{1, 3, 2, 4}) == doctest::Approx(2.0 / 3.0));
    CHECK_THROWS_AS(kendall_tau(a, V{1, 2}), std::domain_error);
    CHECK_THROWS_AS(kendall_tau(V{1}, V{1}), std::domain_error);
}

TEST_CASE("spearman rho examples") {
    CHECK(spearman_rho(V{1, 2, 3}, V{1, 2, 3}) == doctest::Approx(1.0));
    CHECK(spearman_rho(V{1, 2, 3}, V{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(spearman_rho(V{1, 2, 3}, V{1, 3, 2}) == doctest::Approx(0.5));
    CHECK(midranks(V{5, 1, 5, 3}) == V{3.5, 1, 3.5, 2});
}

TEST_CASE("k_at_x examples") {
    V truth(100), pred(100);
    for (int i = 0; i < 100; ++i) truth[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i)] = i;
    CHECK(k_at_x(pred, truth, 0.05) == 5);
    pred[0] = 1000;
    CHECK(k_at_x(pred, truth, 0.01) == 100);
    CHECK(k_at_x(V{0.2, 0.1, 0.3, 0.4}, V{1, 2, 3, 4}, 0.5) == 2);
}

TEST_CASE("mae_at_top examples") {
    const V truth{1, 2, 3, 4};
    CHECK(mae_at_top(truth, truth, 0.5) == 0.0);
    CHECK(mae_at_top(V{1.5, 2.5, 3.5, 4.5}, truth, 0.5) == doctest::Approx(0.5));
    CHECK(mae_at_top(V{1.1, 2.3, 9, 9}, truth, 0.5) == doctest::Approx(0.2));
}

TEST_CASE("ranking metrics match brute force") {
    Rng r(2024);
    for (int t = 0; t < 200; ++t) {
        const auto n = static_cast<std::size_t>(r.uniform_int(2, 50));
        const bool ties = t % 3 == 0;
        const V p = draw(r, n, ties), q = draw(r, n, ties);
        CHECK(std::abs(kendall_tau(p, q) - oracle::tau_b(p, q)) < 1e-12);
        CHECK(std::abs(spearman_rho(p, q) - oracle::rho(p, q)) < 1e-12);
        for (double x : {0.01, 0.05, 0.2, 0.5, 1.0}) {
            CHECK(k_at_x(p, q, x) == oracle::k_at(p, q, x));
            CHECK(mae_at_top(p, q, x) == oracle::mae_top(p, q, x));
        }
    }
}

TEST_CASE("tau and rho are invariant under increasing transforms") {
    Rng r(5);
    for (int t = 0; t < 50; ++t) {
        const V p = draw(r, 30, false), q = draw(r, 30, false);
        V e(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) e[i] = std::exp(3 * p[i]) + 7;
        CHECK(kendall_tau(e, q) == doctest::Approx(kendall_tau(p, q)).epsilon(1e-12));
        CHECK(spearman_rho(e, q) == doctest::Approx(spearman_rho(p, q)).epsilon(1e-12));
    }
}

TEST_CASE("k_at_x does not improve when a top item is swapped with a bottom one") {
    Rng r(8);
    for (int t = 0; t < 100; ++t) {
        V truth = draw(r, 40, false);
        V pred = truth;
        for (auto& x : pred) x += 0.3 * r.normal();
        const auto before = k_at_x(pred, truth, 0.05);
        // put the predicted value of the true best item at the worst position
        std::size_t best = 0, worst = 0;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (truth[i] < truth[best]) best = i;
            if (pred[i] > pred[worst]) worst = i;
        }
        std::swap(pred[best], pred[worst]);
        CHECK(k_at_x(pred, truth, 0.05) >= before);
    }
}

TEST_CASE("pareto_front examples and oracle") {
    const std::vector<V> small{{1, 2}, {2, 1}, {2, 2}};
    CHECK(pareto_front(small) == std::vector<std::size_t>{0, 1});
    CHECK(pareto_front(std::vector<V>{{3, 3}}) == std::vector<std::size_t>{0});
    Rng r(11);
    for (int t = 0; t < 100; ++t) {
        std::vector<V> pts(50, V(4));
        for (auto& p : pts)
            for (auto& x : p) x = static_cast<double>(r.uniform_int(0, 9));
        const auto f = pareto_front(pts);
        CHECK(f == oracle::front(pts));
        for (std::size_t i : f)
            for (std::size_t j : f) CHECK_FALSE(dominates(pts[i], pts[j]));
        // a dominated extra point leaves the front unchanged
        V worse = pts[f[0]];
        for (auto& x : worse) x += 1;
        auto more = pts;
        more.push_back(worse);
        CHECK(pareto_front(more) == f);
    }
}

TEST_CASE("constraint domination") {
    ObjectiveVector ok{3.0, 1, 1, 1, true, 0.0};
    ObjectiveVector bad{1.0, 0.1, 0.1, 0.1, false, 0.5};
    ObjectiveVector worse{1.0, 0.1, 0.1, 0.1, false, 0.9};
    CHECK(constraint_dominates(ok, bad));
    CHECK_FALSE(constraint_dominates(bad, ok));
    CHECK(constraint_dominates(bad, worse));
    CHECK_FALSE(constraint_dominates(worse, bad));
    CHECK(pareto_front(std::vector<ObjectiveVector>{bad, ok, worse}) == std::vector<std::size_t>{1});
}

TEST_CASE("crowding distance") {
    const auto cd = crowding_distance({{0, 4}, {1, 2}, {2, 1}, {4, 0}});
    CHECK(std::isinf(cd[0]));
    CHECK(std::isinf(cd[3]));
    // (2 - 0) / 4 + (4 - 1) / 4
    CHECK(cd[1] == doctest::Approx(1.25));
    CHECK(cd[2] == doctest::Approx((4.0 - 1.0) / 4 + (2.0 - 0.0) / 4));
    const auto two = crowding_distance({{1, 1}, {2, 0}});
    CHECK(std::isinf(two[0]));
    CHECK(std::isinf(two[1]));
}

TEST_CASE("hypervolume examples") {
    CHECK(hypervolume_2d({{1, 1}}, {2, 2}).value == doctest::Approx(1.0));
    CHECK(hypervolume_2d({{1, 2}, {2, 1}}, {3, 3}).value == doctest::Approx(3.0));
    CHECK(hypervolume_2d({{1, 2}, {2, 1}, {2, 2}}, {3, 3}).value == doctest::Approx(3.0));
    const auto h = hypervolume_2d({{1, 1}, {5, 0}}, {2, 2});
    CHECK(h.value == doctest::Approx(1.0));
    CHECK(h.excluded == 1);
}

TEST_CASE("hypervolume matches union area and is monotone") {
    Rng r(3);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::array<double, 2>> pts;
        double prev = 0;
        for (int k = 0; k < 12; ++k) {
            pts.push_back({r.uniform() * 10, r.uniform() * 10});
            const double hv = hypervolume_2d(pts, {9, 9}).value;
            CHECK(hv >= prev - 1e-12);
            CHECK(hv == doctest::Approx(oracle::union_area(pts, {9, 9})).epsilon(1e-9));
            prev = hv;
        }
    }
}
