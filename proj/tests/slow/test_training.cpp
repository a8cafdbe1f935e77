// Long-running training checks; a few minutes on a desktop CPU.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "ihanas/metrics.hpp"
#include "ihanas/surrogate.hpp"

using namespace ihanas;

TEST_CASE("200 epochs on 200 samples at least halve the train L1") {
    const auto c = make_synthetic_corpus(250, 3);  // 200 train rows after the 80/20 split
    REQUIRE(c.train.size() == 200u);
    TrainConfig cfg;
    cfg.epochs = 200;
    TrainReport rep;
    train_encoder(c, EncoderHyper{}, cfg, &rep);
    MESSAGE("train L1 " << rep.initial_train_l1 << " -> " << rep.train_l1.back());
    CHECK(rep.train_l1.back() < 0.5 * rep.initial_train_l1);
}

TEST_CASE("encoder ranks held-out architectures better than the flat MLP") {
    // 30 epochs rather than 200 keeps the five-seed sweep near a minute
    std::vector<double> te, tm;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto c = make_synthetic_corpus(256, seed);
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.seed = seed;
        const auto e = train_encoder(c, EncoderHyper{}, cfg);
        const auto m = mlp_baseline_train(c, cfg);
        std::vector<double> y, pe, pm;
        for (std::size_t i : c.test) {
            y.push_back(c.rows[i].val_loss);
            pe.push_back(e.predict(c.rows[i].genome));
            pm.push_back(m.predict(c.rows[i].genome));
        }
        te.push_back(kendall_tau(pe, y));
        tm.push_back(kendall_tau(pm, y));
        MESSAGE("seed " << seed << " encoder tau " << te.back() << " mlp tau " << tm.back());
    }
    std::sort(te.begin(), te.end());
    std::sort(tm.begin(), tm.end());
    CHECK(te[2] > tm[2]);
}
