#include <doctest.h>

#include "../oracles.hpp"
#include "ihanas/iha_ref.hpp"
#include "ihanas/rng.hpp"

using namespace ihanas;
using Eigen::MatrixXd;

namespace {

oracle::Mat to_mat(const MatrixXd& m) {
    oracle::Mat o(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) o[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = m(i, j);
    return o;
}

oracle::Mat cols(const MatrixXd& m, Eigen::Index from, Eigen::Index n) { return to_mat(m.middleCols(from, n)); }

// Each query head gets a private copy of its group's K/V projection.
std::vector<oracle::Head> replicated_heads(const LayerGene& g, const AttnWeights& w) {
    std::vector<oracle::Head> heads;
    const int r = g.n_h / g.n_kv;
    for (int h = 0; h < g.n_h; ++h) {
        const int grp = h / r;
        heads.push_back({cols(w.wq, h * g.d_qk, g.d_qk), cols(w.wk, grp * g.d_qk, g.d_qk),
                         cols(w.wv, grp * g.d_v, g.d_v)});
    }
    return heads;
}

double max_diff(const MatrixXd& a, const oracle::Mat& b) {
    double m = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a(i, j) - b[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]));
    return m;
}

MatrixXd random_x(Rng& r, int t, int d) {
    MatrixXd x(t, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
    return x;
}

}  // namespace

TEST_CASE("output shape") {
    Rng r(1);
    const LayerGene g{true, true, 2, 1, 3, 5, 512};
    const auto w = AttnWeights::random(g, 8, 2);
    const MatrixXd y = iha_forward(random_x(r, 4, 8), g, w, false);
    CHECK(y.rows() == 4);
    CHECK(y.cols() == 8);
}

TEST_CASE("single token attends to itself") {
    Rng r(2);
    const LayerGene g{true, true, 4, 2, 3, 2, 512};
    const auto w = AttnWeights::random(g, 6, 3);
    const MatrixXd x = random_x(r, 1, 6);
    const MatrixXd v = x * w.wv;
    MatrixXd cat(1, g.n_h * g.d_v);
    for (int h = 0; h < g.n_h; ++h) cat.middleCols(h * g.d_v, g.d_v) = v.middleCols((h / 2) * g.d_v, g.d_v);
    CHECK((iha_forward(x, g, w, true) - cat * w.wo).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matches MHA and replicated GQA oracles") {
    Rng r(3);
    for (int t = 0; t < 60; ++t) {
        const int nkv = static_cast<int>(r.uniform_int(1, 4));
        const int nh = nkv * static_cast<int>(r.uniform_int(1, 3));
        const LayerGene g{true, true, nh, nkv, static_cast<int>(r.uniform_int(1, 6)),
                          static_cast<int>(r.uniform_int(1, 6)), 512};
        const int d = static_cast<int>(r.uniform_int(2, 10));
        const int len = static_cast<int>(r.uniform_int(1, 7));
        const bool causal = r.bernoulli(0.5);
        const auto w = AttnWeights::random(g, d, r.next_u64());
        const MatrixXd x = random_x(r, len, d);
        const MatrixXd y = iha_forward(x, g, w, causal);
        CHECK(max_diff(y, oracle::mha(to_mat(x), replicated_heads(g, w), to_mat(w.wo), causal)) < 1e-10);
    }
}

TEST_CASE("head permutation equivariance") {
    Rng r(4);
    const LayerGene g{true, true, 4, 4, 3, 2, 512};
    auto w = AttnWeights::random(g, 6, 9);
    const MatrixXd x = random_x(r, 5, 6);
    const MatrixXd y = iha_forward(x, g, w, false);
    // swap heads 0 and 2 in Wq/Wk/Wv and in the matching Wo row blocks
    AttnWeights p = w;
    p.wq.middleCols(0, 3).swap(p.wq.middleCols(6, 3));
    p.wk.middleCols(0, 3).swap(p.wk.middleCols(6, 3));
    p.wv.middleCols(0, 2).swap(p.wv.middleCols(4, 2));
    p.wo.middleRows(0, 2).swap(p.wo.middleRows(4, 2));
    CHECK((iha_forward(x, g, p, false) - y).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("attn gate is an exact identity") {
    Rng r(5);
    LayerGene g{true, false, 2, 1, 3, 5, 512};
    const MatrixXd x = random_x(r, 3, 4);
    CHECK(iha_forward(x, g, AttnWeights{}, false) == x);
}

TEST_CASE("shape errors") {
    Rng r(6);
    const LayerGene g{true, true, 2, 1, 3, 5, 512};
    auto w = AttnWeights::random(g, 8, 2);
    CHECK_THROWS_AS(iha_forward(random_x(r, 4, 7), g, w, false), std::invalid_argument);
    w.wo.resize(3, 8);
    CHECK_THROWS_AS(iha_forward(random_x(r, 4, 8), g, w, false), std::invalid_argument);
}

TEST_CASE("attention rows are stochastic") {
    Rng r(7);
    const LayerGene g{true, true, 4, 2, 3, 3, 512};
    const auto w = AttnWeights::random(g, 6, 1);
    for (bool causal : {false, true}) {
        AttentionTrace tr;
        iha_forward(random_x(r, 5, 6), g, w, causal, &tr);
        REQUIRE(tr.probs.size() == 4u);
        CHECK(attention_rows_stochastic(tr.probs, causal));
        if (causal)
            for (const auto& p : tr.probs)
                for (Eigen::Index i = 0; i < p.rows(); ++i)
                    for (Eigen::Index j = i + 1; j < p.cols(); ++j) CHECK(p(i, j) == 0.0);
    }
    MatrixXd bad = MatrixXd::Constant(2, 2, 0.5);
    bad(0, 0) = -0.5;
    bad(0, 1) = 1.5;
    CHECK_FALSE(attention_rows_stochastic({bad}));
    CHECK_FALSE(attention_rows_stochastic({MatrixXd::Constant(2, 2, 0.5)}, true));
}

TEST_CASE("built-in check suite passes") {
    for (const auto& c : run_iha_checks(11, 20)) {
        INFO(c.name);
        CHECK(c.passed);
    }
}
