// Randomized property suite for iha_forward. The comparison kernel here is a
// plain scalar implementation with one K/V projection per head; it shares no
// code with the Eigen kernel beyond the weight containers.
#include <algorithm>
#include <cmath>
#include <numeric>

#include "ihanas/iha_ref.hpp"
#include "ihanas/rng.hpp"

namespace ihanas {

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_rows(const Eigen::MatrixXd& m) {
    Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

// Columns [c0, c0 + n) of m.
Mat cols(const Mat& m, std::size_t c0, std::size_t n) {
    Mat out(m.size(), std::vector<double>(n));
    for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) out[i][j] = m[i][c0 + j];
    return out;
}

Mat matmul(const Mat& a, const Mat& b) {
    const std::size_t n = a.size(), k = b.size(), m = b.empty() ? 0 : b[0].size();
    Mat out(n, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i][p] * b[p][j];
            out[i][j] = s;
        }
    return out;
}

struct HeadWeights {
    Mat wq, wk, wv;  // d_model x d_qk, d_model x d_qk, d_model x d_v
};

// Multi-head attention with independent K/V per head; wo maps the concatenated
// head outputs back to d_model.
Mat naive_multihead(const Mat& x, const std::vector<HeadWeights>& heads, const Mat& wo, bool causal) {
    const std::size_t t = x.size();
    Mat concat(t);
    for (const auto& hw : heads) {
        const Mat q = matmul(x, hw.wq), k = matmul(x, hw.wk), v = matmul(x, hw.wv);
        const double scale = 1.0 / std::sqrt(static_cast<double>(hw.wq[0].size()));
        for (std::size_t i = 0; i < t; ++i) {
            const std::size_t limit = causal ? i + 1 : t;
            std::vector<double> s(limit);
            double mx = -INFINITY;
            for (std::size_t j = 0; j < limit; ++j) {
                double dot = 0.0;
                for (std::size_t p = 0; p < q[i].size(); ++p) dot += q[i][p] * k[j][p];
                s[j] = dot * scale;
                mx = std::max(mx, s[j]);
            }
            double z = 0.0;
            for (auto& e : s) z += (e = std::exp(e - mx));
            for (std::size_t c = 0; c < v[0].size(); ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < limit; ++j) acc += s[j] / z * v[j][c];
                concat[i].push_back(acc);
            }
        }
    }
    return matmul(concat, wo);
}

// Expands grouped K/V weights into one K/V projection per query head.
std::vector<HeadWeights> replicate_groups(const LayerGene& g, const AttnWeights& w) {
    const Mat wq = to_rows(w.wq), wk = to_rows(w.wk), wv = to_rows(w.wv);
    const std::size_t ratio = static_cast<std::size_t>(g.n_h / g.n_kv);
    std::vector<HeadWeights> heads;
    for (std::size_t h = 0; h < static_cast<std::size_t>(g.n_h); ++h) {
        const std::size_t grp = h / ratio;
        heads.push_back({cols(wq, h * g.d_qk, g.d_qk), cols(wk, grp * g.d_qk, g.d_qk),
                         cols(wv, grp * g.d_v, g.d_v)});
    }
    return heads;
}

double max_abs_diff(const Eigen::MatrixXd& a, const Mat& b) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) e = std::max(e, std::abs(a(i, j) - b[i][j]));
    return e;
}

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.normal();
    return m;
}

LayerGene attn_gene(int n_h, int n_kv, int d_qk, int d_v) {
    LayerGene g;
    g.mask = true;
    g.attn = true;
    g.n_h = n_h;
    g.n_kv = n_kv;
    g.d_qk = d_qk;
    g.d_v = d_v;
    return g;
}

}  // namespace

std::vector<CheckResult> run_iha_checks(std::uint64_t seed, int draws) {
    constexpr double tol = 1e-10;
    Rng rng(seed);
    CheckResult shape{"output shape is T x d_model", true, 0.0};
    CheckResult mha{"MHA equivalence", true, 0.0};
    CheckResult gqa{"replicated-GQA equivalence", true, 0.0};
    CheckResult perm{"head permutation equivariance", true, 0.0};
    CheckResult gate{"attn=0 identity gate", true, 0.0};
    CheckResult rows{"attention rows stochastic (causal zeros)", true, 0.0};

    for (int d = 0; d < draws; ++d) {
        const bool causal = rng.bernoulli(0.5);
        const int t = static_cast<int>(rng.uniform_int(1, 6));

        // MHA: n_kv = n_h and d_qk = d_v = d_model / n_h.
        {
            const int n_h = static_cast<int>(rng.uniform_int(1, 4));
            const int d_h = static_cast<int>(rng.uniform_int(1, 4));
            const int d_model = n_h * d_h;
            const LayerGene g = attn_gene(n_h, n_h, d_h, d_h);
            const auto w = AttnWeights::random(g, d_model, rng.next_u64());
            const Eigen::MatrixXd x = random_matrix(rng, t, d_model);
            const auto y = iha_forward(x, g, w, causal);
            const double e = max_abs_diff(y, naive_multihead(to_rows(x), replicate_groups(g, w),
                                                             to_rows(w.wo), causal));
            mha.max_error = std::max(mha.max_error, e);
            mha.passed = mha.passed && e <= tol;
        }

        // General IHA shape against the replicated-GQA reference.
        const int n_kv = static_cast<int>(rng.uniform_int(1, 4));
        const int n_h = n_kv * static_cast<int>(rng.uniform_int(1, 4));
        const int d_qk = static_cast<int>(rng.uniform_int(1, 6));
        const int d_v = static_cast<int>(rng.uniform_int(1, 6));
        const int d_model = static_cast<int>(rng.uniform_int(2, 8));
        const LayerGene g = attn_gene(n_h, n_kv, d_qk, d_v);
        const auto w = AttnWeights::random(g, d_model, rng.next_u64());
        const Eigen::MatrixXd x = random_matrix(rng, t, d_model);
        AttentionTrace trace;
        const auto y = iha_forward(x, g, w, causal, &trace);

        if (y.rows() != t || y.cols() != d_model) shape.passed = false;

        const double eg = max_abs_diff(y, naive_multihead(to_rows(x), replicate_groups(g, w),
                                                          to_rows(w.wo), causal));
        gqa.max_error = std::max(gqa.max_error, eg);
        gqa.passed = gqa.passed && eg <= tol;

        if (!attention_rows_stochastic(trace.probs, causal)) rows.passed = false;

        // Permute groups, and heads within each group, carrying Wo row blocks along.
        {
            const int ratio = n_h / n_kv;
            std::vector<int> gperm(static_cast<std::size_t>(n_kv));
            std::iota(gperm.begin(), gperm.end(), 0);
            rng.shuffle(gperm.begin(), gperm.end());
            AttnWeights pw = w;
            for (int ng = 0; ng < n_kv; ++ng) {
                const int og = gperm[static_cast<std::size_t>(ng)];
                pw.wk.middleCols(ng * d_qk, d_qk) = w.wk.middleCols(og * d_qk, d_qk);
                pw.wv.middleCols(ng * d_v, d_v) = w.wv.middleCols(og * d_v, d_v);
                std::vector<int> hperm(static_cast<std::size_t>(ratio));
                std::iota(hperm.begin(), hperm.end(), 0);
                rng.shuffle(hperm.begin(), hperm.end());
                for (int r = 0; r < ratio; ++r) {
                    const int nh = ng * ratio + r;
                    const int oh = og * ratio + hperm[static_cast<std::size_t>(r)];
                    pw.wq.middleCols(nh * d_qk, d_qk) = w.wq.middleCols(oh * d_qk, d_qk);
                    pw.wo.middleRows(nh * d_v, d_v) = w.wo.middleRows(oh * d_v, d_v);
                }
            }
            const double ep = (iha_forward(x, g, pw, causal) - y).cwiseAbs().maxCoeff();
            perm.max_error = std::max(perm.max_error, ep);
            perm.passed = perm.passed && ep <= tol;
        }

        LayerGene off = g;
        off.attn = false;
        if (iha_forward(x, off, w, causal) != x) gate.passed = false;
    }
    return {shape, mha, gqa, perm, gate, rows};
}

}  // namespace ihanas
