#include "ihanas/iha_ref.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ihanas/rng.hpp"

namespace ihanas {

AttnWeights AttnWeights::random(const LayerGene& gene, int d_model, std::uint64_t seed,
                                double scale) {
    Rng rng(seed);
    auto fill = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (Eigen::Index j = 0; j < c; ++j)
            for (Eigen::Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
        return m;
    };
    AttnWeights w;
    w.wq = fill(d_model, gene.n_h * gene.d_qk);
    w.wk = fill(d_model, gene.n_kv * gene.d_qk);
    w.wv = fill(d_model, gene.n_kv * gene.d_v);
    w.wo = fill(gene.n_h * gene.d_v, d_model);
    return w;
}

namespace {

void require(bool cond, const char* what) {
    if (!cond) throw std::invalid_argument(what);
}

void softmax_rows(Eigen::MatrixXd& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double m = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - m).exp();
        s.row(i) /= s.row(i).sum();
    }
}

}  // namespace

Eigen::MatrixXd iha_forward(const Eigen::MatrixXd& x, const LayerGene& gene, const AttnWeights& w,
                            bool causal, AttentionTrace* trace) {
    if (!gene.attn) return x;
    require(gene.n_h >= 1 && gene.n_kv >= 1 && gene.n_h % gene.n_kv == 0,
            "iha_forward: n_kv must divide n_h");
    const Eigen::Index d_model = x.cols();
    const Eigen::Index t = x.rows();
    require(w.wq.rows() == d_model && w.wq.cols() == gene.n_h * gene.d_qk, "iha_forward: Wq shape");
    require(w.wk.rows() == d_model && w.wk.cols() == gene.n_kv * gene.d_qk, "iha_forward: Wk shape");
    require(w.wv.rows() == d_model && w.wv.cols() == gene.n_kv * gene.d_v, "iha_forward: Wv shape");
    require(w.wo.rows() == gene.n_h * gene.d_v && w.wo.cols() == d_model, "iha_forward: Wo shape");

    const Eigen::MatrixXd q = x * w.wq;
    const Eigen::MatrixXd k = x * w.wk;
    const Eigen::MatrixXd v = x * w.wv;
    const double scale = 1.0 / std::sqrt(static_cast<double>(gene.d_qk));
    const double neg_inf = -std::numeric_limits<double>::infinity();

    Eigen::MatrixXd concat(t, gene.n_h * gene.d_v);
    if (trace) trace->probs.clear();
    for (int h = 1; h <= gene.n_h; ++h) {
        const int g = group_map(h, gene.n_h, gene.n_kv);
        const auto qh = q.middleCols((h - 1) * gene.d_qk, gene.d_qk);
        const auto kg = k.middleCols((g - 1) * gene.d_qk, gene.d_qk);
        const auto vg = v.middleCols((g - 1) * gene.d_v, gene.d_v);
        Eigen::MatrixXd s = (qh * kg.transpose()) * scale;
        if (causal)
            for (Eigen::Index i = 0; i < t; ++i)
                for (Eigen::Index j = i + 1; j < t; ++j) s(i, j) = neg_inf;
        softmax_rows(s);
        concat.middleCols((h - 1) * gene.d_v, gene.d_v) = s * vg;
        if (trace) trace->probs.push_back(std::move(s));
    }
    return concat * w.wo;
}

bool attention_rows_stochastic(const std::vector<Eigen::MatrixXd>& probs, bool causal) {
    for (const auto& p : probs) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            double sum = 0.0;
            for (Eigen::Index j = 0; j < p.cols(); ++j) {
                const double e = p(i, j);
                if (!(e >= 0.0)) return false;
                if (causal && j > i && e != 0.0) return false;
                sum += e;
            }
            if (std::abs(sum - 1.0) > 1e-9) return false;
        }
    }
    return true;
}

}  // namespace ihanas
