#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ihanas/rng.hpp"
#include "ihanas/surrogate.hpp"

namespace ihanas {

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

constexpr double kLnEps = 1e-5;

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)); }

// d/dx x * Phi(x), given Phi(x)
double gelu_grad(double x, double cdf) {
    return cdf + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

struct BlockOffsets {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct Offsets {
    std::size_t lift_w, lift_b, pos, head_w, head_b;
    std::vector<BlockOffsets> blocks;
};

Offsets offsets_of(const std::vector<TensorSpec>& layout, int n_blocks) {
    auto find = [&](const std::string& name) {
        for (const auto& t : layout)
            if (t.name == name) return t.offset;
        throw std::logic_error("missing tensor " + name);
    };
    Offsets o;
    o.lift_w = find("lift.w");
    o.lift_b = find("lift.b");
    o.pos = find("pos");
    o.head_w = find("head.w");
    o.head_b = find("head.b");
    for (int b = 0; b < n_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        o.blocks.push_back({find(p + "ln1.g"), find(p + "ln1.b"), find(p + "wq"), find(p + "bq"),
                            find(p + "wk"), find(p + "bk"), find(p + "wv"), find(p + "bv"),
                            find(p + "wo"), find(p + "bo"), find(p + "ln2.g"), find(p + "ln2.b"),
                            find(p + "w1"), find(p + "b1"), find(p + "w2"), find(p + "b2")});
    }
    return o;
}

struct LnCache {
    MatrixXd xhat;
    VectorXd rstd;
};

MatrixXd layer_norm(const MatrixXd& x, const double* gamma, const double* beta, LnCache& c) {
    const Eigen::Index n = x.rows(), d = x.cols();
    c.xhat.resize(n, d);
    c.rstd.resize(n);
    MatrixXd y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        const double rstd = 1.0 / std::sqrt(var + kLnEps);
        c.rstd(i) = rstd;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double xh = (x(i, j) - mu) * rstd;
            c.xhat(i, j) = xh;
            y(i, j) = xh * gamma[j] + beta[j];
        }
    }
    return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const LnCache& c, const double* gamma, double* dgamma,
                             double* dbeta) {
    const Eigen::Index n = dy.rows(), d = dy.cols();
    MatrixXd dx(n, d);
    VectorXd dxhat(d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            dgamma[j] += dy(i, j) * c.xhat(i, j);
            dbeta[j] += dy(i, j);
            dxhat(j) = dy(i, j) * gamma[j];
        }
        const double mean_d = dxhat.mean();
        const double mean_dx = (dxhat.array() * c.xhat.row(i).transpose().array()).mean();
        for (Eigen::Index j = 0; j < d; ++j)
            dx(i, j) = c.rstd(i) * (dxhat(j) - mean_d - c.xhat(i, j) * mean_dx);
    }
    return dx;
}

RowVectorXd row_of(const double* p, Eigen::Index n) { return Eigen::Map<const RowVectorXd>(p, n); }

// Tokens of a whole batch stacked row-wise; sample s owns rows [start[s], start[s] + len[s]).
struct Stacked {
    std::vector<Eigen::Index> start, len;
    std::vector<int> pos;
    MatrixXd tokens;
};

Stacked stack(std::span<const FeatureSequence* const> xs) {
    Stacked b;
    Eigen::Index rows = 0;
    for (const auto* x : xs) {
        b.start.push_back(rows);
        const Eigen::Index n = x->active();
        if (n == 0) throw std::domain_error("surrogate forward: input has no valid position");
        b.len.push_back(n);
        rows += n;
    }
    b.tokens.resize(rows, kFieldCount);
    Eigen::Index r = 0;
    for (const auto* x : xs)
        for (int i = 0; i < static_cast<int>(x->valid.size()); ++i)
            if (x->valid[static_cast<std::size_t>(i)]) {
                b.tokens.row(r++) = x->tokens.row(i);
                b.pos.push_back(i);
            }
    return b;
}

struct BlockCache {
    MatrixXd h1, q, k, v, a, h2, u, cdf, g;
    LnCache ln1, ln2;
    std::vector<MatrixXd> probs;       // [sample * n_heads + head], pre-dropout
    std::vector<MatrixXd> probs_used;  // after dropout
    std::vector<MatrixXd> attn_keep;   // keep mask scaled by 1/(1-p)
    MatrixXd ffn_keep;
};

struct Cache {
    std::vector<BlockCache> blocks;
    MatrixXd pool;  // n_samples x d
};

MatrixXd keep_mask(Rng& rng, Eigen::Index r, Eigen::Index c, double p) {
    MatrixXd m(r, c);
    const double scale = 1.0 / (1.0 - p);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform() < p ? 0.0 : scale;
    return m;
}

// Returns one prediction per sample. Sample s draws its dropout masks from
// Rng(seeds[s]) in the order: per block, each head's attention mask, then the FFN mask.
VectorXd encoder_forward(const EncoderHyper& h, const Offsets& off, const ParamVector& prm,
                         const Stacked& b, bool dropout, std::span<const std::uint64_t> seeds, Cache& c) {
    const double* P = prm.data();
    const int d = h.d_enc;
    const int dh = d / h.n_heads;
    const int ffn = d * h.ffn_mult;
    const bool drop = dropout && h.dropout > 0.0;
    const std::size_t n = b.start.size();
    const Eigen::Index rows = b.tokens.rows();
    std::vector<Rng> rngs;
    if (drop)
        for (std::size_t s = 0; s < n; ++s) rngs.emplace_back(seeds[s]);

    const CMap lift_w(P + off.lift_w, kFieldCount, d);
    const CMap lift_b(P + off.lift_b, kFieldCount, d);
    const CMap pos_tab(P + off.pos, h.max_len, d);
    MatrixXd z = b.tokens * lift_w;
    const RowVectorXd bias_sum = lift_b.colwise().sum();
    for (Eigen::Index r = 0; r < rows; ++r) z.row(r) += bias_sum + pos_tab.row(b.pos[static_cast<std::size_t>(r)]);

    c.blocks.assign(static_cast<std::size_t>(h.n_blocks), {});
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    for (int blk = 0; blk < h.n_blocks; ++blk) {
        const auto& o = off.blocks[static_cast<std::size_t>(blk)];
        BlockCache& bc = c.blocks[static_cast<std::size_t>(blk)];

        bc.h1 = layer_norm(z, P + o.ln1_g, P + o.ln1_b, bc.ln1);
        bc.q = (bc.h1 * CMap(P + o.wq, d, d)).rowwise() + row_of(P + o.bq, d);
        bc.k = (bc.h1 * CMap(P + o.wk, d, d)).rowwise() + row_of(P + o.bk, d);
        bc.v = (bc.h1 * CMap(P + o.wv, d, d)).rowwise() + row_of(P + o.bv, d);
        bc.a.resize(rows, d);
        for (std::size_t s = 0; s < n; ++s) {
            const Eigen::Index st = b.start[s], t = b.len[s];
            for (int hd = 0; hd < h.n_heads; ++hd) {
                MatrixXd sc = bc.q.block(st, hd * dh, t, dh) * bc.k.block(st, hd * dh, t, dh).transpose() * scale;
                for (Eigen::Index i = 0; i < t; ++i) {
                    const double m = sc.row(i).maxCoeff();
                    sc.row(i) = (sc.row(i).array() - m).exp();
                    sc.row(i) /= sc.row(i).sum();
                }
                MatrixXd used = sc;
                if (drop) {
                    MatrixXd keep = keep_mask(rngs[s], t, t, h.dropout);
                    used = sc.cwiseProduct(keep);
                    bc.attn_keep.push_back(std::move(keep));
                }
                bc.a.block(st, hd * dh, t, dh).noalias() = used * bc.v.block(st, hd * dh, t, dh);
                bc.probs.push_back(std::move(sc));
                bc.probs_used.push_back(std::move(used));
            }
        }
        z.noalias() += bc.a * CMap(P + o.wo, d, d);
        z.rowwise() += row_of(P + o.bo, d);

        bc.h2 = layer_norm(z, P + o.ln2_g, P + o.ln2_b, bc.ln2);
        bc.u = (bc.h2 * CMap(P + o.w1, d, ffn)).rowwise() + row_of(P + o.b1, ffn);
        bc.cdf = bc.u.unaryExpr(&normal_cdf);
        bc.g = bc.u.cwiseProduct(bc.cdf);
        MatrixXd f = (bc.g * CMap(P + o.w2, ffn, d)).rowwise() + row_of(P + o.b2, d);
        if (drop) {
            bc.ffn_keep.resize(rows, d);
            for (std::size_t s = 0; s < n; ++s)
                bc.ffn_keep.middleRows(b.start[s], b.len[s]) = keep_mask(rngs[s], b.len[s], d, h.dropout);
            f = f.cwiseProduct(bc.ffn_keep);
        }
        z += f;
    }

    c.pool.resize(static_cast<Eigen::Index>(n), d);
    for (std::size_t s = 0; s < n; ++s)
        c.pool.row(static_cast<Eigen::Index>(s)) = z.middleRows(b.start[s], b.len[s]).colwise().mean();
    VectorXd y = c.pool * Eigen::Map<const VectorXd>(P + off.head_w, d);
    y.array() += P[off.head_b];
    return y;
}

// Accumulates sum_s dy[s] * d(yhat_s)/d(params) into grad.
void encoder_backward(const EncoderHyper& h, const Offsets& off, const ParamVector& prm, const Stacked& b,
                      const Cache& c, const VectorXd& dy, bool dropout, ParamVector& grad) {
    const double* P = prm.data();
    double* G = grad.data();
    const int d = h.d_enc;
    const int dh = d / h.n_heads;
    const int ffn = d * h.ffn_mult;
    const bool drop = dropout && h.dropout > 0.0;
    const std::size_t n = b.start.size();
    const Eigen::Index rows = b.tokens.rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::Map<RowVectorXd>(G + off.head_w, d) += dy.transpose() * c.pool;
    G[off.head_b] += dy.sum();
    const RowVectorXd head_w = row_of(P + off.head_w, d);
    MatrixXd dz(rows, d);
    for (std::size_t s = 0; s < n; ++s)
        dz.middleRows(b.start[s], b.len[s]).rowwise() =
            dy(static_cast<Eigen::Index>(s)) / static_cast<double>(b.len[s]) * head_w;

    for (int blk = h.n_blocks - 1; blk >= 0; --blk) {
        const auto& o = off.blocks[static_cast<std::size_t>(blk)];
        const BlockCache& bc = c.blocks[static_cast<std::size_t>(blk)];

        // FFN residual branch
        const MatrixXd df = drop ? MatrixXd(dz.cwiseProduct(bc.ffn_keep)) : dz;
        MMap(G + o.w2, ffn, d).noalias() += bc.g.transpose() * df;
        Eigen::Map<RowVectorXd>(G + o.b2, d) += df.colwise().sum();
        const MatrixXd du = (df * CMap(P + o.w2, ffn, d).transpose()).cwiseProduct(bc.u.binaryExpr(bc.cdf, &gelu_grad));
        MMap(G + o.w1, d, ffn).noalias() += bc.h2.transpose() * du;
        Eigen::Map<RowVectorXd>(G + o.b1, ffn) += du.colwise().sum();
        const MatrixXd dh2 = du * CMap(P + o.w1, d, ffn).transpose();
        dz += layer_norm_backward(dh2, bc.ln2, P + o.ln2_g, G + o.ln2_g, G + o.ln2_b);

        // attention residual branch
        MMap(G + o.wo, d, d).noalias() += bc.a.transpose() * dz;
        Eigen::Map<RowVectorXd>(G + o.bo, d) += dz.colwise().sum();
        const MatrixXd da = dz * CMap(P + o.wo, d, d).transpose();
        MatrixXd dq(rows, d), dk(rows, d), dv(rows, d);
        for (std::size_t s = 0; s < n; ++s) {
            const Eigen::Index st = b.start[s], t = b.len[s];
            for (int hd = 0; hd < h.n_heads; ++hd) {
                const std::size_t k = s * static_cast<std::size_t>(h.n_heads) + static_cast<std::size_t>(hd);
                const auto da_h = da.block(st, hd * dh, t, dh);
                MatrixXd dp = da_h * bc.v.block(st, hd * dh, t, dh).transpose();
                dv.block(st, hd * dh, t, dh).noalias() = bc.probs_used[k].transpose() * da_h;
                if (drop) dp = dp.cwiseProduct(bc.attn_keep[k]);
                const MatrixXd& p = bc.probs[k];
                const VectorXd row_dot = dp.cwiseProduct(p).rowwise().sum();
                const MatrixXd ds = p.cwiseProduct(dp.colwise() - row_dot) * scale;
                dq.block(st, hd * dh, t, dh).noalias() = ds * bc.k.block(st, hd * dh, t, dh);
                dk.block(st, hd * dh, t, dh).noalias() = ds.transpose() * bc.q.block(st, hd * dh, t, dh);
            }
        }
        MMap(G + o.wq, d, d).noalias() += bc.h1.transpose() * dq;
        MMap(G + o.wk, d, d).noalias() += bc.h1.transpose() * dk;
        MMap(G + o.wv, d, d).noalias() += bc.h1.transpose() * dv;
        Eigen::Map<RowVectorXd>(G + o.bq, d) += dq.colwise().sum();
        Eigen::Map<RowVectorXd>(G + o.bk, d) += dk.colwise().sum();
        Eigen::Map<RowVectorXd>(G + o.bv, d) += dv.colwise().sum();
        MatrixXd dh1 = dq * CMap(P + o.wq, d, d).transpose();
        dh1.noalias() += dk * CMap(P + o.wk, d, d).transpose();
        dh1.noalias() += dv * CMap(P + o.wv, d, d).transpose();
        dz += layer_norm_backward(dh1, bc.ln1, P + o.ln1_g, G + o.ln1_g, G + o.ln1_b);
    }

    // embedding: z0 = pos[p] + sum_f (x_f * lift_w[f] + lift_b[f])
    MMap(G + off.lift_w, kFieldCount, d).noalias() += b.tokens.transpose() * dz;
    const RowVectorXd dz_sum = dz.colwise().sum();
    MMap dlift_b(G + off.lift_b, kFieldCount, d);
    for (int f = 0; f < kFieldCount; ++f) dlift_b.row(f) += dz_sum;
    MMap dpos(G + off.pos, h.max_len, d);
    for (Eigen::Index r = 0; r < rows; ++r) dpos.row(b.pos[static_cast<std::size_t>(r)]) += dz.row(r);
}

}  // namespace

std::vector<TensorSpec> EncoderSurrogate::layout(const EncoderHyper& h) {
    std::vector<TensorSpec> out;
    std::size_t off = 0;
    auto add = [&](std::string name, int r, int c) {
        out.push_back({std::move(name), r, c, off});
        off += static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
    };
    const int d = h.d_enc, ffn = h.d_enc * h.ffn_mult;
    add("lift.w", kFieldCount, d);
    add("lift.b", kFieldCount, d);
    add("pos", h.max_len, d);
    for (int b = 0; b < h.n_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        add(p + "ln1.g", 1, d);
        add(p + "ln1.b", 1, d);
        add(p + "wq", d, d);
        add(p + "bq", 1, d);
        add(p + "wk", d, d);
        add(p + "bk", 1, d);
        add(p + "wv", d, d);
        add(p + "bv", 1, d);
        add(p + "wo", d, d);
        add(p + "bo", 1, d);
        add(p + "ln2.g", 1, d);
        add(p + "ln2.b", 1, d);
        add(p + "w1", d, ffn);
        add(p + "b1", 1, ffn);
        add(p + "w2", ffn, d);
        add(p + "b2", 1, d);
    }
    add("head.w", 1, d);
    add("head.b", 1, 1);
    return out;
}

std::size_t EncoderSurrogate::param_count(const EncoderHyper& h) {
    const auto l = layout(h);
    return l.back().offset + l.back().size();
}

EncoderSurrogate::EncoderSurrogate(EncoderHyper hyper, FieldNormalizer norm, std::uint64_t init_seed)
    : hyper_(hyper), norm_(norm), layout_(layout(hyper)) {
    if (hyper_.d_enc % hyper_.n_heads != 0)
        throw std::invalid_argument("encoder: d_enc must be divisible by n_heads");
    if (hyper_.dropout < 0.0 || hyper_.dropout >= 1.0)
        throw std::invalid_argument("encoder: dropout must be in [0, 1)");
    params_.assign(param_count(hyper_), 0.0);
    Rng rng(init_seed);
    for (const auto& t : layout_) {
        double* p = params_.data() + t.offset;
        const auto ends_with = [&](const char* suffix) {
            const std::string s(suffix);
            return t.name.size() >= s.size() && t.name.compare(t.name.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with(".g")) {
            std::fill(p, p + t.size(), 1.0);
        } else if (t.name == "lift.w" || t.name == "pos") {
            // pooled means only see the sequence length through pos, so keep it loud
            for (std::size_t i = 0; i < t.size(); ++i) p[i] = 0.5 * rng.normal();
        } else if (t.name == "head.w") {
            // zero: the first prediction is exactly the output bias
        } else if (t.rows > 1) {
            const double sd = 1.0 / std::sqrt(static_cast<double>(t.rows));
            for (std::size_t i = 0; i < t.size(); ++i) p[i] = sd * rng.normal();
        }
    }
}

void EncoderSurrogate::set_output_bias(double b) { params_[layout_.back().offset] = b; }

double EncoderSurrogate::forward(const FeatureSequence& x, ForwardMode mode) const {
    const auto off = offsets_of(layout_, hyper_.n_blocks);
    const FeatureSequence* xs[] = {&x};
    const std::uint64_t seeds[] = {mix_seed(mode.seed, 0)};
    Cache cache;
    return encoder_forward(hyper_, off, params_, stack(xs), mode.dropout, seeds, cache)(0);
}

double EncoderSurrogate::loss_and_grad(std::span<const Sample> batch, ParamVector* grad,
                                       ForwardMode mode) const {
    if (batch.empty()) throw std::domain_error("loss_and_grad: empty batch");
    const auto off = offsets_of(layout_, hyper_.n_blocks);
    if (grad) grad->assign(params_.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    // chunks bound the cache size when called on a whole split
    constexpr std::size_t kChunk = 64;
    std::vector<const FeatureSequence*> xs;
    std::vector<std::uint64_t> seeds;
    Cache cache;
    for (std::size_t lo = 0; lo < batch.size(); lo += kChunk) {
        const std::size_t hi = std::min(batch.size(), lo + kChunk);
        xs.clear();
        seeds.clear();
        for (std::size_t i = lo; i < hi; ++i) {
            xs.push_back(&batch[i].x);
            seeds.push_back(mix_seed(mode.seed, i));
        }
        const Stacked st = stack(xs);
        const VectorXd yhat = encoder_forward(hyper_, off, params_, st, mode.dropout, seeds, cache);
        VectorXd dy(static_cast<Eigen::Index>(hi - lo));
        for (std::size_t i = lo; i < hi; ++i) {
            const double r = yhat(static_cast<Eigen::Index>(i - lo)) - batch[i].y;
            loss += std::abs(r) * inv_n;
            dy(static_cast<Eigen::Index>(i - lo)) = (r > 0.0 ? 1.0 : r < 0.0 ? -1.0 : 0.0) * inv_n;
        }
        if (grad) encoder_backward(hyper_, off, params_, st, cache, dy, mode.dropout, *grad);
    }
    return loss;
}

}  // namespace ihanas
