#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ihanas/rng.hpp"
#include "ihanas/surrogate.hpp"

namespace ihanas {

// Layout: w1 (in x H), b1, w2 (H x H), b2, w3 (H), b3. Column-major maps.

namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using CMap = Eigen::Map<const MatrixXd>;
using MMap = Eigen::Map<MatrixXd>;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

RowVectorXd flatten(const FeatureSequence& x) {
    RowVectorXd v(x.tokens.size());
    Eigen::Index k = 0;
    for (Eigen::Index r = 0; r < x.tokens.rows(); ++r)
        for (Eigen::Index c = 0; c < x.tokens.cols(); ++c) v(k++) = x.valid[static_cast<std::size_t>(r)] ? x.tokens(r, c) : 0.0;
    return v;
}

struct Offsets {
    std::size_t w1, b1, w2, b2, w3, b3, end;
};

Offsets offsets(int in, int h) {
    Offsets o{};
    o.w1 = 0;
    o.b1 = o.w1 + static_cast<std::size_t>(in) * h;
    o.w2 = o.b1 + h;
    o.b2 = o.w2 + static_cast<std::size_t>(h) * h;
    o.w3 = o.b2 + h;
    o.b3 = o.w3 + h;
    o.end = o.b3 + 1;
    return o;
}

}  // namespace

MlpSurrogate::MlpSurrogate(int max_len, int hidden, FieldNormalizer norm, std::uint64_t init_seed)
    : max_len_(max_len), hidden_(hidden), norm_(norm) {
    if (max_len < 1 || hidden < 1) throw std::invalid_argument("mlp: max_len and hidden must be >= 1");
    const int in = max_len * kFieldCount;
    const auto o = offsets(in, hidden);
    params_.assign(o.end, 0.0);
    Rng rng(init_seed);
    auto fill = [&](std::size_t at, std::size_t n, double sd) {
        for (std::size_t i = 0; i < n; ++i) params_[at + i] = sd * rng.normal();
    };
    fill(o.w1, o.b1 - o.w1, 1.0 / std::sqrt(double(in)));
    fill(o.w2, o.b2 - o.w2, 1.0 / std::sqrt(double(hidden)));
    fill(o.w3, o.b3 - o.w3, 0.01);
}

void MlpSurrogate::set_output_bias(double b) { params_.back() = b; }

double MlpSurrogate::forward(const FeatureSequence& x, ForwardMode) const {
    if (x.active() == 0) throw std::domain_error("mlp forward: input has no valid position");
    const int in = max_len_ * kFieldCount, h = hidden_;
    const auto o = offsets(in, h);
    const double* P = params_.data();
    const RowVectorXd a1 = (flatten(x) * CMap(P + o.w1, in, h) + Eigen::Map<const RowVectorXd>(P + o.b1, h)).unaryExpr(&gelu);
    const RowVectorXd a2 = (a1 * CMap(P + o.w2, h, h) + Eigen::Map<const RowVectorXd>(P + o.b2, h)).unaryExpr(&gelu);
    return a2.dot(Eigen::Map<const RowVectorXd>(P + o.w3, h)) + P[o.b3];
}

double MlpSurrogate::loss_and_grad(std::span<const Sample> batch, ParamVector* grad, ForwardMode) const {
    if (batch.empty()) throw std::domain_error("loss_and_grad: empty batch");
    const int in = max_len_ * kFieldCount, h = hidden_;
    const auto o = offsets(in, h);
    const double* P = params_.data();
    if (grad) grad->assign(params_.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& s : batch) {
        if (s.x.active() == 0) throw std::domain_error("mlp forward: input has no valid position");
        const RowVectorXd x = flatten(s.x);
        const RowVectorXd z1 = x * CMap(P + o.w1, in, h) + Eigen::Map<const RowVectorXd>(P + o.b1, h);
        const RowVectorXd a1 = z1.unaryExpr(&gelu);
        const RowVectorXd z2 = a1 * CMap(P + o.w2, h, h) + Eigen::Map<const RowVectorXd>(P + o.b2, h);
        const RowVectorXd a2 = z2.unaryExpr(&gelu);
        const double r = a2.dot(Eigen::Map<const RowVectorXd>(P + o.w3, h)) + P[o.b3] - s.y;
        loss += std::abs(r) * inv_n;
        if (!grad || r == 0.0) continue;
        double* G = grad->data();
        const double dy = (r > 0.0 ? 1.0 : -1.0) * inv_n;
        Eigen::Map<RowVectorXd>(G + o.w3, h) += dy * a2;
        G[o.b3] += dy;
        const RowVectorXd dz2 = (dy * Eigen::Map<const RowVectorXd>(P + o.w3, h)).cwiseProduct(z2.unaryExpr(&gelu_grad));
        MMap(G + o.w2, h, h).noalias() += a1.transpose() * dz2;
        Eigen::Map<RowVectorXd>(G + o.b2, h) += dz2;
        const RowVectorXd dz1 = (dz2 * CMap(P + o.w2, h, h).transpose()).cwiseProduct(z1.unaryExpr(&gelu_grad));
        MMap(G + o.w1, in, h).noalias() += x.transpose() * dz1;
        Eigen::Map<RowVectorXd>(G + o.b1, h) += dz1;
    }
    return loss;
}

nlohmann::json MlpSurrogate::to_json() const {
    return {{"kind", "mlp"},
            {"max_len", max_len_},
            {"hidden", hidden_},
            {"normalizer", {{"lo", norm_.lo}, {"hi", norm_.hi}}},
            {"params", params_}};
}

MlpSurrogate MlpSurrogate::from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "mlp") throw std::invalid_argument("checkpoint: kind must be 'mlp'");
    FieldNormalizer n;
    n.lo = j.at("normalizer").at("lo").get<std::array<double, kFieldCount>>();
    n.hi = j.at("normalizer").at("hi").get<std::array<double, kFieldCount>>();
    MlpSurrogate s(j.at("max_len").get<int>(), j.at("hidden").get<int>(), n, 0);
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != s.params_.size()) throw std::invalid_argument("checkpoint: parameter count mismatch");
    s.params_.assign(p.begin(), p.end());
    return s;
}

}  // namespace ihanas
