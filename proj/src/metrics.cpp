#include "ihanas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ihanas {

namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* who) {
    if (a.size() != b.size()) throw std::domain_error(std::string(who) + ": length mismatch");
}

std::size_t top_count(double x, std::size_t n) {
    if (!(x > 0.0 && x <= 1.0)) throw std::domain_error("fraction must be in (0, 1]");
    const auto m = static_cast<std::size_t>(std::ceil(x * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(m, 1, n);
}

// Indices ordered by value ascending, ties by index.
std::vector<std::size_t> order_of(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    return idx;
}

}  // namespace

double kendall_tau(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "kendall_tau");
    if (pred.size() < 2) throw std::domain_error("kendall_tau: need at least two elements");
    const std::size_t n = pred.size();
    long long concordant = 0, discordant = 0, tie_pred = 0, tie_truth = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dp = pred[i] - pred[j];
            const double dt = truth[i] - truth[j];
            if (dp == 0.0 && dt == 0.0) {
                ++tie_pred;
                ++tie_truth;
            } else if (dp == 0.0) {
                ++tie_pred;
            } else if (dt == 0.0) {
                ++tie_truth;
            } else if ((dp > 0.0) == (dt > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double n0 = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
    const double denom = std::sqrt((n0 - static_cast<double>(tie_pred)) * (n0 - static_cast<double>(tie_truth)));
    if (denom == 0.0) return 0.0;
    return static_cast<double>(concordant - discordant) / denom;
}

std::vector<double> midranks(std::span<const double> v) {
    const auto idx = order_of(v);
    std::vector<double> r(v.size());
    std::size_t i = 0;
    while (i < idx.size()) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

double spearman_rho(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "spearman_rho");
    if (pred.size() < 2) throw std::domain_error("spearman_rho: need at least two elements");
    const auto rp = midranks(pred), rt = midranks(truth);
    const double n = static_cast<double>(rp.size());
    const double mp = std::accumulate(rp.begin(), rp.end(), 0.0) / n;
    const double mt = std::accumulate(rt.begin(), rt.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        sxy += (rp[i] - mp) * (rt[i] - mt);
        sxx += (rp[i] - mp) * (rp[i] - mp);
        syy += (rt[i] - mt) * (rt[i] - mt);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

std::size_t k_at_x(std::span<const double> pred, std::span<const double> truth, double x) {
    check_pair(pred, truth, "k_at_x");
    if (pred.empty()) return 0;
    const std::size_t m = top_count(x, pred.size());
    const auto true_order = order_of(truth);
    const auto pred_order = order_of(pred);
    std::vector<std::size_t> pos(pred.size());
    for (std::size_t p = 0; p < pred_order.size(); ++p) pos[pred_order[p]] = p;
    std::size_t k = 0;
    for (std::size_t i = 0; i < m; ++i) k = std::max(k, pos[true_order[i]] + 1);
    return k;
}

double mae_at_top(std::span<const double> pred, std::span<const double> truth, double x) {
    check_pair(pred, truth, "mae_at_top");
    if (pred.empty()) return 0.0;
    const std::size_t m = top_count(x, pred.size());
    const auto true_order = order_of(truth);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += std::abs(pred[true_order[i]] - truth[true_order[i]]);
    return s / static_cast<double>(m);
}

double mae(std::span<const double> pred, std::span<const double> truth) {
    check_pair(pred, truth, "mae");
    if (pred.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.size());
}

bool dominates(std::span<const double> a, std::span<const double> b) {
    bool strictly = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strictly = true;
    }
    return strictly;
}

bool constraint_dominates(const ObjectiveVector& a, const ObjectiveVector& b) {
    if (a.feasible != b.feasible) return a.feasible;
    if (!a.feasible) return a.violation < b.violation;
    const auto va = a.values(), vb = b.values();
    return dominates(va, vb);
}

std::vector<std::size_t> pareto_front(const std::vector<std::vector<double>>& points) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j)
            dominated = j != i && dominates(points[j], points[i]);
        if (!dominated) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> pareto_front(const std::vector<ObjectiveVector>& points) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < points.size(); ++i) {
        bool dominated = false;
        for (std::size_t j = 0; j < points.size() && !dominated; ++j)
            dominated = j != i && constraint_dominates(points[j], points[i]);
        if (!dominated) out.push_back(i);
    }
    return out;
}

std::vector<double> crowding_distance(const std::vector<std::vector<double>>& points) {
    const std::size_t n = points.size();
    std::vector<double> dist(n, 0.0);
    if (n == 0) return dist;
    const std::size_t m = points.front().size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> idx(n);
    for (std::size_t obj = 0; obj < m; ++obj) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return points[a][obj] < points[b][obj]; });
        dist[idx.front()] = inf;
        dist[idx.back()] = inf;
        const double range = points[idx.back()][obj] - points[idx.front()][obj];
        if (!(range > 0.0) || !std::isfinite(range)) continue;
        for (std::size_t k = 1; k + 1 < n; ++k)
            dist[idx[k]] += (points[idx[k + 1]][obj] - points[idx[k - 1]][obj]) / range;
    }
    return dist;
}

Hypervolume hypervolume_2d(const std::vector<std::array<double, 2>>& front,
                           std::array<double, 2> ref) {
    Hypervolume hv;
    std::vector<std::array<double, 2>> pts;
    for (const auto& p : front) {
        if (p[0] < ref[0] && p[1] < ref[1]) pts.push_back(p);
        else ++hv.excluded;
    }
    std::sort(pts.begin(), pts.end());
    double floor2 = ref[1];
    for (const auto& p : pts) {
        if (p[1] < floor2) {
            hv.value += (ref[0] - p[0]) * (floor2 - p[1]);
            floor2 = p[1];
        }
    }
    return hv;
}

MetricsReport evaluate_ranking(std::span<const double> pred, std::span<const double> truth) {
    MetricsReport r;
    r.tau = kendall_tau(pred, truth);
    r.rho = spearman_rho(pred, truth);
    r.mae = mae(pred, truth);
    r.mae_at_5pct = mae_at_top(pred, truth, 0.05);
    r.k_at_1pct = static_cast<double>(k_at_x(pred, truth, 0.01));
    r.k_at_5pct = static_cast<double>(k_at_x(pred, truth, 0.05));
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    return {{"tau", r.tau},   {"rho", r.rho},           {"mae", r.mae},
            {"mae_at_5pct", r.mae_at_5pct}, {"k_at_1pct", r.k_at_1pct}, {"k_at_5pct", r.k_at_5pct}};
}

nlohmann::json summarize_reports(const std::vector<MetricsReport>& reports) {
    nlohmann::json out = nlohmann::json::object();
    if (reports.empty()) return out;
    auto field = [&](const char* name, double MetricsReport::*member) {
        double mean = 0.0;
        for (const auto& r : reports) mean += r.*member;
        mean /= static_cast<double>(reports.size());
        double var = 0.0;
        for (const auto& r : reports) var += (r.*member - mean) * (r.*member - mean);
        const double sd = reports.size() > 1 ? std::sqrt(var / static_cast<double>(reports.size() - 1)) : 0.0;
        out[name] = {{"mean", mean}, {"std", sd}};
    };
    field("tau", &MetricsReport::tau);
    field("rho", &MetricsReport::rho);
    field("mae", &MetricsReport::mae);
    field("mae_at_5pct", &MetricsReport::mae_at_5pct);
    field("k_at_1pct", &MetricsReport::k_at_1pct);
    field("k_at_5pct", &MetricsReport::k_at_5pct);
    out["seeds"] = reports.size();
    return out;
}

}  // namespace ihanas
