#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ihanas {

/// Search objectives, all minimized. Energy in microjoules, latencies in
/// milliseconds.
struct ObjectiveVector {
    double val_loss = 0.0;
    double e_tok_uj = 0.0;
    double ttft_ms = 0.0;
    double tpot_ms = 0.0;
    bool feasible = true;
    double violation = 0.0;

    std::array<double, 4> values() const { return {val_loss, e_tok_uj, ttft_ms, tpot_ms}; }
};

/// Kendall tau-b (tie corrected). Throws std::domain_error on length mismatch
/// or fewer than two elements.
double kendall_tau(std::span<const double> pred, std::span<const double> truth);

/// Pearson correlation of mid-ranks.
double spearman_rho(std::span<const double> pred, std::span<const double> truth);

/// Average (mid) ranks, 1-based.
std::vector<double> midranks(std::span<const double> v);

/// Smallest k such that the k best predictions (ties by index) contain the
/// true top ceil(x * n). Lower is better for both vectors.
std::size_t k_at_x(std::span<const double> pred, std::span<const double> truth, double x);

/// Mean absolute error over the true top ceil(x * n) rows.
double mae_at_top(std::span<const double> pred, std::span<const double> truth, double x);

double mae(std::span<const double> pred, std::span<const double> truth);

/// a <= b everywhere and a < b somewhere.
bool dominates(std::span<const double> a, std::span<const double> b);

/// Feasible beats infeasible; infeasible compare by violation; feasible by
/// Pareto dominance.
bool constraint_dominates(const ObjectiveVector& a, const ObjectiveVector& b);

/// Indices of the non-dominated points, in input order.
std::vector<std::size_t> pareto_front(const std::vector<std::vector<double>>& points);
std::vector<std::size_t> pareto_front(const std::vector<ObjectiveVector>& points);

/// NSGA-II crowding distance of each point within the given set; boundary
/// points of every objective get +inf. Objectives with a zero or non-finite
/// range contribute only their boundary points.
std::vector<double> crowding_distance(const std::vector<std::vector<double>>& points);

struct Hypervolume {
    double value = 0.0;
    std::size_t excluded = 0;  // points not strictly dominating the reference
};

/// Area dominated by the points inside the box bounded by `ref` (minimization).
Hypervolume hypervolume_2d(const std::vector<std::array<double, 2>>& front,
                           std::array<double, 2> ref);

/// Ranking fidelity block reported for surrogate evaluation.
struct MetricsReport {
    double tau = 0.0;
    double rho = 0.0;
    double mae = 0.0;
    double mae_at_5pct = 0.0;
    double k_at_1pct = 0.0;
    double k_at_5pct = 0.0;
};

MetricsReport evaluate_ranking(std::span<const double> pred, std::span<const double> truth);

/// mean/std per field over seeds, as {"tau": {"mean": .., "std": ..}, ...}.
nlohmann::json summarize_reports(const std::vector<MetricsReport>& reports);
nlohmann::json to_json(const MetricsReport& r);

}  // namespace ihanas
