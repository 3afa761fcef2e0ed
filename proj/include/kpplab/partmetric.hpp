#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kpplab/evolve.hpp"

namespace kpplab {

/// ln max(sup u/v, sup v/u, 1); empty when either field touches the floor.
std::optional<double> part_metric(const Field& u, const Field& v, double floor = 1e-300);

/// Edge-cell ratio stability: the edge ratio u/v must be within 10% of its neighbour.
/// Returns a warning text when a tail is not ratio-stable.
std::optional<std::string> tail_ratio_warning(const Field& u, const Field& v);

struct PartMetricSample {
    double t = 0.0;
    double rho = 0.0;
    bool defined = false;
};

struct PartMetricTrace {
    std::vector<PartMetricSample> samples;
    std::string truncation_reason;  // empty unless a field hit the floor
    std::vector<std::string> warnings;

    void push(double t, std::optional<double> rho);
    /// Largest increase between consecutive defined samples (<= 0 for a monotone trace).
    double max_increase() const;
    bool monotone(double slack = 1e-10) const { return max_increase() <= slack; }
};

PartMetricTrace metric_trace(const DispersalOperator& op, const ReactionModel& m, const Field& u0, const Field& v0,
                             double t0, double t1, double stride, IVPOptions opts = {});

struct DecrementEstimate {
    std::optional<double> delta;
    int segments = 0;
};

/// min over windows [t, t + tau] with rho(t) >= sigma of rho(t) - rho(t + tau).
DecrementEstimate decrement_estimate(const PartMetricTrace& trace, double sigma, double tau);

}  // namespace kpplab
