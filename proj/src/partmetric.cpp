#include "kpplab/partmetric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kpplab/errors.hpp"

namespace kpplab {

std::optional<double> part_metric(const Field& u, const Field& v, double floor) {
    if (u.grid.n != v.grid.n || u.grid.dx != v.grid.dx || u.grid.window_shift != v.grid.window_shift ||
        u.grid.x_min != v.grid.x_min)
        throw ConfigError("part metric: fields live on different grids");
    if (!(u.min() > floor) || !(v.min() > floor)) return std::nullopt;
    double r = 1.0;
    for (std::size_t i = 0; i < u.values.size(); ++i) {
        r = std::max({r, u.values[i] / v.values[i], v.values[i] / u.values[i]});
    }
    return std::log(r);
}

std::optional<std::string> tail_ratio_warning(const Field& u, const Field& v) {
    if (u.grid.periodic) return std::nullopt;
    const auto ratio = [&](std::size_t i) { return u.values[i] / v.values[i]; };
    const std::size_t n = u.values.size();
    std::ostringstream s;
    bool bad = false;
    for (auto [edge, inner] : {std::pair<std::size_t, std::size_t>{0, 1}, {n - 1, n - 2}}) {
        const double a = ratio(edge), b = ratio(inner);
        if (!(std::abs(a - b) <= 0.1 * std::abs(b))) {
            s << (edge == 0 ? "left" : "right") << " tail ratio unstable (" << a << " vs " << b << "); ";
            bad = true;
        }
    }
    if (!bad) return std::nullopt;
    return s.str();
}

void PartMetricTrace::push(double t, std::optional<double> rho) {
    if (!samples.empty() && !(t > samples.back().t)) throw InvariantError("trace timestamps must increase");
    samples.push_back({t, rho.value_or(0.0), rho.has_value()});
}

double PartMetricTrace::max_increase() const {
    double worst = -std::numeric_limits<double>::infinity();
    const PartMetricSample* prev = nullptr;
    for (const auto& s : samples) {
        if (!s.defined) continue;
        if (prev) worst = std::max(worst, s.rho - prev->rho);
        prev = &s;
    }
    return std::isfinite(worst) ? worst : 0.0;
}

PartMetricTrace metric_trace(const DispersalOperator& op, const ReactionModel& m, const Field& u0, const Field& v0,
                             double t0, double t1, double stride, IVPOptions opts) {
    Field u = u0, v = v0;
    u.t = v.t = t0;
    u.validate();
    v.validate();
    const auto rho0 = part_metric(u, v, opts.value_floor);
    if (!rho0) throw ConfigError("metric_trace: part metric undefined for the initial pair");
    if (!(stride > 0.0)) throw ConfigError("metric_trace: stride must be positive");
    opts.record_stride = stride;
    const double bound = std::max(apriori_bound(m, u), apriori_bound(m, v));
    const Schedule sched = make_schedule(op, m, u, t1, opts, bound);

    PartMetricTrace trace;
    trace.push(t0, rho0);
    if (auto w = tail_ratio_warning(u, v)) trace.warnings.push_back(*w);
    Stepper su(op, m, u.grid, opts.boundary), sv(op, m, v.grid, opts.boundary);
    for (std::size_t seg = 0; seg < sched.stops.size(); ++seg) {
        const double start = u.t;
        const int n = sched.steps[seg];
        const double h = (sched.stops[seg] - start) / n;
        for (int j = 0; j < n; ++j) {
            su.advance(u, h);
            sv.advance(v, h);
        }
        u.t = v.t = sched.stops[seg];
        const auto rho = part_metric(u, v, opts.value_floor);
        trace.push(u.t, rho);
        if (!rho) {
            std::ostringstream s;
            s << "field reached the floor " << opts.value_floor << " at t=" << u.t;
            trace.truncation_reason = s.str();
            break;
        }
    }
    if (!trace.monotone()) {
        std::ostringstream s;
        s << "part metric increased by " << trace.max_increase();
        throw InvariantError(s.str());
    }
    return trace;
}

DecrementEstimate decrement_estimate(const PartMetricTrace& trace, double sigma, double tau) {
    if (!(tau > 0.0)) throw ConfigError("decrement: tau must be positive");
    DecrementEstimate est;
    const auto& s = trace.samples;
    std::size_t j = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s[i].defined || s[i].rho < sigma) continue;
        const double target = s[i].t + tau;
        j = std::max(j, i);
        while (j < s.size() && s[j].t < target - 1e-9 * std::max(1.0, std::abs(target))) ++j;
        if (j >= s.size()) break;
        if (std::abs(s[j].t - target) > 1e-9 * std::max(1.0, std::abs(target)) || !s[j].defined) continue;
        const double drop = s[i].rho - s[j].rho;
        est.delta = est.delta ? std::min(*est.delta, drop) : drop;
        ++est.segments;
    }
    return est;
}

}  // namespace kpplab
