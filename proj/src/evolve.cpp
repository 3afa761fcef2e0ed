#include "kpplab/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kpplab/errors.hpp"
#include "kpplab/interface.hpp"

namespace kpplab {

namespace {

std::string at_time(const char* what, double t) {
    std::ostringstream s;
    s << what << " at t=" << t;
    return s.str();
}

// Relative slack for comparing lockstep fields: a handful of ulps.
constexpr double kOrderSlack = 8.0 * std::numeric_limits<double>::epsilon();

}  // namespace

double lipschitz_budget(const ReactionModel& m, const Grid& grid, double t0, double t1, double u_max) {
    const int nx = std::min(grid.n, 64);
    const int nt = 9;
    const int nu = 33;
    double t_hi = t1;
    if (m.time_independent) t_hi = t0;
    else if (m.T_period) t_hi = std::min(t1, t0 + *m.T_period);
    double L = 0.0;
    for (int a = 0; a < nt; ++a) {
        const double t = nt > 1 ? t0 + (t_hi - t0) * a / (nt - 1) : t0;
        for (int b = 0; b < nx; ++b) {
            const int i = nx > 1 ? static_cast<int>(std::lround(static_cast<double>(b) * (grid.n - 1) / (nx - 1))) : 0;
            const double x = grid.x(i);
            for (int c = 0; c < nu; ++c) {
                const double u = u_max * c / (nu - 1);
                const double d = m.f(t, x, u) + u * m.f_u(t, x, u);
                if (!std::isfinite(d)) throw NumericError("reaction derivative is not finite");
                L = std::max(L, std::abs(d));
            }
        }
        if (t_hi == t0) break;
    }
    return 2.0 * L;
}

double max_stable_dt(const DispersalOperator& op, double dx, double lipschitz, double safety) {
    if (!(safety > 0.0 && safety <= 1.0)) throw ConfigError("cfl_safety must lie in (0, 1]");
    if (op.is_random()) {
        double dt = safety * dx * dx / 2.0;
        if (lipschitz > 0.0) dt = std::min(dt, safety / lipschitz);
        // Cell coefficient 1 - dt (2/dx^2 + L) must stay nonnegative for any safety factor.
        dt = std::min(dt, 1.0 / (2.0 / (dx * dx) + lipschitz));
        return dt;
    }
    return safety / (1.0 + lipschitz);
}

void check_step_size(const DispersalOperator& op, double dx, double dt, double lipschitz, double safety) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw StepSizeError("time step must be positive");
    const double limit = max_stable_dt(op, dx, lipschitz, safety);
    if (dt > limit * (1.0 + 1e-12)) {
        std::ostringstream s;
        s << "time step " << dt << " exceeds the monotone bound " << limit;
        throw StepSizeError(s.str());
    }
}

Stepper::Stepper(const DispersalOperator& op, const ReactionModel& m, const Grid& grid, Boundary boundary)
    : model_(&m), stencil_(Stencil::build(op, grid.dx)), boundary_(std::move(boundary)) {
    grid.validate();
    if (!op.is_random() && op.kernel().r0 < 2.0 * grid.dx * (1.0 - 1e-12))
        throw ConfigError("kernel unresolved: r0 < 2 dx");
    lap_.resize(static_cast<std::size_t>(grid.n));
}

void Stepper::advance(Field& u, double dt) {
    pad(u, stencil_.half_width, boundary_, padded_);
    lap_.resize(u.values.size());
    stencil_.apply(padded_, lap_);
    const double t = u.t;
    const auto& f = model_->f;
    for (int i = 0; i < u.grid.n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const double v = u.values[k];
        const double next = v + dt * (lap_[k] + v * f(t, u.grid.x(i), v));
        if (!std::isfinite(next)) throw NumericError(at_time("non-finite value", t));
        u.values[k] = next < 0.0 ? 0.0 : next;
    }
    u.t = t + dt;
}

Field step(const DispersalOperator& op, const ReactionModel& m, const Field& u, double dt, double cfl_safety,
           const Boundary& boundary) {
    u.validate();
    const double L = lipschitz_budget(m, u.grid, u.t, u.t + dt, apriori_bound(m, u));
    check_step_size(op, u.grid.dx, dt, L, cfl_safety);
    Stepper s(op, m, u.grid, boundary);
    Field out = u;
    s.advance(out, dt);
    return out;
}

double apriori_bound(const ReactionModel& m, const Field& u0) { return std::max(u0.sup_norm(), m.P0 + 1.0); }

Schedule make_schedule(const DispersalOperator& op, const ReactionModel& m, const Field& u0, double t1,
                       const IVPOptions& opts, double u_max) {
    const double t0 = u0.t;
    if (!(t1 > t0)) throw ConfigError("solve: t1 must exceed t0");
    const double L = opts.lipschitz >= 0.0 ? opts.lipschitz : lipschitz_budget(m, u0.grid, t0, t1, u_max);
    double dt_max = 0.0;
    if (opts.dt) {
        check_step_size(op, u0.grid.dx, *opts.dt, L, opts.cfl_safety);
        dt_max = *opts.dt;
    } else {
        dt_max = max_stable_dt(op, u0.grid.dx, L, opts.cfl_safety);
    }
    Schedule s;
    s.dt = dt_max;
    double prev = t0;
    const auto add = [&](double stop) {
        const double len = stop - prev;
        const int n = std::max(1, static_cast<int>(std::ceil(len / dt_max - 1e-9)));
        s.stops.push_back(stop);
        s.steps.push_back(n);
        prev = stop;
    };
    if (opts.record_stride > 0.0) {
        const double stride = opts.record_stride;
        for (long k = 1;; ++k) {
            const double stop = t0 + static_cast<double>(k) * stride;
            if (stop >= t1 - 1e-9 * stride) break;
            add(stop);
        }
    }
    add(t1);
    return s;
}

namespace {

// Recenters the window so the interface sits mid-window; returns the cell shift.
int recenter_shift(const Field& u, const IVPOptions& opts) {
    if (u.grid.periodic) return 0;
    std::optional<double> X;
    if (opts.front_reference) X = interface_location(u, opts.front_reference(u), opts.front_level);
    else if (u.values.front() > 0.0) X = interface_location(u, u.values.front(), opts.front_level);
    if (!X) return 0;
    const double lo = u.grid.x(u.grid.n / 3);
    const double hi = u.grid.x(2 * u.grid.n / 3);
    if (*X >= lo && *X <= hi) return 0;
    const double mid = u.grid.x(u.grid.n / 2);
    const int k = static_cast<int>(std::lround((*X - mid) / u.grid.dx));
    return std::clamp(k, -(u.grid.n - 1), u.grid.n - 1);
}

}  // namespace

Trajectory solve_ivp(const DispersalOperator& op, const ReactionModel& m, double t0, const Field& u0, double t1,
                     const IVPOptions& opts) {
    Field u = u0;
    u.t = t0;
    u.validate();
    if (u.min() < 0.0) throw ConfigError("solve_ivp: initial data must be nonnegative");
    const double bound = apriori_bound(m, u);
    const Schedule sched = make_schedule(op, m, u, t1, opts, bound);

    Stepper stepper(op, m, u.grid, opts.boundary);
    Trajectory tr;
    tr.record_stride = opts.record_stride;
    tr.push(u);
    for (std::size_t seg = 0; seg < sched.stops.size(); ++seg) {
        const double start = u.t;
        const int n = sched.steps[seg];
        const double h = (sched.stops[seg] - start) / n;
        for (int j = 0; j < n; ++j) {
            stepper.advance(u, h);
            u.t = start + (j + 1) * h;
        }
        u.t = sched.stops[seg];
        if (u.max() > bound * (1.0 + 1e-12)) throw InvariantError(at_time("a priori bound exceeded", u.t));
        if (opts.track_front) {
            const int k = recenter_shift(u, opts);
            if (k != 0) u = shift_window(u, k, opts.boundary);
        }
        tr.push(u);
    }
    return tr;
}

std::pair<Trajectory, Trajectory> solve_pair(const DispersalOperator& op, const ReactionModel& m, double t0,
                                             const Field& u01, const Field& u02, double t1,
                                             const IVPOptions& opts) {
    Field a = u01, b = u02;
    a.t = b.t = t0;
    a.validate();
    b.validate();
    if (!a.grid.same_geometry(b.grid)) throw ConfigError("solve_pair: grids differ");
    for (std::size_t i = 0; i < a.values.size(); ++i)
        if (a.values[i] > b.values[i]) throw ConfigError("solve_pair: initial data are not ordered");
    if (a.min() < 0.0) throw ConfigError("solve_pair: initial data must be nonnegative");
    const double bound = std::max(apriori_bound(m, a), apriori_bound(m, b));
    const Schedule sched = make_schedule(op, m, b, t1, opts, bound);

    Stepper sa(op, m, a.grid, opts.boundary), sb(op, m, b.grid, opts.boundary);
    std::pair<Trajectory, Trajectory> out;
    out.first.record_stride = out.second.record_stride = opts.record_stride;
    out.first.push(a);
    out.second.push(b);
    for (std::size_t seg = 0; seg < sched.stops.size(); ++seg) {
        const double start = a.t;
        const int n = sched.steps[seg];
        const double h = (sched.stops[seg] - start) / n;
        for (int j = 0; j < n; ++j) {
            sa.advance(a, h);
            sb.advance(b, h);
            a.t = b.t = start + (j + 1) * h;
            for (std::size_t i = 0; i < a.values.size(); ++i) {
                const double lo = a.values[i], hi = b.values[i];
                if (lo > hi + kOrderSlack * std::max(std::abs(lo), std::abs(hi)))
                    throw InvariantError(at_time("comparison principle broken", a.t));
            }
        }
        a.t = b.t = sched.stops[seg];
        if (std::max(a.max(), b.max()) > bound * (1.0 + 1e-12))
            throw InvariantError(at_time("a priori bound exceeded", a.t));
        if (opts.track_front) {
            const int k = recenter_shift(b, opts);
            if (k != 0) {
                a = shift_window(a, k, opts.boundary);
                b = shift_window(b, k, opts.boundary);
            }
        }
        out.first.push(a);
        out.second.push(b);
    }
    return out;
}

}  // namespace kpplab
