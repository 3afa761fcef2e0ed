#include "kpplab/entire.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/partmetric.hpp"

namespace kpplab {

namespace {

constexpr double kSlack = 8.0 * std::numeric_limits<double>::epsilon();

Boundary flat_boundary() {
    Boundary b;
    b.right_guide = [](const Grid&, double, int) { return 1.0; };
    return b;
}

// Advances u to t_end in equal steps no longer than dt_max.
void evolve_to(Stepper& s, Field& u, double t_end, double dt_max) {
    const double start = u.t;
    const double len = t_end - start;
    if (len <= 0.0) return;
    const int n = std::max(1, static_cast<int>(std::ceil(len / dt_max - 1e-9)));
    const double h = len / n;
    for (int j = 0; j < n; ++j) {
        s.advance(u, h);
        u.t = start + (j + 1) * h;
    }
    u.t = t_end;
}

double step_budget(const DispersalOperator& op, const ReactionModel& m, const Grid& g, const EntireGridOptions& o,
                   double t0, double t1, double u_max) {
    const double L = lipschitz_budget(m, g, t0, t1, u_max);
    if (o.dt) {
        check_step_size(op, g.dx, *o.dt, L, o.cfl_safety);
        return *o.dt;
    }
    return max_stable_dt(op, g.dx, L, o.cfl_safety);
}

bool periodic_in_time(const ReactionModel& m, double T_iter) {
    if (m.time_independent) return true;
    if (!m.T_period) return false;
    const double k = T_iter / *m.T_period;
    return std::abs(k - std::round(k)) < 1e-9 * std::max(1.0, k);
}

struct Sandwich {
    Field lower, upper;
    std::vector<double> gaps;
    bool monotone = true;
    bool converged = false;
    int iterations = 0;
};

// Constants delta and M pushed from t_a - n T_iter to t_a for n = 1, 2, ...
Sandwich iterate(const DispersalOperator& op, const ReactionModel& m, const Grid& g, const Boundary& b,
                 double delta, double M, double T_iter, double t_a, int n_max, double tol, double dt_max,
                 std::optional<int> fixed_n = std::nullopt) {
    Sandwich s;
    s.lower = Field::constant(g, delta, t_a);
    s.upper = Field::constant(g, M, t_a);
    const auto gap0 = part_metric(s.upper, s.lower);
    s.gaps.push_back(*gap0);
    if (!fixed_n && *gap0 < tol) {
        s.converged = true;
        return s;
    }
    Stepper sl(op, m, g, b), su(op, m, g, b);
    const bool incremental = periodic_in_time(m, T_iter);
    int stagnant = 0;
    const int last = fixed_n ? *fixed_n : n_max;
    for (int n = 1; n <= last; ++n) {
        Field lo, hi;
        if (incremental) {
            lo = s.lower;
            hi = s.upper;
            lo.t = hi.t = t_a - T_iter;
        } else {
            lo = Field::constant(g, delta, t_a - n * T_iter);
            hi = Field::constant(g, M, t_a - n * T_iter);
        }
        evolve_to(sl, lo, t_a, dt_max);
        evolve_to(su, hi, t_a, dt_max);
        for (std::size_t i = 0; i < lo.values.size(); ++i) {
            const double a = lo.values[i], c = hi.values[i];
            const double a0 = s.lower.values[i], c0 = s.upper.values[i];
            const double slack = kSlack * std::max({std::abs(a), std::abs(c), std::abs(a0), std::abs(c0)});
            if (a < a0 - slack || c > c0 + slack || a > c + slack) s.monotone = false;
        }
        s.lower = std::move(lo);
        s.upper = std::move(hi);
        const auto gap = part_metric(s.upper, s.lower);
        if (!gap) throw NumericError("entire iteration: lower iterate underflowed");
        s.iterations = n;
        const double prev = s.gaps.back();
        s.gaps.push_back(*gap);
        if (fixed_n) continue;
        if (*gap < tol) {
            s.converged = true;
            break;
        }
        stagnant = *gap >= 0.999 * prev ? stagnant + 1 : 0;
        if (stagnant >= 3) break;
    }
    return s;
}

// Time interpolation inside the stored window only.
Field window_at(const EntireSolution& U, double t) {
    const double span = U.t_b - U.t_a;
    const double eps = 1e-9 * std::max(1.0, span);
    if (t < U.t_a - eps || t > U.t_b + eps) {
        std::ostringstream s;
        s << "entire solution queried at t=" << t << " outside [" << U.t_a << ", " << U.t_b << "]";
        throw DomainError(s.str());
    }
    const double pos = std::clamp((t - U.t_a) / U.snap_dt, 0.0, static_cast<double>(U.snapshots.size() - 1));
    auto k = static_cast<std::size_t>(std::floor(pos));
    double frac = pos - static_cast<double>(k);
    if (frac > 1.0 - 1e-9) {
        ++k;
        frac = 0.0;
    }
    if (k + 1 >= U.snapshots.size() || frac < 1e-9) {
        Field f = U.snapshots[std::min(k, U.snapshots.size() - 1)];
        f.t = t;
        return f;
    }
    Field f = U.snapshots[k];
    const auto& nx = U.snapshots[k + 1].values;
    for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = (1.0 - frac) * f.values[i] + frac * nx[i];
    f.t = t;
    return f;
}

double sample_space(const Field& f, double x) {
    const Grid& g = f.grid;
    double s = (x - g.x(0)) / g.dx;
    const int n = g.n;
    if (g.periodic) {
        s = std::fmod(s, static_cast<double>(n));
        if (s < 0) s += n;
        const int i = static_cast<int>(std::floor(s)) % n;
        const double fr = s - std::floor(s);
        return (1.0 - fr) * f.values[static_cast<std::size_t>(i)] + fr * f.values[static_cast<std::size_t>((i + 1) % n)];
    }
    if (s <= 0.0) return f.values.front();
    if (s >= n - 1) return f.values.back();
    const int i = static_cast<int>(std::floor(s));
    const double fr = s - i;
    return (1.0 - fr) * f.values[static_cast<std::size_t>(i)] + fr * f.values[static_cast<std::size_t>(i + 1)];
}

}  // namespace

Grid entire_grid(const DispersalOperator& op, const ReactionModel& m, const EntireGridOptions& o) {
    double dx = o.dx;
    if (!op.is_random() && !(dx > 0.0)) dx = op.kernel().r0 / 8.0;
    if (!(dx > 0.0)) throw ConfigError("grid dx must be positive");
    if (m.space_independent) {
        if (op.is_random()) return Grid::ring(3.0, 3);
        const double h = op.kernel().r0 / 2.0;
        return Grid::ring(3.0 * h, 3);
    }
    if (m.p_period) {
        const double p = *m.p_period;
        const int n = std::max(3, static_cast<int>(std::lround(p / dx)));
        const double h = p / n;
        int periods = 1;
        if (!op.is_random())
            while (op.halo(h) > n * periods) ++periods;
        return Grid::ring(p * periods, n * periods);
    }
    if (!(o.x_hi > o.x_lo)) throw ConfigError("entire window: x_hi must exceed x_lo");
    const int n = static_cast<int>(std::lround((o.x_hi - o.x_lo) / dx)) + 1;
    return Grid::window(o.x_lo, dx, n);
}

FloorCalibration calibrate_floor(const DispersalOperator& op, const ReactionModel& m, const CalibrationOptions& opts) {
    const Grid g = entire_grid(op, m, opts.grid);
    const Boundary b = g.periodic ? Boundary{} : flat_boundary();
    const double span = m.T_period ? *m.T_period : 4.0;
    std::vector<double> t0s;
    for (int k = 0; k < opts.t0_samples; ++k) t0s.push_back(span * k / opts.t0_samples);
    const double dt = step_budget(op, m, g, opts.grid, 0.0, span + opts.max_T, m.P0 + 1.0);

    FloorCalibration out;
    Stepper st(op, m, g, b);
    for (int k = 1; k <= opts.max_halvings; ++k) {
        const double delta = m.P0 * std::ldexp(1.0, -k);
        std::vector<Field> fields;
        for (double t0 : t0s) fields.push_back(Field::constant(g, delta, t0));
        for (double T = 1.0; T <= opts.max_T; T *= 2.0) {
            ++out.attempts;
            bool all = true;
            for (std::size_t j = 0; j < fields.size(); ++j) {
                evolve_to(st, fields[j], t0s[j] + T, dt);
                if (!(fields[j].min() > delta)) all = false;
            }
            if (all) {
                out.delta = delta;
                out.T = T;
                return out;
            }
        }
    }
    throw ConstructionError("calibrate_floor: no constant floor grows above itself; growth at zero too weak");
}

EntireSolution build_entire(const DispersalOperator& op, const ReactionModel& m, const EntireOptions& opts) {
    EntireSolution U;
    U.grid = entire_grid(op, m, opts.grid);
    const Boundary b = U.grid.periodic ? Boundary{} : flat_boundary();
    U.T_period = m.T_period;
    U.time_independent = m.time_independent;

    double delta = 0.0, T_iter = 0.0;
    if (!opts.delta || !opts.T_iter) {
        CalibrationOptions co;
        co.grid = opts.grid;
        co.grid.dt.reset();
        const auto cal = calibrate_floor(op, m, co);
        delta = opts.delta.value_or(cal.delta);
        T_iter = opts.T_iter.value_or(cal.T);
    } else {
        delta = *opts.delta;
        T_iter = *opts.T_iter;
    }
    if (!m.time_independent && m.T_period) T_iter = *m.T_period * std::ceil(T_iter / *m.T_period - 1e-9);
    const double M = opts.M.value_or(m.P0);
    if (!(delta > 0.0)) throw ConfigError("build_entire: delta must be positive");
    if (!(M >= delta)) throw ConfigError("build_entire: M must be at least delta");
    if (!(T_iter > 0.0)) throw ConfigError("build_entire: T_iter must be positive");
    if (opts.n_max < 0) throw ConfigError("build_entire: n_max must be nonnegative");
    U.delta = delta;
    U.M = M;
    U.T_iter = T_iter;

    const double period = m.T_period && !m.time_independent ? *m.T_period : 0.0;
    U.t_a = opts.t_a;
    U.t_b = opts.t_b.value_or(period > 0 ? opts.t_a + 3.0 * period : opts.t_a + (m.time_independent ? 1.0 : 10.0));
    if (!(U.t_b > U.t_a)) throw ConfigError("build_entire: window must have t_b > t_a");
    U.snap_dt = opts.snap_dt.value_or(period > 0 ? period / 64.0 : 0.05);

    const double u_max = std::max(M, m.P0 + 1.0);
    const double dt_max =
        step_budget(op, m, U.grid, opts.grid, U.t_a - std::max(1, opts.n_max) * T_iter, U.t_b, u_max);

    Sandwich s = iterate(op, m, U.grid, b, delta, M, T_iter, U.t_a, opts.n_max, opts.tol, dt_max);
    U.gap_history = s.gaps;
    U.iterations = s.iterations;
    U.converged = s.converged;
    U.sandwich_monotone = s.monotone;
    for (std::size_t n = 0; n + 1 < s.gaps.size(); ++n)
        if (s.gaps[n] >= opts.tol && s.gaps[n] > 0.0) U.max_gap_ratio = std::max(U.max_gap_ratio, s.gaps[n + 1] / s.gaps[n]);

    Field u = s.lower;
    for (std::size_t i = 0; i < u.values.size(); ++i) u.values[i] = 0.5 * (s.lower.values[i] + s.upper.values[i]);
    u.t = U.t_a;

    U.steps_per_snap = std::max(1, static_cast<int>(std::ceil(U.snap_dt / dt_max - 1e-9)));
    const double h = U.snap_dt / U.steps_per_snap;
    const long count = std::lround(std::ceil((U.t_b - U.t_a) / U.snap_dt - 1e-9));
    U.t_b = U.t_a + count * U.snap_dt;
    Stepper st(op, m, U.grid, b);
    U.snapshots.push_back(u);
    for (long k = 1; k <= count; ++k) {
        for (int j = 0; j < U.steps_per_snap; ++j) st.advance(u, h);
        u.t = U.t_a + k * U.snap_dt;
        U.snapshots.push_back(u);
    }
    U.inf = std::numeric_limits<double>::infinity();
    U.sup = 0.0;
    for (const auto& f : U.snapshots) {
        U.inf = std::min(U.inf, f.min());
        U.sup = std::max(U.sup, f.max());
    }

    if (!U.grid.periodic && opts.edge_check && U.iterations > 0) {
        const int pad_cells = U.grid.n / 4;
        Grid wide = U.grid;
        wide.x_min -= pad_cells * wide.dx;
        wide.n += 2 * pad_cells;
        const Sandwich w =
            iterate(op, m, wide, b, delta, M, T_iter, U.t_a, opts.n_max, opts.tol, dt_max, U.iterations);
        const Field& mine = U.snapshots.front();
        for (int i = U.grid.n / 4; i < 3 * U.grid.n / 4; ++i) {
            const auto wi = static_cast<std::size_t>(i + pad_cells);
            const double mid = 0.5 * (w.lower.values[wi] + w.upper.values[wi]);
            U.edge_sensitivity = std::max(U.edge_sensitivity, std::abs(mid - mine.values[static_cast<std::size_t>(i)]));
        }
    }
    return U;
}

Field EntireSolution::at(double t) const {
    if (snapshots.empty()) throw ConfigError("entire solution has no snapshots");
    if (time_independent) {
        Field f = snapshots.back();
        f.t = t;
        return f;
    }
    if (T_period && t_b - t_a >= *T_period * (1.0 - 1e-9)) {
        const double T = *T_period;
        double tt = std::fmod(t - t_a, T);
        if (tt < 0) tt += T;
        Field f = window_at(*this, t_a + tt);
        f.t = t;
        return f;
    }
    return window_at(*this, t);
}

double EntireSolution::value(double t, double x) const { return sample_space(at(t), x); }

Field EntireSolution::on_grid(const Grid& g, double t) const {
    const Field f = at(t);
    if (g.same_geometry(f.grid)) return f;
    return Field::sample(g, [&f](double x) { return sample_space(f, x); }, t);
}

EntirePerturbation EntirePerturbation::scaled(double factor) {
    std::ostringstream s;
    s << "scale_" << factor;
    return {s.str(), [factor](const Field& u) {
                Field v = u;
                for (double& x : v.values) x *= factor;
                return v;
            }};
}

EntireReport verify_entire(const DispersalOperator& op, const ReactionModel& m, const EntireSolution& U,
                           const std::vector<EntirePerturbation>& perturbations, const std::vector<double>& t0_samples,
                           double horizon, double tol, double sample_dt) {
    EntireReport rep;
    rep.tol = tol;
    rep.horizon = horizon;
    const Boundary b = U.grid.periodic ? Boundary{} : flat_boundary();
    const double h = U.dt();
    const int per_sample = std::max(1, static_cast<int>(std::lround(sample_dt / h)));
    const double stride = per_sample * h;
    const long samples = static_cast<long>(std::ceil(horizon / stride - 1e-9));
    rep.pass = true;
    for (double t0 : t0_samples) {
        const Field base = U.at(t0);
        for (const auto& p : perturbations) {
            Field u = p.make(base);
            u.t = t0;
            if (!u.grid.same_geometry(U.grid)) throw ConfigError("perturbation changed the grid");
            if (!(u.min() > 0.0)) throw ConfigError("verify_entire: initial data must be bounded away from zero");
            EntireTrace tr;
            tr.perturbation = p.name;
            tr.t0 = t0;
            Stepper st(op, m, U.grid, b);
            const auto record = [&](double t) {
                const Field ref = U.at(t);
                double e = 0.0;
                for (std::size_t i = 0; i < u.values.size(); ++i) e = std::max(e, std::abs(u.values[i] - ref.values[i]));
                tr.t.push_back(t - t0);
                tr.error.push_back(e);
                if (!tr.time_to_tol && e < tol) tr.time_to_tol = t - t0;
            };
            record(t0);
            for (long k = 1; k <= samples; ++k) {
                for (int j = 0; j < per_sample; ++j) st.advance(u, h);
                u.t = t0 + k * stride;
                record(u.t);
            }
            if (tr.time_to_tol) rep.max_time_to_tol = std::max(rep.max_time_to_tol, *tr.time_to_tol);
            else rep.pass = false;
            rep.traces.push_back(std::move(tr));
        }
    }
    return rep;
}

nlohmann::json EntireReport::to_json() const {
    nlohmann::json j;
    j["tol"] = tol;
    j["horizon"] = horizon;
    j["max_time_to_tol"] = max_time_to_tol;
    j["pass"] = pass;
    j["traces"] = nlohmann::json::array();
    for (const auto& t : traces) {
        nlohmann::json o;
        o["perturbation"] = t.perturbation;
        o["t0"] = t.t0;
        o["final_error"] = t.error.empty() ? 0.0 : t.error.back();
        if (t.time_to_tol) o["time_to_tol"] = *t.time_to_tol;
        else o["time_to_tol"] = nullptr;
        j["traces"].push_back(o);
    }
    return j;
}

RecurrenceReport check_recurrence(const EntireSolution& U, std::optional<double> T, std::optional<double> p,
                                  double tol) {
    RecurrenceReport r;
    r.pass = true;
    if (T) {
        if (!(*T > 0.0)) throw ConfigError("check_recurrence: T must be positive");
        if (U.t_b - U.t_a < 3.0 * *T * (1.0 - 1e-9))
            throw ConfigError("check_recurrence: window shorter than three time periods");
        double d = 0.0;
        for (double t = U.t_a; t + *T <= U.t_b + 1e-9 * U.snap_dt; t += U.snap_dt) {
            const Field a = window_at(U, t), c = window_at(U, std::min(t + *T, U.t_b));
            for (std::size_t i = 0; i < a.values.size(); ++i) d = std::max(d, std::abs(a.values[i] - c.values[i]));
        }
        r.time_defect = d;
        if (d >= tol) r.pass = false;
    }
    const Grid& g = U.grid;
    if (p) {
        if (!(*p > 0.0)) throw ConfigError("check_recurrence: p must be positive");
        const double shift = *p / g.dx;
        if (!g.periodic && g.length() < 3.0 * *p) throw ConfigError("check_recurrence: window shorter than three periods");
        double d = 0.0;
        for (const auto& f : U.snapshots) {
            const int lo = g.periodic ? 0 : g.n / 10;
            const int hi = g.periodic ? g.n : g.n - g.n / 10 - static_cast<int>(std::ceil(shift));
            for (int i = lo; i < hi; ++i)
                d = std::max(d, std::abs(sample_space(f, g.x(i) + *p) - f.values[static_cast<std::size_t>(i)]));
        }
        r.space_defect = d;
        if (d >= tol) r.pass = false;
    }
    if (!T && !p) {
        if (g.n < 3) throw ConfigError("check_recurrence: grid too small");
        const Field& f = U.snapshots.back();
        const int edge = g.periodic ? 0 : g.n / 10;
        const int max_shift = g.periodic ? g.n - 1 : (g.n - 2 * edge) / 2;
        if (max_shift < 1) throw ConfigError("check_recurrence: window too short to scan shifts");
        double prev = 0.0;
        for (int k = 1; k <= max_shift; ++k) {
            double d = 0.0;
            const int last = g.periodic ? g.n : g.n - edge - k;
            for (int i = edge; i < last; ++i) {
                const auto a = static_cast<std::size_t>(i);
                const auto c = static_cast<std::size_t>((i + k) % g.n);
                d = std::max(d, std::abs(f.values[c] - f.values[a]));
            }
            if (d < tol) {
                const double tau = k * g.dx;
                r.almost_periods.push_back(tau);
                r.max_gap = std::max(r.max_gap, tau - prev);
                prev = tau;
            }
        }
        r.scanned = max_shift * g.dx;
        if (r.almost_periods.empty()) r.pass = false;
        else {
            r.max_gap = std::max(r.max_gap, r.scanned - prev);
            if (r.max_gap > 0.5 * r.scanned && r.scanned > 2.0 * g.dx) r.pass = false;
        }
    }
    return r;
}

nlohmann::json RecurrenceReport::to_json() const {
    nlohmann::json j;
    j["time_defect"] = time_defect ? nlohmann::json(*time_defect) : nlohmann::json(nullptr);
    j["space_defect"] = space_defect ? nlohmann::json(*space_defect) : nlohmann::json(nullptr);
    j["almost_periods"] = almost_periods;
    j["max_gap"] = max_gap;
    j["scanned"] = scanned;
    j["pass"] = pass;
    return j;
}

}  // namespace kpplab
