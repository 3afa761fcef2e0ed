#include "kpplab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/interface.hpp"

namespace kpplab {

std::string to_string(PerturbationKind k) {
    switch (k) {
        case PerturbationKind::Scale: return "scale";
        case PerturbationKind::Shift: return "shift";
        case PerturbationKind::FrontNoise: return "front_noise";
        case PerturbationKind::LeftFloor: return "left_floor";
        case PerturbationKind::LeftCutoff: return "left_cutoff";
    }
    return "scale";
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
    if (s == "scale") return PerturbationKind::Scale;
    if (s == "shift") return PerturbationKind::Shift;
    if (s == "front_noise") return PerturbationKind::FrontNoise;
    if (s == "left_floor") return PerturbationKind::LeftFloor;
    if (s == "left_cutoff") return PerturbationKind::LeftCutoff;
    throw ConfigError("unknown perturbation kind '" + s + "'");
}

PerturbationSpec PerturbationSpec::from_json(const nlohmann::json& j) {
    PerturbationSpec p;
    if (!j.is_object()) throw ConfigError("perturbation must be an object");
    p.kind = perturbation_kind_from_string(j.value("kind", std::string("scale")));
    p.amplitude = j.value("amplitude", p.amplitude);
    p.decay_rate = j.value("decay_rate", p.decay_rate);
    p.seed = j.value("seed", p.seed);
    p.left_offset = j.value("left_offset", p.left_offset);
    return p;
}

nlohmann::json PerturbationSpec::to_json() const {
    return {{"kind", to_string(kind)},
            {"amplitude", amplitude},
            {"decay_rate", decay_rate},
            {"seed", seed},
            {"left_offset", left_offset}};
}

namespace {

std::size_t snapshot_index(const WaveProfile& w, double t) {
    for (std::size_t k = 0; k < w.t.size(); ++k)
        if (std::abs(w.t[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return k;
    std::ostringstream s;
    s << "t0 = " << t << " is not a recorded time of the wave";
    throw ConfigError(s.str());
}

// 1 behind the front, e^{-rate s} ahead of it.
double right_taper(double s, double rate) { return s <= 0.0 ? 1.0 : std::exp(-rate * s); }

}  // namespace

Perturbation make_perturbation(const WaveProfile& profile, double t0, const PerturbationSpec& spec) {
    if (!(spec.amplitude >= 0.0 && spec.amplitude < 1.0)) throw ConfigError("perturbation amplitude must lie in [0, 1)");
    if (!(spec.decay_rate > 0.0)) throw ConfigError("perturbation decay_rate must be positive");
    const std::size_t k = snapshot_index(profile, t0);
    const Field& U = profile.snapshots[k];
    const double X = profile.X[k];
    const double a = spec.amplitude;
    const int n = U.grid.n;

    Perturbation p;
    p.spec = spec;
    p.t0 = profile.t[k];
    p.u0 = U;
    std::vector<double> eta(static_cast<std::size_t>(n), 0.0);
    switch (spec.kind) {
        case PerturbationKind::Scale:
            for (int i = 0; i < n; ++i)
                eta[static_cast<std::size_t>(i)] = a * right_taper(U.grid.x(i) - X, spec.decay_rate);
            break;
        case PerturbationKind::Shift: {
            // profile moved back by 10 a, clipped to the amplitude
            const int cells = static_cast<int>(std::lround(10.0 * a / U.grid.dx));
            for (int i = 0; i < n; ++i) {
                const auto src = static_cast<std::size_t>(std::max(0, i - cells));
                const double r = U.values[src] / U.values[static_cast<std::size_t>(i)] - 1.0;
                eta[static_cast<std::size_t>(i)] =
                    std::clamp(r, -a, a) * right_taper(U.grid.x(i) - X, spec.decay_rate);
            }
            break;
        }
        case PerturbationKind::FrontNoise: {
            std::mt19937_64 rng(spec.seed);
            std::uniform_real_distribution<double> unit(-1.0, 1.0);
            for (int i = 0; i < n; ++i) {
                const double s = U.grid.x(i) - X;
                const double xi = unit(rng);
                eta[static_cast<std::size_t>(i)] = a * xi * std::exp(-s * s / 50.0) * right_taper(s, spec.decay_rate);
            }
            break;
        }
        case PerturbationKind::LeftFloor:
        case PerturbationKind::LeftCutoff: {
            const double L = spec.left_offset;
            for (int i = 0; i < n; ++i) {
                const double s = U.grid.x(i) - X;
                const double ramp = std::clamp((-s - 0.5 * L) / (0.5 * L), 0.0, 1.0);
                eta[static_cast<std::size_t>(i)] = -a * ramp;
            }
            break;
        }
    }
    const double floor_value = 0.5 * profile.entire->inf;
    for (int i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(i);
        double v = U.values[j] * (1.0 + eta[j]);
        const double s = U.grid.x(i) - X;
        if (spec.kind == PerturbationKind::LeftFloor && s <= -spec.left_offset) v = std::max(v, floor_value);
        if (spec.kind == PerturbationKind::LeftCutoff && s <= -spec.left_offset) v = 1e-8 * U.values[j];
        p.u0.values[j] = v;
        p.max_eta = std::max(p.max_eta, std::abs(v / U.values[j] - 1.0));
    }
    if (!(p.u0.min() > 0.0)) throw ConfigError("perturbation produced a nonpositive initial state");
    p.right_ratio_defect = std::abs(p.u0.values.back() / U.values.back() - 1.0);
    if (spec.kind == PerturbationKind::LeftCutoff) {
        p.admissible = false;
        p.flags.push_back("outside stability hypotheses: left tail is not bounded away from zero");
    }
    if (p.right_ratio_defect > 1e-3) {
        p.admissible = false;
        p.flags.push_back("outside stability hypotheses: u0/U at the right edge is not within 1e-3 of 1");
    }
    return p;
}

StabilityReport stability_experiment(const DispersalOperator& op, const ReactionModel& m, const WaveProfile& profile,
                                     const Perturbation& pert, const StabilityOptions& o) {
    if (!(o.horizon > 0.0) || !(o.sample_dt > 0.0)) throw ConfigError("stability: bad horizon or sample_dt");
    const std::size_t k0 = snapshot_index(profile, pert.t0);
    if (!pert.u0.grid.same_geometry(profile.snapshots[k0].grid))
        throw ConfigError("stability: perturbation is not on the wave's window");

    StabilityReport rep;
    rep.perturbation = to_string(pert.spec.kind);
    rep.spec = pert.spec.to_json();
    rep.admissible = pert.admissible;
    rep.flags = pert.flags;

    const double dt = profile.dt;
    const long n0 = std::lround(pert.t0 / dt);
    const long sample_steps = std::max(1L, std::lround(o.sample_dt / dt));
    const long total = std::lround(o.horizon / dt);
    Field U = profile.snapshots[k0];
    Field u = pert.u0;
    u.t = U.t;
    Stepper su(op, m, U.grid, profile.boundary), sw(op, m, u.grid, profile.boundary);
    const auto& ref = *profile.entire;
    const int n = U.grid.n;
    std::size_t next_snap = k0 + 1;
    bool armed = false;

    const auto record = [&](double t) {
        const Field uplus = ref.on_grid(U.grid, t);
        const auto X = interface_location(U, uplus, profile.level);
        if (!X) throw NumericError("stability: interface left the window");
        double R = 0.0, Rf = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto j = static_cast<std::size_t>(i);
            const double r = std::abs(u.values[j] / U.values[j] - 1.0);
            if (!std::isfinite(r)) continue;
            R = std::max(R, r);
            if (U.grid.x(i) >= *X + o.x_off) Rf = std::max(Rf, r);
        }
        rep.t.push_back(t);
        rep.R.push_back(R);
        rep.R_front.push_back(Rf);
        rep.X.push_back(*X);
        const auto rho = part_metric(u, U);
        rep.rho.push(t, rho);
        if (!rho && rep.diagnosis.empty())
            rep.diagnosis = "part metric undefined: window too narrow or tail underflow";
        if (armed && Rf > o.eps0) rep.front_zone_ok = false;
        if (Rf < 0.5 * o.eps0) armed = true;
        if (!rep.time_to_target && R < o.eps_target) rep.time_to_target = t - pert.t0;
    };

    record(U.t);
    for (long j = 1; j <= total; ++j) {
        su.advance(U, dt);
        sw.advance(u, dt);
        const double t = static_cast<double>(n0 + j) * dt;
        U.t = u.t = t;
        const bool stored = next_snap < profile.t.size() &&
                            std::abs(profile.t[next_snap] - t) <= 1e-9 * std::max(1.0, std::abs(t));
        if (stored) {
            // follow the wave's own window so the re-evolved U can be compared cell by cell
            const Field& s = profile.snapshots[next_snap];
            const long shift = s.grid.window_shift - U.grid.window_shift;
            if (shift != 0) {
                U = shift_window(U, static_cast<int>(shift), profile.boundary);
                u = shift_window(u, static_cast<int>(shift), profile.boundary);
            }
            for (int i = 0; i < n; ++i) {
                const auto c = static_cast<std::size_t>(i);
                rep.reevolution_error =
                    std::max(rep.reevolution_error, std::abs(U.values[c] - s.values[c]) / s.values[c]);
            }
            ++rep.reevolution_checked;
            ++next_snap;
        } else if (j % sample_steps == 0) {
            const Field uplus = ref.on_grid(U.grid, t);
            const auto X = interface_location(U, uplus, profile.level);
            if (!X) throw NumericError("stability: interface left the window");
            const double target = U.grid.x(0) + 0.5 * U.grid.length();
            if (std::abs(*X - target) > U.grid.length() / 6.0) {
                const int shift = static_cast<int>(std::lround((*X - target) / U.grid.dx));
                U = shift_window(U, shift, profile.boundary);
                u = shift_window(u, shift, profile.boundary);
            }
        }
        if (j % sample_steps == 0) record(t);
    }
    rep.rho_monotone = rep.rho.monotone(o.rho_slack);
    rep.pass = rep.rho_monotone && rep.time_to_target.has_value() && rep.front_zone_ok && rep.diagnosis.empty();
    return rep;
}

nlohmann::json StabilityReport::to_json() const {
    nlohmann::json j = {{"perturbation", perturbation},
                        {"spec", spec},
                        {"admissible", admissible},
                        {"flags", flags},
                        {"samples", t.size()},
                        {"R_final", R.empty() ? 0.0 : R.back()},
                        {"rho_initial", rho.samples.empty() ? 0.0 : rho.samples.front().rho},
                        {"rho_final", rho.samples.empty() ? 0.0 : rho.samples.back().rho},
                        {"rho_max_increase", rho.samples.size() > 1 ? rho.max_increase() : 0.0},
                        {"rho_monotone", rho_monotone},
                        {"front_zone_ok", front_zone_ok},
                        {"reevolution_error", reevolution_error},
                        {"reevolution_checked", reevolution_checked},
                        {"pass", pass}};
    j["time_to_target"] = time_to_target ? nlohmann::json(*time_to_target) : nlohmann::json(nullptr);
    if (!diagnosis.empty()) j["diagnosis"] = diagnosis;
    return j;
}

DecrementCheck decrement_verification(const StabilityReport& report, double eps0, double tau) {
    DecrementCheck c;
    const auto est = decrement_estimate(report.rho, eps0, tau);
    c.windows = est.segments;
    c.applicable = est.segments > 0;
    c.delta = est.delta;
    c.pass = c.applicable && est.delta && *est.delta > 0.0;
    return c;
}

nlohmann::json DecrementCheck::to_json() const {
    nlohmann::json j = {{"applicable", applicable}, {"windows", windows}, {"pass", pass}};
    j["delta"] = delta ? nlohmann::json(*delta) : nlohmann::json(nullptr);
    return j;
}

StabilitySweep stability_sweep(const DispersalOperator& op, const ReactionModel& m, const WaveProfile& profile,
                               const std::vector<PerturbationKind>& kinds, const std::vector<double>& amplitudes,
                               const std::vector<std::uint64_t>& seeds, double t0, const StabilityOptions& opts) {
    StabilitySweep sw;
    for (auto kind : kinds)
        for (double a : amplitudes)
            for (auto seed : seeds) {
                PerturbationSpec spec;
                spec.kind = kind;
                spec.amplitude = a;
                spec.seed = seed;
                const auto p = make_perturbation(profile, t0, spec);
                sw.reports.push_back(stability_experiment(op, m, profile, p, opts));
                const auto& r = sw.reports.back();
                if (!r.admissible) {
                    ++sw.flagged;
                    continue;
                }
                ++sw.asserted;
                if (r.pass) ++sw.passed;
            }
    sw.pass = sw.asserted > 0 && sw.passed == sw.asserted;
    return sw;
}

nlohmann::json StabilitySweep::to_json() const {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : reports) runs.push_back(r.to_json());
    return {{"asserted", asserted}, {"passed", passed}, {"flagged", flagged}, {"pass", pass}, {"runs", runs}};
}

BasinReport entire_basin_experiment(const DispersalOperator& op, const ReactionModel& m, const EntireSolution& U,
                                    const std::vector<double>& scales, const std::vector<double>& t0_samples,
                                    double horizon, double tol) {
    std::vector<EntirePerturbation> family;
    for (double s : scales) {
        if (!(s > 0.0)) throw ConfigError("basin: scales must be positive");
        family.push_back(EntirePerturbation::scaled(s));
    }
    BasinReport b;
    b.runs = verify_entire(op, m, U, family, t0_samples, horizon, tol);
    for (const auto& tr : b.runs.traces) {
        if (!tr.time_to_tol || tr.error.front() <= tol) continue;
        b.min_time = b.min_time ? std::min(*b.min_time, *tr.time_to_tol) : *tr.time_to_tol;
        b.max_time = b.max_time ? std::max(*b.max_time, *tr.time_to_tol) : *tr.time_to_tol;
    }
    if (b.max_time && *b.max_time > 0.0) b.spread = (*b.max_time - *b.min_time) / *b.max_time;
    b.pass = b.runs.pass;
    return b;
}

nlohmann::json BasinReport::to_json() const {
    nlohmann::json j = runs.to_json();
    j["min_time_to_tol"] = min_time ? nlohmann::json(*min_time) : nlohmann::json(nullptr);
    j["max_time_to_tol"] = max_time ? nlohmann::json(*max_time) : nlohmann::json(nullptr);
    j["time_spread"] = spread ? nlohmann::json(*spread) : nlohmann::json(nullptr);
    j["pass"] = pass;
    return j;
}

}  // namespace kpplab
