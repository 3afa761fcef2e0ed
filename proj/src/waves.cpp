#include "kpplab/waves.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/interface.hpp"
#include "kpplab/spectral.hpp"

namespace kpplab {

namespace {

std::string where(const char* what, double t, double x) {
    std::ostringstream s;
    s << what << " (worst at t=" << t << ", x=" << x << ")";
    return s.str();
}

double hermite(double x0, double h, double u0, double u1, double d0, double d1, double xx) {
    const double s = (xx - x0) / h;
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * u0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * u1 + (s3 - s2) * h * d1;
}

double hermite_slope(double x0, double h, double u0, double u1, double d0, double d1, double xx) {
    const double s = (xx - x0) / h;
    const double s2 = s * s;
    return ((6 * s2 - 6 * s) * u0 + (3 * s2 - 4 * s + 1) * h * d0 + (-6 * s2 + 6 * s) * u1 + (3 * s2 - 2 * s) * h * d1) /
           h;
}

void require_step(const PairOptions& o) {
    if (!(o.dt > 0.0)) throw ConfigError("pair: dt must be set to the wave time step");
    if (!(o.dx > 0.0)) throw ConfigError("pair: dx must be positive");
    if (o.t_samples < 2) throw ConfigError("pair: need at least two sampled times");
}

// Log-phi of a time-independent decaying grid eigenvector times e^{lambda_eff t}.
struct DecayFrame {
    std::shared_ptr<DiscreteDecay> d;

    double log_phi(double t, double x) const { return d->log_value(x) + d->lambda_eff * t; }
    // Rightmost x with log phi(t, x) = 0; log phi decreases in x.
    double interface(double t) const {
        const double target = -d->lambda_eff * t;
        long lo = d->i_lo, hi = d->i_hi;
        if (d->log_value_cell(lo) < target) return static_cast<double>(lo) * d->dx + d->x0;
        if (d->log_value_cell(hi) > target) {
            const double rate = -std::log(d->right_ratio) / d->dx;
            return d->x0 + static_cast<double>(hi) * d->dx + (d->log_value_cell(hi) - target) / rate;
        }
        while (hi - lo > 1) {
            const long mid = lo + (hi - lo) / 2;
            if (d->log_value_cell(mid) >= target) lo = mid;
            else hi = mid;
        }
        const double a = d->log_value_cell(lo), b = d->log_value_cell(hi);
        return d->x0 + (static_cast<double>(lo) + (a - target) / (a - b)) * d->dx;
    }
};

DecayFrame decay_frame(const ReactionModel& m, double lambda, const PairOptions& o) {
    const long span = std::lround(800.0 / o.dx);
    try {
        return {std::make_shared<DiscreteDecay>(discrete_decay(m, lambda, 0.0, o.dx, o.dt, -span, span))};
    } catch (const ConvergenceError&) {
        throw ConstructionError("lambda is not above the principal eigenvalue of the medium");
    } catch (const UnsupportedError&) {
        throw ConstructionError("lambda is not above the principal eigenvalue of the medium");
    }
}

// Speed lambda(mu)/mu of the scheme decreases at mu when mu sits below mu*.
void require_below_mu_star(const DispersalOperator& op, const ReactionModel& m, double mu, const FloquetTable& at_mu,
                           const PairOptions& o, const char* name) {
    const double mu2 = mu * 1.01;
    const auto next = floquet_table(op, m, mu2, o.dx, o.dt);
    if (!(next.lambda / mu2 < at_mu.lambda / mu)) {
        std::ostringstream s;
        s << name << " = " << mu << " is not below the minimal-speed exponent";
        throw ConstructionError(s.str());
    }
}

void choose_d1(const DispersalOperator& op, const ReactionModel& m, SubSuperPair& pair, const PairOptions& o) {
    ResidualReport last;
    for (int k = 0; k <= o.max_doublings; ++k) {
        pair.d1_star = std::ldexp(1.0, k);
        last = pair_residuals(op, m, pair, o);
        if (last.pass) {
            pair.residual = last;
            return;
        }
        if (last.super_defect > o.residual_tol) break;
    }
    pair.residual = last;
    throw ConstructionError(where("no d1 makes the lower barrier a sub-solution", last.worst_t, last.worst_x));
}

double table_log_growth(const FloquetTable& t, int k) {
    return t.log_growth[static_cast<std::size_t>(k + 1)] - t.log_growth[static_cast<std::size_t>(k)];
}

}  // namespace

// ---------------------------------------------------------------- front profile

FrontProfile front_profile(const std::function<double(double)>& g, double alpha, double M_sub, const FrontOptions& o) {
    if (!g) throw ConfigError("front_profile: g is missing");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("front_profile: alpha must lie in (0, 1)");
    if (!(M_sub >= 0.0)) throw ConfigError("front_profile: M must be nonnegative");
    FrontProfile fp;
    fp.alpha = alpha;
    fp.M_sub = M_sub;
    fp.h = o.h;
    const double ra = std::sqrt(alpha);
    fp.c_front = ra + 1.0 / ra;
    const double c = fp.c_front;
    const auto gm = [&](double u) { return g(u) - M_sub * u * u; };

    const double e = 1e-6;
    const double g0 = (4.0 * g(e) - g(2 * e) - 3.0 * g(0.0)) / (2 * e);
    if (std::abs(g0 - 1.0) > 1e-4) throw ConfigError("front_profile: g'(0) must equal 1");

    double top = 1.0;
    if (std::abs(gm(1.0)) > 1e-12) {
        double u = 1.0;
        while (u > 1e-3 && !(gm(u) > 0.0)) u -= 1e-3;
        if (!(gm(u) > 0.0)) throw ConstructionError("front_profile: g_M has no positive part");
        double lo = u, hi = std::min(1.0, u + 1e-3);
        for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (gm(mid) > 0.0) lo = mid;
            else hi = mid;
        }
        top = 0.5 * (lo + hi);
    }
    fp.u_top = top;
    const double dd = 1e-6 * top;
    const double k = -(gm(top + dd) - gm(top - dd)) / (2 * dd);
    if (!(k > 0.0)) throw ConstructionError("front_profile: upper rest state is not a saddle");
    fp.rise = (-c + std::sqrt(c * c + 4.0 * k)) / 2.0;

    double U = top - o.start_offset * top;
    double P = -fp.rise * o.start_offset * top;
    double x = 0.0;
    const double h = o.h;
    const auto rhs = [&](double u, double p, double& du, double& dp) {
        du = p;
        dp = -c * p - gm(u);
    };
    fp.x.push_back(x);
    fp.U.push_back(U);
    fp.dU.push_back(P);
    const long max_steps = 20000000;
    for (long s = 0; U >= o.u_stop; ++s) {
        if (s >= max_steps) throw ConstructionError("front_profile: profile did not decay");
        double k1u, k1p, k2u, k2p, k3u, k3p, k4u, k4p;
        rhs(U, P, k1u, k1p);
        rhs(U + h / 2 * k1u, P + h / 2 * k1p, k2u, k2p);
        rhs(U + h / 2 * k2u, P + h / 2 * k2p, k3u, k3p);
        rhs(U + h * k3u, P + h * k3p, k4u, k4p);
        U += h / 6 * (k1u + 2 * k2u + 2 * k3u + k4u);
        P += h / 6 * (k1p + 2 * k2p + 2 * k3p + k4p);
        x += h;
        if (!std::isfinite(U) || !std::isfinite(P)) throw ConstructionError("front_profile: shot blew up");
        if (U > top * (1.0 + 1e-12)) throw ConstructionError("front_profile: profile overshoots the rest state");
        if (!(P < 0.0)) throw ConstructionError("front_profile: profile turns back");
        fp.x.push_back(x);
        fp.U.push_back(U);
        fp.dU.push_back(P);
    }
    // Tail normalization U e^{sqrt(alpha) x} -> 1.
    const double shift = std::log(fp.U.back()) / ra + fp.x.back();
    for (double& xx : fp.x) xx -= shift;
    return fp;
}

double FrontProfile::value(double xx) const {
    if (xx <= x.front()) return u_top - (u_top - U.front()) * std::exp(rise * (xx - x.front()));
    if (xx >= x.back()) return U.back() * std::exp(-std::sqrt(alpha) * (xx - x.back()));
    const auto i = std::min(static_cast<std::size_t>((xx - x.front()) / h), x.size() - 2);
    return hermite(x[i], h, U[i], U[i + 1], dU[i], dU[i + 1], xx);
}

double FrontProfile::slope(double xx) const {
    if (xx <= x.front()) return -(u_top - U.front()) * rise * std::exp(rise * (xx - x.front()));
    if (xx >= x.back()) return -std::sqrt(alpha) * value(xx);
    const auto i = std::min(static_cast<std::size_t>((xx - x.front()) / h), x.size() - 2);
    return hermite_slope(x[i], h, U[i], U[i + 1], dU[i], dU[i + 1], xx);
}

double FrontProfile::transform(double v) const {
    if (!(v > 0.0)) return 0.0;
    return value(-std::log(v) / std::sqrt(alpha));
}

double FrontProfile::transform_slope(double v) const {
    if (!(v > 0.0)) return 1.0;
    const double ra = std::sqrt(alpha);
    return slope(-std::log(v) / ra) * (-1.0 / (ra * v));
}

// ---------------------------------------------------------------- pairs

std::string to_string(PairFamily f) {
    switch (f) {
        case PairFamily::Naro2: return "naro2";
        case PairFamily::Naro3: return "naro3";
        case PairFamily::Zla: return "zla";
        case PairFamily::Rashzh: return "rashzh";
    }
    return "naro2";
}

PairFamily pair_family_from_string(const std::string& s) {
    if (s == "naro2") return PairFamily::Naro2;
    if (s == "naro3") return PairFamily::Naro3;
    if (s == "zla") return PairFamily::Zla;
    if (s == "rashzh") return PairFamily::Rashzh;
    throw ConfigError("unknown pair family '" + s + "'");
}

ResidualReport pair_residuals(const DispersalOperator& op, const ReactionModel& m, const SubSuperPair& pair,
                              const PairOptions& o) {
    require_step(o);
    const double dx = o.dx, dt = o.dt;
    const Stencil st = Stencil::build(op, dx);
    const int hw = st.half_width;
    const long n0 = std::lround(std::ceil(o.t_lo / dt));
    const long n1 = std::lround(std::floor(o.t_hi / dt)) - 1;
    if (n1 <= n0) throw ConfigError("pair: empty sampled time range");
    const long back = std::lround(std::ceil(o.x_back / dx)), ahead = std::lround(std::ceil(o.x_ahead / dx));
    const std::size_t cells = static_cast<std::size_t>(back + ahead + 1);

    ResidualReport rep;
    std::vector<double> lo(cells + 2 * hw), up(cells + 2 * hw), lap_lo(cells), lap_up(cells);
    double worst = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < o.t_samples; ++s) {
        const long n = n0 + (n1 - n0) * s / (o.t_samples - 1);
        const double t = static_cast<double>(n) * dt, t1 = static_cast<double>(n + 1) * dt;
        const long ic = std::lround(pair.X(t) / dx);
        const long first = ic - back;
        for (std::size_t j = 0; j < lo.size(); ++j) {
            const double x = static_cast<double>(first - hw + static_cast<long>(j)) * dx;
            lo[j] = std::max(pair.lower(t, x), 0.0);
            up[j] = pair.upper(t, x);
        }
        st.apply(lo, lap_lo);
        st.apply(up, lap_up);
        for (std::size_t i = 0; i < cells; ++i) {
            const double x = static_cast<double>(first + static_cast<long>(i)) * dx;
            const double w = lo[i + hw], W = up[i + hw];
            const double Nw = w + dt * (lap_lo[i] + w * m.f(t, x, w));
            const double NW = W + dt * (lap_up[i] + W * m.f(t, x, W));
            const double lower_next = pair.lower(t1, x);
            const double w_next = std::max(lower_next, 0.0);
            const double W_next = pair.upper(t1, x);
            const double scale = dt * std::max(pair.d_star * pair.phi(t1, x), std::numeric_limits<double>::min());
            const double sub = (w_next - Nw) / scale;
            const double sup = (NW - W_next) / scale;
            if (std::isfinite(sub)) rep.sub_defect = std::max(rep.sub_defect, sub);
            if (std::isfinite(sup)) rep.super_defect = std::max(rep.super_defect, sup);
            const double excess = pair.lower(t, x) / o.ceiling - 1.0;
            rep.ceiling_excess = std::max(rep.ceiling_excess, excess);
            const double bad = std::max({sub, sup, excess * 1e12});
            if (bad > worst) {
                worst = bad;
                rep.worst_t = t;
                rep.worst_x = x;
            }
            ++rep.samples;
        }
    }
    rep.pass = rep.sub_defect <= o.residual_tol && rep.super_defect <= o.residual_tol && rep.ceiling_excess <= 0.0;
    return rep;
}

nlohmann::json ResidualReport::to_json() const {
    return {{"super_defect", super_defect}, {"sub_defect", sub_defect}, {"ceiling_excess", ceiling_excess},
            {"worst_t", worst_t},           {"worst_x", worst_x},       {"samples", samples},
            {"pass", pass}};
}

SubSuperPair build_pair_naro2(const DispersalOperator& op, const ReactionModel& m, double mu, double mu_prime,
                              const PairOptions& o) {
    require_step(o);
    if (!op.is_random()) throw ConfigError("naro2 pairs need random dispersal");
    if (!(mu > 0.0 && mu_prime > mu && mu_prime < (1.0 + m.nu) * mu))
        throw ConfigError("naro2: need 0 < mu < mu' < (1 + nu) mu");
    const auto tm = std::make_shared<FloquetTable>(floquet_table(op, m, mu, o.dx, o.dt));
    const auto tp = std::make_shared<FloquetTable>(floquet_table(op, m, mu_prime, o.dx, o.dt));
    require_below_mu_star(op, m, mu, *tm, o, "mu");
    if (tm->steps != tp->steps) throw ConfigError("naro2: tables disagree on the period");

    // sigma slope: every step must raise the prefactor of phi1 over the exact mu' solution.
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < tm->steps; ++k)
        worst = std::max(worst, (table_log_growth(*tp, k) - mu_prime / mu * table_log_growth(*tm, k)) / o.dt);
    const double slope = std::max(0.0, worst) + o.margin;

    SubSuperPair p;
    p.family = PairFamily::Naro2;
    p.dx = o.dx;
    p.dt = o.dt;
    p.log_phi = [tm, mu](double t, double x) { return -mu * x + tm->log_amplitude(t) + std::log(tm->profile_at(t, x)); };
    p.phi1 = [tm, tp, mu, mu_prime, slope](double t, double x) {
        return std::exp(slope * t - mu_prime * x + mu_prime / mu * tm->log_amplitude(t)) * tp->profile_at(t, x);
    };
    p.X = [tm, mu](double t) { return tm->log_amplitude(t) / mu; };
    p.speed = tm->lambda / mu;
    p.decay_rate = mu_prime - mu;
    p.params = {{"mu", mu},           {"mu_prime", mu_prime},          {"lambda_mu", tm->lambda},
                {"lambda_mu_prime", tp->lambda}, {"sigma_slope", slope}, {"c_mu", p.speed}};
    choose_d1(op, m, p, o);
    p.params["d1"] = p.d1_star;
    return p;
}

SubSuperPair build_pair_naro3(const DispersalOperator& op, const ReactionModel& m, double lambda, double eps,
                              const PairOptions& o) {
    require_step(o);
    if (!op.is_random()) throw ConfigError("naro3 pairs need random dispersal");
    if (!m.time_independent) throw ConfigError("naro3: medium must be time independent");
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("naro3: eps must lie in (0, 1)");
    if (!(lambda > m.a_minus)) throw ConstructionError("naro3: lambda must exceed the principal eigenvalue");
    const DecayFrame fr = decay_frame(m, lambda, o);
    const auto& d = *fr.d;

    // Constant theta0 works when a - (1 + eps) sigma^2 stays positive.
    double margin = std::numeric_limits<double>::infinity();
    const long span = std::lround(300.0 / o.dx);
    for (long i = -span; i < span; ++i) {
        const double sigma = -(d.log_value_cell(i + 1) - d.log_value_cell(i)) / o.dx;
        margin = std::min(margin, m.a(0.0, static_cast<double>(i) * o.dx) - (1.0 + eps) * sigma * sigma);
    }
    if (!(margin > 0.0)) {
        std::ostringstream s;
        s << "naro3: no constant theta0 validates (margin " << margin << "); try a smaller eps";
        throw ConstructionError(s.str());
    }
    const double theta0 = 1.0;
    SubSuperPair p;
    p.family = PairFamily::Naro3;
    p.dx = o.dx;
    p.dt = o.dt;
    p.log_phi = [fr](double t, double x) { return fr.log_phi(t, x); };
    p.phi1 = [fr, eps, theta0](double t, double x) { return theta0 * std::exp((1.0 + eps) * fr.log_phi(t, x)); };
    p.X = [fr](double t) { return fr.interface(t); };
    p.speed = d.lambda_eff / d.mu_of_lambda;
    p.decay_rate = eps * d.mu_of_lambda;
    p.params = {{"lambda", lambda}, {"lambda_eff", d.lambda_eff}, {"eps", eps},
                {"theta0", theta0}, {"margin", margin},           {"mu_lambda", d.mu_of_lambda}};
    choose_d1(op, m, p, o);
    p.params["d1"] = p.d1_star;
    return p;
}

SubSuperPair build_pair_zla(const DispersalOperator& op, const ReactionModel& m, double lambda, double alpha,
                            double M_sub, const PairOptions& o) {
    require_step(o);
    if (!op.is_random()) throw ConfigError("zla pairs need random dispersal");
    if (!m.time_independent) throw ConfigError("zla: medium must be time independent");
    if (!m.g) throw ConfigError("zla: medium has no comparison nonlinearity g");
    const double lambda1 = 2.0 * m.a_minus;
    if (!(lambda < lambda1)) throw ConstructionError("zla: parameter window empty (lambda must stay below 2 inf a)");
    if (!(lambda > m.a_minus)) throw ConstructionError("zla: lambda must exceed the principal eigenvalue");
    const double alpha_lo = 1.0 - (lambda1 - lambda) / m.a_plus;
    if (!(alpha > alpha_lo && alpha < 1.0)) {
        std::ostringstream s;
        s << "zla: alpha must lie in (" << alpha_lo << ", 1)";
        throw ConfigError(s.str());
    }
    const DecayFrame fr = decay_frame(m, lambda, o);
    const auto front = std::make_shared<FrontProfile>(front_profile(m.g, alpha, 0.0));
    const auto frontM = std::make_shared<FrontProfile>(front_profile(m.g, alpha, M_sub));

    SubSuperPair p;
    p.family = PairFamily::Zla;
    p.dx = o.dx;
    p.dt = o.dt;
    p.front = front;
    p.log_phi = [fr](double t, double x) { return fr.log_phi(t, x); };
    p.phi1 = [fr, front](double t, double x) {
        const double v = std::exp(fr.log_phi(t, x));
        return v - front->transform(v);
    };
    p.psi = [fr, frontM](double t, double x) { return frontM->transform(std::exp(fr.log_phi(t, x))); };
    p.X = [fr](double t) { return fr.interface(t); };
    const double mu = fr.d->mu_of_lambda;
    p.speed = fr.d->lambda_eff / mu;
    p.decay_rate = mu * std::min(1.0, 1.0 / alpha - 1.0);
    p.params = {{"lambda", lambda}, {"lambda_eff", fr.d->lambda_eff}, {"alpha", alpha}, {"M_sub", M_sub},
                {"c_front", front->c_front}, {"mu_lambda", mu}, {"alpha_min", alpha_lo}};
    p.residual = pair_residuals(op, m, p, o);
    if (!p.residual.pass)
        throw ConstructionError(where("zla: barriers fail the discrete residual check", p.residual.worst_t,
                                      p.residual.worst_x));
    p.params["d1"] = p.d1_star;
    return p;
}

SubSuperPair build_pair_rashzh(const DispersalOperator& op, const ReactionModel& m, double mu, double mu1,
                               const PairOptions& o) {
    require_step(o);
    if (op.is_random()) throw ConfigError("rashzh pairs need nonlocal dispersal");
    if (!(mu > 0.0 && mu1 > mu && mu1 < 2.0 * mu)) throw ConfigError("rashzh: need 0 < mu < mu1 < 2 mu");
    const auto tm = std::make_shared<FloquetTable>(floquet_table(op, m, mu, o.dx, o.dt));
    const auto t1 = std::make_shared<FloquetTable>(floquet_table(op, m, mu1, o.dx, o.dt));
    require_below_mu_star(op, m, mu, *tm, o, "mu");
    require_below_mu_star(op, m, mu1, *t1, o, "mu1");
    const double c_mu = tm->lambda / mu;
    const double rate = mu1 * c_mu - t1->lambda;
    if (!(rate > 0.0)) throw ConstructionError("rashzh: c(mu1) must be below c(mu)");

    SubSuperPair p;
    p.family = PairFamily::Rashzh;
    p.dx = o.dx;
    p.dt = o.dt;
    p.log_phi = [tm, mu](double t, double x) { return -mu * x + tm->log_amplitude(t) + std::log(tm->profile_at(t, x)); };
    p.phi1 = [t1, mu1, rate](double t, double x) {
        return std::exp(-mu1 * x + rate * t + t1->log_amplitude(t)) * t1->profile_at(t, x);
    };
    p.X = [c_mu](double t) { return c_mu * t; };
    p.speed = c_mu;
    p.decay_rate = mu1 - mu;
    p.params = {{"mu", mu}, {"mu1", mu1}, {"lambda_mu", tm->lambda}, {"lambda_mu1", t1->lambda},
                {"c_mu", c_mu}, {"frame_rate", rate}};
    choose_d1(op, m, p, o);
    p.params["d0"] = p.d1_star;
    return p;
}

// ---------------------------------------------------------------- waves

namespace {

double round_up(double v, double q) { return q * std::ceil(v / q - 1e-9); }

double default_T_big(const SubSuperPair& pair, const WaveOptions& o) {
    if (o.T_big) return *o.T_big;
    const double rate = std::max(pair.speed * pair.decay_rate, 1e-3);
    return std::clamp(3.0 * std::log(1.0 / o.tol) / rate, 10.0, 80.0);
}

Boundary wave_boundary(std::shared_ptr<const SubSuperPair> pair, std::shared_ptr<const EntireSolution> entire) {
    Boundary b;
    // The leading edge feeds the front zone, so ghosts there are pinned to d phi
    // rather than copied from the last cell.
    b.right_value = [pair, entire](const Grid& g, double t, int k) {
        const double x = g.x(g.n - 1 + k);
        return std::min(entire->value(t, x), pair->d_star * pair->phi(t, x));
    };
    b.left_guide = [entire](const Grid& g, double t, int k) {
        const double x = g.x(0);
        return entire->value(t, x - k * g.dx) / entire->value(t, x);
    };
    return b;
}

Field barrier_start(const SubSuperPair& pair, const EntireSolution& entire, const Grid& g, double t) {
    Field u = entire.on_grid(g, t);
    for (int i = 0; i < g.n; ++i) {
        auto& v = u.values[static_cast<std::size_t>(i)];
        v = std::min(v, pair.d_star * pair.phi(t, g.x(i)));
    }
    u.t = t;
    return u;
}

}  // namespace

WaveProfile construct_wave(const DispersalOperator& op, const ReactionModel& m, const SubSuperPair& pair_in,
                           const EntireSolution& entire_in, const WaveOptions& o) {
    const double dx = pair_in.dx, dt = pair_in.dt;
    if (std::abs(entire_in.dt() - dt) > 1e-12 * dt)
        throw ConfigError("construct_wave: entire solution and pair use different time steps");
    if (!(o.horizon > 0.0) || !(o.record_dt > 0.0)) throw ConfigError("construct_wave: bad horizon or record_dt");
    WaveProfile w;
    auto pair = std::make_shared<const SubSuperPair>(pair_in);
    auto entire = std::make_shared<const EntireSolution>(entire_in);
    w.pair = pair;
    w.entire = entire;
    w.family = pair->family;
    w.pair_params = pair->params;
    w.d_star = pair->d_star;
    w.d1_star = pair->d1_star;
    w.dt = dt;
    w.level = o.level;
    w.boundary = wave_boundary(pair, entire);

    const double quantum = entire->snap_dt;
    const long rec_steps = std::max(1L, std::lround(o.record_dt / dt));
    const double rec = static_cast<double>(rec_steps) * dt;
    w.T_big = round_up(round_up(default_T_big(*pair, o), quantum), rec);
    const double T_extra = round_up(round_up(0.5 * w.T_big, quantum), rec);
    const long n_early = -std::lround((w.T_big + T_extra) / dt);
    const long n_start = -std::lround(w.T_big / dt);
    const long n_end = std::lround(o.horizon / dt);

    Grid g;
    g.x_min = 0.0;
    g.dx = dx;
    g.n = static_cast<int>(std::lround((o.window_back + o.window_ahead) / dx));
    const double t_early = static_cast<double>(n_early) * dt;
    g.window_shift = std::lround((pair->X(t_early) - o.window_back) / dx);
    g.validate();

    Field V = barrier_start(*pair, *entire, g, t_early);
    Field U;
    bool started = false;
    Stepper sv(op, m, g, w.boundary), su(op, m, g, w.boundary);
    const double slack = o.sandwich_slack;
    bool gap_done = false;
    w.min_value = std::numeric_limits<double>::infinity();

    for (long n = n_early; n < n_end; ++n) {
        if (n == n_start) {
            U = barrier_start(*pair, *entire, V.grid, static_cast<double>(n) * dt);
            started = true;
        }
        sv.advance(V, dt);
        V.t = static_cast<double>(n + 1) * dt;
        if (started) {
            su.advance(U, dt);
            U.t = V.t;
        }
        if ((n + 1 - n_early) % rec_steps != 0) continue;
        const double t = V.t;
        Field& lead = started ? U : V;
        const Field ref = entire->on_grid(lead.grid, t);
        const auto X = interface_location(lead, ref, o.level);
        if (!X) throw NumericError("construct_wave: interface left the window");
        const double target = lead.grid.x(0) + o.window_back;
        if (std::abs(*X - target) > (o.window_back + o.window_ahead) / 6.0) {
            const int k = static_cast<int>(std::lround((*X - target) / dx));
            V = shift_window(V, k, w.boundary);
            if (started) U = shift_window(U, k, w.boundary);
        }
        if (!started || t < -1e-9) continue;

        const Field ref2 = entire->on_grid(U.grid, t);
        const auto Xn = interface_location(U, ref2, o.level);
        if (!Xn) throw NumericError("construct_wave: interface left the window");
        w.t.push_back(t);
        w.X.push_back(*Xn);
        w.snapshots.push_back(U);
        for (int i = 0; i < U.grid.n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double x = U.grid.x(i), u = U.values[k];
            const double lo = pair->lower(t, x), up = pair->upper(t, x);
            const double viol = std::max({lo - u, u - up, 0.0});
            const double scale = std::max(u, std::numeric_limits<double>::min());
            w.sandwich_violation = std::max(w.sandwich_violation, viol / scale);
            w.max_ratio = std::max(w.max_ratio, u / ref2.values[k]);
            w.min_value = std::min(w.min_value, u);
        }
        if (!gap_done) {
            double gap = 0.0;
            for (int i = 0; i < U.grid.n; ++i) {
                const double x = U.grid.x(i);
                if (x < *Xn - 10.0 || x > *Xn + 20.0) continue;
                const auto k = static_cast<std::size_t>(i);
                gap = std::max(gap, std::abs(U.values[k] - V.values[k]) / U.values[k]);
            }
            w.start_gap = gap;
            w.converged = gap < o.tol;
            gap_done = true;
        }
    }
    w.sandwich_ok = w.sandwich_violation <= slack;
    return w;
}

nlohmann::json WaveProfile::to_json() const {
    return {{"family", to_string(family)},
            {"pair", pair_params},
            {"d_star", d_star},
            {"d1_star", d1_star},
            {"dt", dt},
            {"T_big", T_big},
            {"level", level},
            {"start_gap", start_gap},
            {"converged", converged},
            {"sandwich_violation", sandwich_violation},
            {"sandwich_ok", sandwich_ok},
            {"max_ratio", max_ratio},
            {"min_value", min_value},
            {"samples", t.size()}};
}

WaveDiagnostics wave_diagnostics(const WaveProfile& w, double eps1, double eps2, double tau,
                                 std::optional<double> delta) {
    if (w.t.size() < 10) throw ConfigError("wave_diagnostics: need at least 10 interface samples");
    if (!(eps1 > 0.0 && eps1 < eps2 && eps2 < 1.0)) throw ConfigError("wave_diagnostics: need 0 < eps1 < eps2 < 1");
    WaveDiagnostics d;
    d.samples = static_cast<int>(w.t.size());
    for (const auto& s : w.snapshots) {
        const Field ref = w.reference(s.grid, s.t);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int i = 0; i < s.grid.n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            const double r = s.values[k] / ref.values[k];
            if (r >= eps1 && r <= eps2) {
                lo = std::min(lo, s.grid.x(i));
                hi = std::max(hi, s.grid.x(i));
            }
        }
        if (hi >= lo) d.max_width = std::max(d.max_width, hi - lo);
    }
    const std::size_t n = w.t.size();
    const double span = w.t.back() - w.t.front();
    const double dmin = delta.value_or(std::max(tau, 0.5 * span));
    double least = std::numeric_limits<double>::infinity(), most = -least;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double gap = w.t[j] - w.t[i];
            if (gap <= tau + 1e-9) d.max_jump = std::max(d.max_jump, std::abs(w.X[j] - w.X[i]));
            if (gap >= dmin - 1e-9) {
                const double v = (w.X[j] - w.X[i]) / gap;
                least = std::min(least, v);
                most = std::max(most, v);
            }
        }
    d.mean_speed = (w.X.back() - w.X.front()) / span;
    d.least_mean_speed = std::isfinite(least) ? least : d.mean_speed;
    d.speed_converged = std::isfinite(least) && (most - least) <= 2e-2 * std::abs(d.mean_speed);
    return d;
}

nlohmann::json WaveDiagnostics::to_json() const {
    return {{"max_width", max_width},   {"max_jump", max_jump},           {"least_mean_speed", least_mean_speed},
            {"mean_speed", mean_speed}, {"speed_converged", speed_converged}, {"samples", samples}};
}

// ---------------------------------------------------------------- recipes

WaveRecipe WaveRecipe::from_json(const nlohmann::json& j) {
    WaveRecipe r;
    if (!j.is_object()) throw ConfigError("wave recipe must be an object");
    r.family = pair_family_from_string(j.value("family", std::string("naro2")));
    r.mu = j.value("mu", r.mu);
    r.mu2 = j.value("mu2", j.value("mu_prime", j.value("mu1", r.mu2)));
    r.lambda = j.value("lambda", r.lambda);
    r.eps = j.value("eps", r.eps);
    r.alpha = j.value("alpha", r.alpha);
    r.M_sub = j.value("M_sub", r.M_sub);
    r.dx = j.value("dx", r.dx);
    r.cfl_safety = j.value("cfl_safety", r.cfl_safety);
    r.wave.horizon = j.value("horizon", r.wave.horizon);
    if (j.contains("T_big") && !j["T_big"].is_null()) r.wave.T_big = j["T_big"].get<double>();
    r.wave.tol = j.value("tol", r.wave.tol);
    r.wave.record_dt = j.value("record_dt", r.wave.record_dt);
    r.wave.level = j.value("level", r.wave.level);
    r.wave.window_back = j.value("window_back", r.wave.window_back);
    r.wave.window_ahead = j.value("window_ahead", r.wave.window_ahead);
    r.wave.sandwich_slack = j.value("sandwich_slack", r.wave.sandwich_slack);
    r.pair.margin = j.value("margin", r.pair.margin);
    r.pair.residual_tol = j.value("residual_tol", r.pair.residual_tol);
    return r;
}

nlohmann::json WaveRecipe::to_json() const {
    nlohmann::json j = {{"family", to_string(family)},
                        {"mu", mu},
                        {"mu2", mu2},
                        {"lambda", lambda},
                        {"eps", eps},
                        {"alpha", alpha},
                        {"M_sub", M_sub},
                        {"dx", dx},
                        {"cfl_safety", cfl_safety},
                        {"horizon", wave.horizon},
                        {"tol", wave.tol},
                        {"record_dt", wave.record_dt},
                        {"level", wave.level},
                        {"window_back", wave.window_back},
                        {"window_ahead", wave.window_ahead},
                        {"sandwich_slack", wave.sandwich_slack},
                        {"margin", pair.margin},
                        {"residual_tol", pair.residual_tol}};
    j["T_big"] = wave.T_big ? nlohmann::json(*wave.T_big) : nlohmann::json(nullptr);
    return j;
}

WaveBundle build_wave(const DispersalOperator& op, const ReactionModel& m, const WaveRecipe& r) {
    double dx = r.dx;
    if (!(dx > 0.0)) throw ConfigError("wave: dx must be positive");
    const bool ring = m.p_period && !m.space_independent;
    if (ring) dx = *m.p_period / std::max(3L, std::lround(*m.p_period / dx));

    // Time step shared by u+, the pair tables and the wave.
    const Grid probe = ring ? Grid::ring(*m.p_period, static_cast<int>(std::lround(*m.p_period / dx)))
                            : Grid::window(-20.0, dx, static_cast<int>(std::lround(40.0 / dx)));
    const bool periodic_t = !m.time_independent && m.T_period;
    const double span = periodic_t ? *m.T_period : 1.0;
    const double L = lipschitz_budget(m, probe, 0.0, span, m.P0 + 1.0);
    const double dt_req = max_stable_dt(op, dx, L, r.cfl_safety);
    const double snap = periodic_t ? *m.T_period / 64.0 : 0.05;
    const int steps = std::max(1, static_cast<int>(std::ceil(snap / dt_req - 1e-9)));
    const double h = snap / steps;

    EntireOptions eo;
    eo.grid.dx = dx;
    eo.grid.dt = h;
    eo.grid.cfl_safety = r.cfl_safety;
    eo.snap_dt = snap;
    eo.edge_check = false;
    eo.grid.x_lo = -30.0;
    eo.grid.x_hi = 30.0;

    PairOptions po = r.pair;
    po.dx = dx;
    po.dt = h;
    WaveBundle b;
    auto entire = std::make_shared<EntireSolution>(build_entire(op, m, eo));
    po.ceiling = entire->inf;
    SubSuperPair pair;
    switch (r.family) {
        case PairFamily::Naro2: pair = build_pair_naro2(op, m, r.mu, r.mu2, po); break;
        case PairFamily::Naro3: pair = build_pair_naro3(op, m, r.lambda, r.eps, po); break;
        case PairFamily::Zla: pair = build_pair_zla(op, m, r.lambda, r.alpha, r.M_sub, po); break;
        case PairFamily::Rashzh: pair = build_pair_rashzh(op, m, r.mu, r.mu2, po); break;
    }
    if (!entire->grid.periodic) {
        const double T_big = default_T_big(pair, r.wave);
        const double early = -2.0 * T_big - 10.0;
        eo.grid.x_lo = dx * std::floor((pair.X(early) - r.wave.window_back - 20.0) / dx);
        eo.grid.x_hi = dx * std::ceil((pair.X(r.wave.horizon) + r.wave.window_ahead + 20.0) / dx);
        entire = std::make_shared<EntireSolution>(build_entire(op, m, eo));
    }
    b.entire = entire;
    b.pair = std::make_shared<const SubSuperPair>(pair);
    b.wave = construct_wave(op, m, pair, *entire, r.wave);
    return b;
}

}  // namespace kpplab
