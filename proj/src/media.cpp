#include "kpplab/media.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "kpplab/errors.hpp"

namespace kpplab {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::LogisticUniform: return "logistic_uniform";
        case ModelKind::H1Periodic: return "H1_periodic";
        case ModelKind::H2AlmostPeriodic: return "H2_almost_periodic";
        case ModelKind::H3Space: return "H3_space";
        case ModelKind::Custom: return "custom";
    }
    return "custom";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "logistic" || s == "logistic_uniform") return ModelKind::LogisticUniform;
    if (s == "H1_periodic" || s == "H1") return ModelKind::H1Periodic;
    if (s == "H2_almost_periodic" || s == "H2") return ModelKind::H2AlmostPeriodic;
    if (s == "H3_space" || s == "H3") return ModelKind::H3Space;
    if (s == "custom") return ModelKind::Custom;
    throw ConfigError("unknown model kind '" + s + "'");
}

double ReactionModel::eval_f(double t, double x, double u) const {
    if (u < 0.0) throw DomainError("density must be nonnegative");
    return f(t, x, u);
}

double ReactionModel::eval_fu(double t, double x, double u) const {
    if (u < 0.0) throw DomainError("density must be nonnegative");
    return f_u(t, x, u);
}

double eval_f(const ReactionModel& m, double t, double x, double u) { return m.eval_f(t, x, u); }
double eval_fu(const ReactionModel& m, double t, double x, double u) { return m.eval_fu(t, x, u); }

MediaSpec MediaSpec::from_json(const nlohmann::json& j) {
    MediaSpec s;
    if (!j.is_object()) throw ConfigError("model spec must be an object");
    s.kind = j.value("kind", s.kind);
    s.form = j.value("form", s.form);
    s.coefficient = j.value("coefficient", s.coefficient);
    s.a0 = j.value("a0", s.a0);
    s.amp = j.value("amp", s.amp);
    s.T = j.value("T", s.T);
    s.omega = j.value("omega", s.omega);
    s.p = j.value("p", s.p);
    if (j.contains("coeffs")) s.coeffs = j.at("coeffs").get<std::vector<double>>();
    if (j.contains("freqs")) s.freqs = j.at("freqs").get<std::vector<double>>();
    if (j.contains("phases")) s.phases = j.at("phases").get<std::vector<double>>();
    if (j.contains("beta0")) s.beta0 = j.at("beta0").get<double>();
    if (j.contains("P0")) s.P0 = j.at("P0").get<double>();
    return s;
}

nlohmann::json MediaSpec::to_json() const {
    nlohmann::json j{{"kind", kind},   {"form", form}, {"coefficient", coefficient}, {"a0", a0},
                     {"amp", amp},     {"T", T},       {"omega", omega},             {"p", p},
                     {"coeffs", coeffs}, {"freqs", freqs}, {"phases", phases}};
    if (beta0) j["beta0"] = *beta0;
    if (P0) j["P0"] = *P0;
    return j;
}

namespace {

struct Coefficient {
    CoefficientFn a;
    double a_min = 0.0;
    double a_max = 0.0;
    std::optional<double> T_period;
    std::optional<double> p_period;
    std::vector<double> frequencies;
    bool time_independent = true;
    bool space_independent = true;
};

Coefficient build_coefficient(const MediaSpec& s) {
    Coefficient c;
    const double a0 = s.a0;
    const double amp = s.amp;
    if (s.coefficient == "constant") {
        c.a = [a0](double, double) { return a0; };
        c.a_min = c.a_max = a0;
    } else if (s.coefficient == "time_sin") {
        const double w = s.T > 0.0 ? kTwoPi / s.T : s.omega;
        if (!(w > 0.0)) throw ConfigError("time_sin needs T > 0 or omega > 0");
        c.a = [a0, amp, w](double t, double) { return a0 + amp * std::sin(w * t); };
        c.a_min = a0 - std::abs(amp);
        c.a_max = a0 + std::abs(amp);
        c.T_period = kTwoPi / w;
        c.time_independent = false;
    } else if (s.coefficient == "space_cos") {
        if (!(s.p > 0.0)) throw ConfigError("space_cos needs p > 0");
        const double k = kTwoPi / s.p;
        c.a = [a0, amp, k](double, double x) { return a0 + amp * std::cos(k * x); };
        c.a_min = a0 - std::abs(amp);
        c.a_max = a0 + std::abs(amp);
        c.p_period = s.p;
        c.space_independent = false;
    } else if (s.coefficient == "tx_periodic") {
        if (!(s.p > 0.0) || !(s.T > 0.0)) throw ConfigError("tx_periodic needs T > 0 and p > 0");
        const double k = kTwoPi / s.p;
        const double w = kTwoPi / s.T;
        c.a = [a0, amp, k, w](double t, double x) { return a0 + amp * std::sin(w * t) * std::cos(k * x); };
        c.a_min = a0 - std::abs(amp);
        c.a_max = a0 + std::abs(amp);
        c.p_period = s.p;
        c.T_period = s.T;
        c.time_independent = false;
        c.space_independent = false;
    } else if (s.coefficient == "quasi_periodic_x") {
        if (s.coeffs.size() != s.freqs.size() || s.coeffs.empty())
            throw ConfigError("quasi_periodic_x needs matching coeffs and freqs");
        auto coeffs = s.coeffs;
        auto freqs = s.freqs;
        auto phases = s.phases;
        phases.resize(coeffs.size(), 0.0);
        c.a = [a0, coeffs, freqs, phases](double, double x) {
            double v = a0;
            for (std::size_t k = 0; k < coeffs.size(); ++k) v += coeffs[k] * std::sin(freqs[k] * x + phases[k]);
            return v;
        };
        double spread = 0.0;
        for (double ck : coeffs) spread += std::abs(ck);
        c.a_min = a0 - spread;
        c.a_max = a0 + spread;
        c.frequencies = freqs;
        c.space_independent = false;
        if (freqs.size() == 1 && freqs[0] != 0.0) c.p_period = kTwoPi / std::abs(freqs[0]);
    } else {
        throw ConfigError("unknown coefficient type '" + s.coefficient + "'");
    }
    return c;
}

}  // namespace

ReactionModel make_media(const MediaSpec& spec) {
    MediaSpec s = spec;
    const ModelKind kind = model_kind_from_string(s.kind);
    if (kind == ModelKind::LogisticUniform) {
        s.coefficient = "constant";
        s.form = "a_one_minus_u";
    }
    const Coefficient c = build_coefficient(s);

    ReactionModel m;
    m.kind = kind;
    m.label = s.kind + "/" + s.form + "/" + s.coefficient;
    m.a = c.a;
    m.a_minus = c.a_min;
    m.a_plus = c.a_max;
    m.T_period = c.T_period;
    m.p_period = c.p_period;
    m.frequencies = c.frequencies;
    m.time_independent = c.time_independent;
    m.space_independent = c.space_independent;

    const auto a = c.a;
    if (s.form == "a_one_minus_u") {
        if (!(c.a_min > 0.0)) throw ConfigError("a(t,x)(1-u) models need inf a > 0 (beta0 would be <= 0)");
        m.f = [a](double t, double x, double u) { return a(t, x) * (1.0 - u); };
        m.f_u = [a](double t, double x, double) { return -a(t, x); };
        m.beta0 = c.a_min;
        m.P0 = 2.0;
        m.C_h1 = c.a_max;
        m.nu = 1.0;
        m.delta_h1 = 1.0;
        m.g = [](double u) { return u * (1.0 - u); };
        m.g_prime = [](double u) { return 1.0 - 2.0 * u; };
    } else if (s.form == "a_minus_u") {
        m.f = [a](double t, double x, double u) { return a(t, x) - u; };
        m.f_u = [](double, double, double) { return -1.0; };
        m.beta0 = 1.0;
        m.P0 = c.a_max + 1.0;
    } else {
        throw ConfigError("unknown reaction form '" + s.form + "'");
    }
    if (s.beta0) m.beta0 = *s.beta0;
    if (s.P0) m.P0 = *s.P0;
    if (!(m.beta0 > 0.0)) throw ConfigError("beta0 must be positive");
    if (!(m.P0 > 0.0)) throw ConfigError("P0 must be positive");

    switch (kind) {
        case ModelKind::LogisticUniform:
        case ModelKind::H1Periodic:
            if (s.form != "a_one_minus_u") throw ConfigError("H1 models use form a_one_minus_u");
            if (!m.space_periodic()) throw ConfigError("H1 models must be periodic in x");
            m.declared_class = HypothesisClass::H1;
            break;
        case ModelKind::H2AlmostPeriodic:
            if (s.form != "a_one_minus_u" || !m.time_independent)
                throw ConfigError("H2 models are a(x)(1-u)");
            m.declared_class = HypothesisClass::H2;
            break;
        case ModelKind::H3Space:
            if (s.form != "a_one_minus_u" || !m.time_independent)
                throw ConfigError("H3 models are f(x,u) = a(x)(1-u)");
            m.declared_class = HypothesisClass::H3;
            break;
        case ModelKind::Custom: break;
    }
    return m;
}

ReactionModel logistic_model() { return make_media(MediaSpec{}); }

ReactionModel custom_model(RateFn f, RateFn f_u, double beta0, double P0, double a_minus, double a_plus) {
    ReactionModel m;
    m.kind = ModelKind::Custom;
    m.label = "custom";
    m.f = f;
    m.f_u = std::move(f_u);
    m.a = [f](double t, double x) { return f(t, x, 0.0); };
    m.beta0 = beta0;
    m.P0 = P0;
    m.a_minus = a_minus;
    m.a_plus = a_plus;
    return m;
}

bool HypothesisReport::pass() const {
    return std::all_of(clauses.begin(), clauses.end(), [](const ClauseResult& c) { return c.pass; });
}

const ClauseResult* HypothesisReport::find(const std::string& name) const {
    for (const auto& c : clauses)
        if (c.name == name) return &c;
    return nullptr;
}

nlohmann::json HypothesisReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : clauses)
        arr.push_back({{"clause", c.name}, {"pass", c.pass}, {"value", c.value}, {"detail", c.detail}});
    return {{"pass", pass()}, {"clauses", arr}, {"notes", notes}};
}

namespace {

struct Sampler {
    std::mt19937_64 rng;
    SampleBox box;

    double t() { return std::uniform_real_distribution<double>(box.t_min, box.t_max)(rng); }
    double x() { return std::uniform_real_distribution<double>(box.x_min, box.x_max)(rng); }
    double in(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
};

SampleBox class_box(const ReactionModel& m) {
    SampleBox b;
    b.t_min = 0.0;
    b.t_max = m.T_period.value_or(10.0) * 2.0;
    b.x_min = -20.0;
    b.x_max = 20.0;
    return b;
}

}  // namespace

HypothesisReport verify_H0(const ReactionModel& m, const SampleBox& box, const H0Options& opts) {
    if (opts.samples < 100) throw ConfigError("verify_H0 needs at least 100 samples");
    HypothesisReport r;
    Sampler s{std::mt19937_64(opts.seed), box};

    double max_f_sat = -std::numeric_limits<double>::infinity();
    double max_fu = -std::numeric_limits<double>::infinity();
    double f_lo = std::numeric_limits<double>::infinity();
    double f_hi = -std::numeric_limits<double>::infinity();
    const double u_top = std::max(box.u_max, m.P0 + 1.0);
    for (int k = 0; k < opts.samples; ++k) {
        const double t = s.t(), x = s.x();
        // Saturation is probed at the threshold itself and above it.
        const double u_sat = k == 0 ? m.P0 : s.in(m.P0, m.P0 + u_top);
        max_f_sat = std::max(max_f_sat, m.eval_f(t, x, u_sat));
        const double u = k == 1 ? 0.0 : s.in(0.0, u_top);
        max_fu = std::max(max_fu, m.eval_fu(t, x, u));
        const double fv = m.eval_f(t, x, u);
        f_lo = std::min(f_lo, fv);
        f_hi = std::max(f_hi, fv);
    }
    r.clauses.push_back({"saturation", max_f_sat <= -m.beta0 + 1e-12, max_f_sat,
                         "max f over u >= P0 must be <= -beta0"});
    r.clauses.push_back({"decay", max_fu <= -m.beta0 + 1e-12, max_fu, "max f_u over u >= 0 must be <= -beta0"});
    r.clauses.push_back({"bounded", std::isfinite(f_lo) && std::isfinite(f_hi), f_hi - f_lo,
                         "f finite on bounded density sets"});

    // Window averages of inf_x f(tau, x, 0).
    const int nx = 97;
    const double xlo = m.p_period ? 0.0 : box.x_min;
    const double xhi = m.p_period ? *m.p_period : box.x_max;
    const double h = opts.horizon;
    const double t_lo = box.t_min;
    const double t_hi = box.t_max + h;
    const int nt = std::max(400, static_cast<int>((t_hi - t_lo) / (h / 200.0)));
    const double dtau = (t_hi - t_lo) / nt;
    std::vector<double> cumulative(static_cast<std::size_t>(nt + 1), 0.0);
    double prev = 0.0;
    for (int k = 0; k <= nt; ++k) {
        const double tau = t_lo + k * dtau;
        double inf_a = std::numeric_limits<double>::infinity();
        for (int i = 0; i < nx; ++i) inf_a = std::min(inf_a, m.eval_f(tau, xlo + (xhi - xlo) * i / (nx - 1), 0.0));
        if (k > 0) cumulative[static_cast<std::size_t>(k)] = cumulative[static_cast<std::size_t>(k - 1)] + 0.5 * dtau * (prev + inf_a);
        prev = inf_a;
    }
    double min_avg = std::numeric_limits<double>::infinity();
    for (double frac : {0.5, 0.75, 1.0}) {
        const int len = std::max(1, static_cast<int>(std::lround(frac * h / dtau)));
        for (int k0 = 0; k0 + len <= nt; ++k0) {
            const double avg = (cumulative[static_cast<std::size_t>(k0 + len)] - cumulative[static_cast<std::size_t>(k0)]) / (len * dtau);
            min_avg = std::min(min_avg, avg);
        }
    }
    r.clauses.push_back({"growth_average", min_avg > opts.margin, min_avg,
                         "finite-window averages of inf_x f(tau,x,0) must exceed the margin"});
    r.notes.push_back("liminf condition checked on finite windows only");
    r.notes.push_back("Holder/Lipschitz clauses assumed for catalog models, not sampled");
    return r;
}

HypothesisReport verify_class(const ReactionModel& m, HypothesisClass cls, int samples, unsigned seed) {
    HypothesisReport r;
    Sampler s{std::mt19937_64(seed), class_box(m)};
    constexpr double tol = 1e-12;

    auto add = [&](std::string name, bool pass, double value, std::string detail) {
        r.clauses.push_back({std::move(name), pass, value, std::move(detail)});
    };

    if (cls == HypothesisClass::H1) {
        double per_defect = 0.0, one_defect = 0.0, below = -1e300, inside = 1e300, lower = 1e300;
        for (int k = 0; k < samples; ++k) {
            const double t = s.t(), x = s.x(), u01 = s.in(0.0, 1.0);
            if (m.p_period) per_defect = std::max(per_defect, std::abs(m.f(t, x + *m.p_period, u01) - m.f(t, x, u01)));
            one_defect = std::max(one_defect, std::abs(m.f(t, x, 1.0)));
            below = std::max(below, m.f(t, x, u01) - m.f(t, x, 0.0));
            const double ui = s.in(1e-3, 1.0 - 1e-3);
            inside = std::min(inside, m.f(t, x, ui));
            const double ud = s.in(0.0, m.delta_h1);
            const double slack = ud * m.f(t, x, ud) - (m.f(t, x, 0.0) * ud - m.C_h1 * std::pow(ud, 1.0 + m.nu));
            lower = std::min(lower, slack);
        }
        add("x_periodic", m.space_independent || (m.p_period && per_defect <= 1e-10), per_defect, "f(t,x+p,u) = f(t,x,u)");
        add("zero_at_one", one_defect <= tol, one_defect, "f(t,x,1) = 0");
        add("below_linearization", below <= tol, below, "f(t,x,u) <= f(t,x,0) on [0,1]");
        add("positive_inside", inside > 0.0, inside, "inf f(t,x,u) > 0 for u in (0,1)");
        add("lower_bound", lower >= -tol, lower, "u f >= f(t,x,0) u - C u^{1+nu} on (0,delta)");
    } else if (cls == HypothesisClass::H2) {
        double form_defect = 0.0, inf_a = 1e300;
        for (int k = 0; k < samples; ++k) {
            const double t = s.t(), x = s.x(), u = s.in(0.0, 2.0);
            form_defect = std::max(form_defect, std::abs(m.f(t, x, u) - m.a(0.0, x) * (1.0 - u)));
            inf_a = std::min(inf_a, m.a(0.0, x));
        }
        add("time_independent", m.time_independent, 0.0, "f = f(x,u)");
        add("logistic_form", form_defect <= 1e-12, form_defect, "f = a(x)(1-u)");
        add("inf_a_positive", inf_a > 0.0 && m.a_minus > 0.0, inf_a, "inf a > 0");
        r.notes.push_back("almost periodic principal eigenfunction is not certifiable numerically; lambda0 is estimated only");
    } else {
        if (!m.g || !m.g_prime) {
            add("g_defined", false, 0.0, "H3 needs a comparison nonlinearity g");
            return r;
        }
        double one_defect = 0.0, fu_max = -1e300, sandwich_lo = 1e300, sandwich_hi = -1e300, a_out = 0.0;
        double between = 1e300, slope = -1e300;
        for (int k = 0; k < samples; ++k) {
            const double x = s.x(), u = s.in(0.0, 1.0);
            const double t = s.t();
            one_defect = std::max(one_defect, std::abs(m.f(t, x, 1.0)));
            fu_max = std::max(fu_max, m.f_u(t, x, u));
            const double ax = m.a(t, x);
            const double uf = u * m.f(t, x, u);
            sandwich_lo = std::min(sandwich_lo, uf - ax * m.g(u));
            sandwich_hi = std::max(sandwich_hi, uf - ax * u);
            if (ax < m.a_minus - 1e-12 || ax > m.a_plus + 1e-12) a_out = std::max(a_out, 1.0);
            const double ui = s.in(1e-6, 1.0 - 1e-6);
            between = std::min(between, std::min(m.g(ui), ui - m.g(ui)));
            slope = std::max(slope, (m.g_prime(ui) * ui - m.g(ui)) / (ui * ui));
        }
        double integral_drift = 0.0;
        {
            auto integrand = [&](double u) { return (u - m.g(u)) / (u * u); };
            auto integrate = [&](double eps) {
                const int n = 4000;
                const double a = std::log(eps), b = 0.0;
                double acc = 0.0;
                for (int i = 0; i <= n; ++i) {
                    const double y = a + (b - a) * i / n;
                    const double u = std::exp(y);
                    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
                    acc += w * integrand(u) * u;
                }
                return acc * (b - a) / n;
            };
            integral_drift = std::abs(integrate(1e-10) - integrate(1e-6));
        }
        add("time_independent", m.time_independent, 0.0, "f = f(x,u)");
        add("zero_at_one", one_defect <= tol, one_defect, "f(x,1) = 0");
        add("fu_negative", fu_max < 0.0, fu_max, "f_u(x,u) < 0");
        add("sandwich", sandwich_lo >= -tol && sandwich_hi <= tol, std::min(sandwich_lo, -sandwich_hi),
            "a(x) g(u) <= u f(x,u) <= a(x) u");
        add("g_endpoints", std::abs(m.g(0.0)) <= tol && std::abs(m.g(1.0)) <= tol, std::abs(m.g(1.0)), "g(0) = g(1) = 0");
        add("g_prime_zero", std::abs(m.g_prime(0.0) - 1.0) <= 1e-8, m.g_prime(0.0), "g'(0) = 1");
        add("g_between", between >= 0.0, between, "0 <= g(u) <= u on (0,1)");
        add("g_over_u_decreasing", slope < 0.0, slope, "(g(u)/u)' < 0 on (0,1)");
        add("integral_finite", integral_drift < 1e-4, integral_drift, "int_0^1 (u - g)/u^2 du finite");
        add("a_bounds", m.a_minus > 0.0 && m.a_minus <= m.a_plus && a_out == 0.0, m.a_minus,
            "0 < a_- <= a(x) <= a_+");
    }
    return r;
}

}  // namespace kpplab
