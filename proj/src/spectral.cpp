#include "kpplab/spectral.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "kpplab/errors.hpp"

namespace kpplab {

namespace {

constexpr int kMinCells = 64;

// (tilted stencil + a(t, x)) on a periodic ring.
class RingOperator {
public:
    RingOperator(Stencil s, Grid ring, const ReactionModel& m)
        : s_(std::move(s)), ring_(std::move(ring)), m_(m), autonomous_(m.time_independent) {
        a_.resize(static_cast<std::size_t>(ring_.n));
        if (autonomous_) sample_a(0.0);
    }

    void apply(double t, const std::vector<double>& w, std::vector<double>& out) {
        if (!autonomous_ && t != a_time_) sample_a(t);
        const int n = ring_.n, h = s_.half_width;
        padded_.resize(static_cast<std::size_t>(n + 2 * h));
        std::copy(w.begin(), w.end(), padded_.begin() + h);
        for (int k = 1; k <= h; ++k) {
            padded_[static_cast<std::size_t>(h - k)] = w[static_cast<std::size_t>(((n - k) % n + n) % n)];
            padded_[static_cast<std::size_t>(h + n - 1 + k)] = w[static_cast<std::size_t>((k - 1) % n)];
        }
        out.resize(w.size());
        s_.apply(padded_, out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += a_[i] * w[i];
    }

    double spectral_bound() const {
        double s = std::abs(s_.center);
        for (double c : s_.coeff) s += 2.0 * std::abs(c);
        return s + std::max(std::abs(m_.a_plus), std::abs(m_.a_minus)) + 1e-12;
    }

    const Grid& ring() const { return ring_; }

private:
    void sample_a(double t) {
        for (int i = 0; i < ring_.n; ++i) a_[static_cast<std::size_t>(i)] = m_.a(t, ring_.x(i));
        a_time_ = t;
    }

    Stencil s_;
    Grid ring_;
    const ReactionModel& m_;
    bool autonomous_;
    double a_time_ = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> a_;
    std::vector<double> padded_;
};

double sup(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s = std::max(s, std::abs(x));
    return s;
}

// One RK4 step of w' = L(t) w.
void rk4_step(RingOperator& L, double t, double h, std::vector<double>& w, std::vector<double> (&k)[5]) {
    auto& k1 = k[0];
    auto& k2 = k[1];
    auto& k3 = k[2];
    auto& k4 = k[3];
    auto& tmp = k[4];
    const std::size_t n = w.size();
    tmp.resize(n);
    L.apply(t, w, k1);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * h * k1[i];
    L.apply(t + 0.5 * h, tmp, k2);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * h * k2[i];
    L.apply(t + 0.5 * h, tmp, k3);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + h * k3[i];
    L.apply(t + h, tmp, k4);
    for (std::size_t i = 0; i < n; ++i) w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

// Inverts the RK4 amplification factor R(z) = 1 + z + z^2/2 + z^3/6 + z^4/24 near z = ln g.
double invert_rk4(double g) {
    double z = std::log(g);
    for (int it = 0; it < 60; ++it) {
        const double r = 1.0 + z * (1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)));
        const double dr = 1.0 + z * (1.0 + z * (0.5 + z / 6.0));
        const double step = (r - g) / dr;
        z -= step;
        if (std::abs(step) <= 1e-17 * std::max(1.0, std::abs(z))) break;
    }
    return z;
}

struct PowerResult {
    double lambda = 0.0;
    double drift = 0.0;
    double residual = 0.0;
    double beta = 0.0;
    std::vector<std::vector<double>> eta;
};

PowerResult power_iterate(RingOperator& L, const ReactionModel& m, double mu, const EigenOptions& opts) {
    double h = 1.2 / L.spectral_bound();
    const bool autonomous = m.time_independent;
    double chunk = 1.0;
    if (!autonomous) {
        if (!m.T_period) throw UnsupportedError("principal_lambda: medium is neither autonomous nor time periodic");
        chunk = *m.T_period;
        h = std::min(h, chunk / 64.0);
    } else {
        h = std::min(h, 0.05);
    }
    const long steps = std::max(1L, static_cast<long>(std::ceil(chunk / h)));
    h = chunk / static_cast<double>(steps);
    const long snaps = autonomous ? 1 : 32;

    std::vector<double> w(static_cast<std::size_t>(L.ring().n), 1.0);
    std::vector<double> k[5];
    PowerResult res;
    const long max_chunks = std::max(4L, static_cast<long>(opts.max_time / chunk));
    double prev = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
    for (long c = 0;; ++c) {
        const std::vector<double> start = w;
        const bool final_pass = converged;
        std::vector<double> cum, times;
        double logsum = 0.0;
        for (long s = 0; s < steps; ++s) {
            if (final_pass && static_cast<long>(res.eta.size()) < snaps &&
                s == static_cast<long>(res.eta.size()) * steps / snaps) {
                res.eta.push_back(w);
                cum.push_back(logsum);
                times.push_back(static_cast<double>(s) * h);
            }
            rk4_step(L, autonomous ? 0.0 : static_cast<double>(s) * h, h, w, k);
            const double nrm = sup(w);
            if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericError("principal_lambda: iteration degenerated");
            logsum += std::log(nrm);
            for (double& v : w) v /= nrm;
        }
        const double lam = autonomous ? invert_rk4(std::exp(logsum / static_cast<double>(steps))) / h : logsum / chunk;
        double change = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) change = std::max(change, std::abs(w[i] - start[i]));
        if (final_pass) {
            res.residual = change;
            if (autonomous) {
                res.eta = {w};
            } else {
                // eta(t) = w(t) e^{A(t) - lambda t}: periodic, with S_mu(t) - (lambda/mu) t
                // oscillating by the spread of the exponent.
                double lo = 0.0, hi = 0.0;
                for (std::size_t j = 0; j < cum.size(); ++j) {
                    const double amp = cum[j] - lam * times[j];
                    lo = std::min(lo, amp);
                    hi = std::max(hi, amp);
                    for (double& v : res.eta[j]) v *= std::exp(amp);
                }
                res.beta = mu != 0.0 ? (hi - lo) / std::abs(mu) : 0.0;
            }
            break;
        }
        res.drift = std::isfinite(prev) ? std::abs(lam - prev) : std::numeric_limits<double>::infinity();
        res.lambda = lam;
        res.residual = change;
        prev = lam;
        if (res.drift <= opts.tol * std::max(1.0, std::abs(lam)) && change < 1e-9) converged = true;
        if (!converged && c + 1 >= max_chunks) {
            if (!(res.drift <= 1e-8 * std::max(1.0, std::abs(lam)))) {
                std::ostringstream msg;
                msg << "principal_lambda: not converged (drift " << res.drift << ")";
                throw ConvergenceError(msg.str());
            }
            converged = true;
        }
    }
    double top = 0.0;
    for (const auto& e : res.eta) top = std::max(top, sup(e));
    for (auto& e : res.eta)
        for (double& v : e) v /= top;
    return res;
}

}  // namespace

Grid eigen_ring(const DispersalOperator& op, const ReactionModel& m, const EigenOptions& opts) {
    if (opts.cells_per_period < kMinCells && !opts.dx)
        throw ConfigError("principal_lambda: at least 64 cells per period are required");
    if (m.space_independent) {
        if (op.is_random()) {
            const double dx = opts.dx.value_or(0.25);
            return Grid::ring(8 * dx, 8);
        }
        const double r0 = op.kernel().r0;
        const double dx = opts.dx.value_or(r0 / 32.0);
        const int n = std::max(3, 2 * kernel_half_width(r0, dx) + 1);
        return Grid::ring(n * dx, n);
    }
    if (!m.p_period) throw UnsupportedError("principal_lambda: medium is not periodic in x");
    const double p = *m.p_period;
    int n = opts.cells_per_period;
    if (opts.dx) {
        n = static_cast<int>(std::lround(p / *opts.dx));
        if (n < 3 || std::abs(n * *opts.dx - p) > 1e-9 * p)
            throw ConfigError("grid spacing does not divide the spatial period");
    }
    int periods = 1;
    if (!op.is_random()) {
        const int halo = kernel_half_width(op.kernel().r0, p / n);
        while (halo > n * periods) ++periods;
    }
    return Grid::ring(p * periods, n * periods);
}

EigenData principal_lambda(const DispersalOperator& op, const ReactionModel& m, double mu, EigenMethod method,
                           const EigenOptions& opts) {
    if (!std::isfinite(mu)) throw ConfigError("principal_lambda: tilt must be finite");
    const Grid ring = eigen_ring(op, m, opts);
    const Stencil st = Stencil::build(op, ring.dx, mu, opts.form);
    EigenData out;
    out.mu = mu;
    out.ring = ring;
    if (method == EigenMethod::Matrix) {
        if (!m.time_independent) throw UnsupportedError("matrix method needs a time-independent medium");
        const int n = ring.n;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        const int h = st.half_width;
        for (int i = 0; i < n; ++i) {
            for (int j = -h; j <= h; ++j) {
                if (j == 0) continue;
                const int col = ((i + j) % n + n) % n;
                const double c = st.coeff[static_cast<std::size_t>(j + h)];
                A(i, col) += c;
                if (st.difference_form) A(i, i) -= c;
            }
            A(i, i) += st.center + (st.difference_form ? 0.0 : st.coeff[static_cast<std::size_t>(h)]);
            A(i, i) += m.a(0.0, ring.x(i));
        }
        Eigen::EigenSolver<Eigen::MatrixXd> es(A);
        if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolve failed");
        Eigen::Index best = 0;
        for (Eigen::Index k = 1; k < es.eigenvalues().size(); ++k)
            if (es.eigenvalues()[k].real() > es.eigenvalues()[best].real()) best = k;
        out.lambda = es.eigenvalues()[best].real();
        Eigen::VectorXd v = es.eigenvectors().col(best).real();
        if (v.sum() < 0) v = -v;
        v /= v.cwiseAbs().maxCoeff();
        Field e{ring, std::vector<double>(v.data(), v.data() + n), 0.0};
        out.eta = {e};
        out.method = "matrix";
        return out;
    }
    RingOperator L(st, ring, m);
    auto res = power_iterate(L, m, mu, opts);
    out.lambda = res.lambda;
    out.drift = res.drift;
    out.residual = res.residual;
    out.beta_bound = res.beta;
    out.method = "evolution";
    const double T = m.time_independent ? 0.0 : *m.T_period;
    for (std::size_t j = 0; j < res.eta.size(); ++j)
        out.eta.push_back(Field{ring, res.eta[j], T * static_cast<double>(j) / std::max<std::size_t>(1, res.eta.size())});
    for (const auto& e : out.eta)
        if (!(e.min() > 0.0)) throw NumericError("principal eigenfunction lost positivity");
    return out;
}

SpeedCurve speed_curve(const DispersalOperator& op, const ReactionModel& m, double mu_lo, double mu_hi,
                       int grid_points, const EigenOptions& opts) {
    if (!(mu_lo > 0.0) || !(mu_hi > mu_lo)) throw ConfigError("speed_curve: need 0 < mu_lo < mu_hi");
    if (grid_points < 8) throw ConfigError("speed_curve: at least 8 grid points");
    SpeedCurve sc;
    const auto c_of = [&](double mu) { return principal_lambda(op, m, mu, EigenMethod::Evolution, opts).lambda / mu; };
    for (int k = 0; k < grid_points; ++k) {
        const double mu = mu_lo + (mu_hi - mu_lo) * k / (grid_points - 1);
        const double lam = principal_lambda(op, m, mu, EigenMethod::Evolution, opts).lambda;
        sc.mu_grid.push_back(mu);
        sc.lambda_values.push_back(lam);
        sc.c_values.push_back(lam / mu);
    }
    const auto it = std::min_element(sc.c_values.begin(), sc.c_values.end());
    const auto i = static_cast<std::size_t>(it - sc.c_values.begin());
    if (i == 0 || i + 1 == sc.c_values.size())
        throw ConvergenceError("speed_curve: minimum at the range boundary; widen the mu range");
    // Golden section on the bracketing cells.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = sc.mu_grid[i - 1], b = sc.mu_grid[i + 1];
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = c_of(x1), f2 = c_of(x2);
    while (b - a > 1e-6 * 0.5 * (a + b)) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = c_of(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = c_of(x2);
        }
    }
    sc.mu_star = 0.5 * (a + b);
    sc.lambda_star = principal_lambda(op, m, sc.mu_star, EigenMethod::Evolution, opts).lambda;
    sc.c_star = sc.lambda_star / sc.mu_star;
    return sc;
}

SMuTrace s_mu_trace(const DispersalOperator& op, const ReactionModel& m, double mu, double t0, double t1,
                    double sample_dt, const EigenOptions& opts) {
    if (mu == 0.0) throw ConfigError("s_mu_trace: tilt must be nonzero");
    if (!(t1 > t0) || !(sample_dt > 0.0)) throw ConfigError("s_mu_trace: bad time span");
    const Grid ring = eigen_ring(op, m, opts);
    RingOperator L(Stencil::build(op, ring.dx, mu, opts.form), ring, m);
    double h = std::min(1.2 / L.spectral_bound(), sample_dt / 8.0);
    h = std::min(h, 0.01);
    const long per = std::max(1L, static_cast<long>(std::ceil(sample_dt / h)));
    h = sample_dt / static_cast<double>(per);
    std::vector<double> w(static_cast<std::size_t>(ring.n), 1.0);
    std::vector<double> k[5];
    SMuTrace tr;
    tr.mu = mu;
    double logsum = 0.0;
    const long samples = static_cast<long>(std::floor((t1 - t0) / sample_dt + 1e-9));
    tr.t.push_back(t0);
    tr.s.push_back(0.0);
    for (long j = 0; j < samples; ++j) {
        const double base = t0 + static_cast<double>(j) * sample_dt;
        for (long s = 0; s < per; ++s) {
            rk4_step(L, base + static_cast<double>(s) * h, h, w, k);
            const double nrm = sup(w);
            if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericError("s_mu_trace: iteration degenerated");
            logsum += std::log(nrm);
            for (double& v : w) v /= nrm;
        }
        tr.t.push_back(base + sample_dt);
        tr.s.push_back(logsum / mu);
        tr.c.push_back((tr.s.back() - tr.s[tr.s.size() - 2]) / sample_dt);
    }
    return tr;
}

double FloquetTable::log_amplitude(double t) const {
    const double kk = t / dt;
    const double kr = std::round(kk);
    const auto at = [&](long k) {
        const long q = k >= 0 ? k / steps : -((-k + steps - 1) / steps);
        const long r = k - q * steps;
        return static_cast<double>(q) * log_growth[static_cast<std::size_t>(steps)] +
               log_growth[static_cast<std::size_t>(r)];
    };
    if (std::abs(kk - kr) <= 1e-7 * std::max(1.0, std::abs(kk))) return at(static_cast<long>(kr));
    const double fl = std::floor(kk);
    const double s = kk - fl;
    return (1.0 - s) * at(static_cast<long>(fl)) + s * at(static_cast<long>(fl) + 1);
}

double FloquetTable::profile_at(double t, double x) const {
    const int n = ring.n;
    const auto cell = [&](const std::vector<double>& prof, double xx) {
        const double q = (xx - ring.x_min) / ring.dx;
        const double qr = std::round(q);
        const auto wrap = [n](long i) { return static_cast<std::size_t>(((i % n) + n) % n); };
        if (std::abs(q - qr) <= 1e-7 * std::max(1.0, std::abs(q))) return prof[wrap(static_cast<long>(qr))];
        const double fl = std::floor(q);
        const double s = q - fl;
        return (1.0 - s) * prof[wrap(static_cast<long>(fl))] + s * prof[wrap(static_cast<long>(fl) + 1)];
    };
    if (steps == 1) return cell(profile[0], x);
    const double kk = t / dt;
    const double kr = std::round(kk);
    const auto idx = [&](long k) { return static_cast<std::size_t>(((k % steps) + steps) % steps); };
    if (std::abs(kk - kr) <= 1e-7 * std::max(1.0, std::abs(kk))) return cell(profile[idx(static_cast<long>(kr))], x);
    const double fl = std::floor(kk);
    const double s = kk - fl;
    return (1.0 - s) * cell(profile[idx(static_cast<long>(fl))], x) + s * cell(profile[idx(static_cast<long>(fl) + 1)], x);
}

FloquetTable floquet_table(const DispersalOperator& op, const ReactionModel& m, double mu, double dx, double dt,
                           double tol, long max_steps) {
    if (!(dt > 0.0)) throw ConfigError("floquet_table: dt must be positive");
    EigenOptions eo;
    eo.dx = dx;
    FloquetTable ft;
    ft.mu = mu;
    ft.dt = dt;
    ft.ring = eigen_ring(op, m, eo);
    if (m.time_independent) {
        ft.steps = 1;
        ft.period = dt;
    } else {
        if (!m.T_period) throw UnsupportedError("floquet_table: medium is neither autonomous nor time periodic");
        const double T = *m.T_period;
        ft.steps = static_cast<int>(std::lround(T / dt));
        if (ft.steps < 1 || std::abs(ft.steps * dt - T) > 1e-9 * T)
            throw ConfigError("floquet_table: dt must divide the time period");
        ft.period = T;
    }
    const Stencil st = Stencil::build(op, dx, mu, TiltForm::Conjugate);
    const int n = ft.ring.n, h = st.half_width;
    std::vector<std::vector<double>> a(static_cast<std::size_t>(ft.steps), std::vector<double>(static_cast<std::size_t>(n)));
    for (int k = 0; k < ft.steps; ++k)
        for (int i = 0; i < n; ++i)
            a[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] = m.a(k * dt, ft.ring.x(i));

    std::vector<double> w(static_cast<std::size_t>(n), 1.0), lap(static_cast<std::size_t>(n)), padded;
    const auto euler = [&](int k) {
        padded.resize(static_cast<std::size_t>(n + 2 * h));
        std::copy(w.begin(), w.end(), padded.begin() + h);
        for (int j = 1; j <= h; ++j) {
            padded[static_cast<std::size_t>(h - j)] = w[static_cast<std::size_t>(((n - j) % n + n) % n)];
            padded[static_cast<std::size_t>(h + n - 1 + j)] = w[static_cast<std::size_t>((j - 1) % n)];
        }
        st.apply(padded, lap);
        const auto& ak = a[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += dt * (lap[i] + ak[i] * w[i]);
        const double nrm = sup(w);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericError("floquet_table: iteration degenerated");
        for (double& v : w) v /= nrm;
        return std::log(nrm);
    };

    // Chunks of whole periods lasting about one time unit.
    const long periods_per_chunk = std::max(1L, static_cast<long>(std::ceil(1.0 / ft.period)));
    double prev = std::numeric_limits<double>::quiet_NaN();
    long used = 0;
    bool converged = false;
    while (used < max_steps) {
        const std::vector<double> start = w;
        double logsum = 0.0;
        for (long p = 0; p < periods_per_chunk; ++p)
            for (int k = 0; k < ft.steps; ++k) logsum += euler(k);
        used += periods_per_chunk * ft.steps;
        const double lam = logsum / (static_cast<double>(periods_per_chunk) * ft.period);
        double change = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) change = std::max(change, std::abs(w[i] - start[i]));
        if (std::isfinite(prev) && std::abs(lam - prev) <= tol * std::max(1.0, std::abs(lam)) && change < 1e-12) {
            converged = true;
            break;
        }
        prev = lam;
    }
    if (!converged) throw ConvergenceError("floquet_table: period map did not converge");
    ft.profile.push_back(w);
    ft.log_growth.push_back(0.0);
    for (int k = 0; k < ft.steps; ++k) {
        const double lg = euler(k);
        ft.log_growth.push_back(ft.log_growth.back() + lg);
        ft.profile.push_back(w);
    }
    ft.lambda = ft.log_growth.back() / ft.period;
    return ft;
}

namespace {

struct RiccatiRun {
    std::vector<double> x, sigma, logphi;
};

RiccatiRun riccati_backward(const ReactionModel& m, double lambda, double x_lo, double x_max, double h,
                            double anchor) {
    const long n = static_cast<long>(std::ceil((x_max - x_lo) / h - 1e-9));
    const double step = (x_max - x_lo) / static_cast<double>(n);
    RiccatiRun r;
    r.x.resize(static_cast<std::size_t>(n + 1));
    r.sigma.resize(r.x.size());
    r.logphi.resize(r.x.size());
    double s = anchor, L = 0.0;
    const auto a = [&](double x) { return m.a(0.0, x); };
    // Backward in x: d/dy with y = -x gives s_y = -(s^2 + a - lambda), L_y = s.
    const auto fs = [&](double x, double sv) { return -(sv * sv + a(x) - lambda); };
    const double blow = 1e3 * (1.0 + std::sqrt(std::abs(lambda)));
    for (long i = n; i >= 0; --i) {
        const auto k = static_cast<std::size_t>(i);
        r.x[k] = x_lo + static_cast<double>(i) * step;
        r.sigma[k] = s;
        r.logphi[k] = L;
        if (i == 0) break;
        const double x = r.x[k];
        const double k1 = fs(x, s), l1 = s;
        const double k2 = fs(x - step / 2, s + step / 2 * k1), l2 = s + step / 2 * k1;
        const double k3 = fs(x - step / 2, s + step / 2 * k2), l3 = s + step / 2 * k2;
        const double k4 = fs(x - step, s + step * k3), l4 = s + step * k3;
        s += step / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        L += step / 6 * (l1 + 2 * l2 + 2 * l3 + l4);
        if (!std::isfinite(s) || std::abs(s) > blow)
            throw ConvergenceError("decaying_eigenfunction: Riccati blow-up; lambda too close to lambda0");
    }
    return r;
}

double mean_sigma(const ReactionModel& m, const RiccatiRun& r, double x_max) {
    double w = 0.5 * x_max;
    if (m.p_period && *m.p_period <= w) w = std::floor(w / *m.p_period) * *m.p_period;
    // Interpolated log phi at 0 and w.
    const auto logphi_at = [&](double xx) {
        const double step = r.x[1] - r.x[0];
        const double q = (xx - r.x[0]) / step;
        const auto i = std::clamp<long>(static_cast<long>(std::floor(q)), 0, static_cast<long>(r.x.size()) - 2);
        const double s = q - static_cast<double>(i);
        return (1.0 - s) * r.logphi[static_cast<std::size_t>(i)] + s * r.logphi[static_cast<std::size_t>(i + 1)];
    };
    return -(logphi_at(w) - logphi_at(0.0)) / w;
}

}  // namespace

DecayEigenfunction decaying_eigenfunction(const ReactionModel& m, double lambda, double x_max,
                                          const DecayOptions& opts) {
    if (!m.time_independent) throw UnsupportedError("decaying_eigenfunction: medium must be time independent");
    if (!(x_max > 0.0) || opts.x_lo > 0.0) throw ConfigError("decaying_eigenfunction: need x_lo <= 0 < x_max");
    if (!(lambda > m.a_minus)) throw UnsupportedError("decaying_eigenfunction: lambda must exceed inf a");
    const double gap = lambda - m.a(0.0, x_max);
    const double anchor = gap > 0.0 ? std::sqrt(gap) : std::sqrt(lambda - m.a_minus);

    // The Riccati equation for sigma = -phi'/phi is autonomous given a, so the
    // log of phi is integrated with it and shifted to vanish at x = 0.
    auto run = riccati_backward(m, lambda, opts.x_lo, x_max, opts.h, anchor);
    const double step = run.x[1] - run.x[0];
    const double zero_q = -opts.x_lo / step;
    const auto zi = static_cast<std::size_t>(std::floor(zero_q));
    const double zs = zero_q - static_cast<double>(zi);
    const double l0 = zi + 1 < run.logphi.size() ? (1.0 - zs) * run.logphi[zi] + zs * run.logphi[zi + 1] : run.logphi[zi];

    DecayEigenfunction d;
    d.lambda = lambda;
    d.x_lo = opts.x_lo;
    d.x_max = x_max;
    d.h = step;
    d.x = run.x;
    d.sigma = run.sigma;
    d.log_phi.resize(run.logphi.size());
    // run.logphi(x) = int_x^{x_max} sigma, so ln phi(x) = run.logphi(x) - run.logphi(0).
    for (std::size_t i = 0; i < run.logphi.size(); ++i) d.log_phi[i] = run.logphi[i] - l0;
    d.mu_of_lambda = mean_sigma(m, run, x_max);

    double worst = 0.0;
    for (double f : {1.0 - opts.anchor_perturbation, 1.0 + opts.anchor_perturbation}) {
        const auto alt = riccati_backward(m, lambda, 0.0, x_max, opts.h, anchor * f);
        worst = std::max(worst, std::abs(mean_sigma(m, alt, x_max) - d.mu_of_lambda));
    }
    d.anchor_sensitivity = worst;
    d.sensitivity_ok = worst < opts.sensitivity_tol;
    if (!(d.mu_of_lambda > 0.0)) throw ConvergenceError("decaying_eigenfunction: nonpositive decay rate");
    return d;
}

double DecayEigenfunction::log_value(double xx) const {
    if (xx >= x_max) return log_phi.back() - sigma.back() * (xx - x_max);
    if (xx <= x_lo) return log_phi.front() - sigma.front() * (xx - x_lo);
    const double q = (xx - x_lo) / h;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(q), x.size() - 2);
    const double s = q - static_cast<double>(i);
    return (1.0 - s) * log_phi[i] + s * log_phi[i + 1];
}

double DecayEigenfunction::sigma_at(double xx) const {
    if (xx >= x_max) return sigma.back();
    if (xx <= x_lo) return sigma.front();
    const double q = (xx - x_lo) / h;
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(q), x.size() - 2);
    const double s = q - static_cast<double>(i);
    return (1.0 - s) * sigma[i] + s * sigma[i + 1];
}

DiscreteDecay discrete_decay(const ReactionModel& m, double lambda_d, double x0, double dx, double dt, long i_lo,
                             long i_hi) {
    if (!m.time_independent) throw UnsupportedError("discrete_decay: medium must be time independent");
    if (!(i_lo <= 0 && i_hi > 0)) throw ConfigError("discrete_decay: index range must contain 0");
    DiscreteDecay d;
    d.lambda_d = lambda_d;
    d.dt = dt;
    d.lambda_eff = std::log1p(dt * lambda_d) / dt;
    d.x0 = x0;
    d.dx = dx;
    d.i_lo = i_lo;
    d.i_hi = i_hi;
    const auto b = [&](long i) { return 2.0 + dx * dx * (lambda_d - m.a(0.0, x0 + static_cast<double>(i) * dx)); };
    double banchor = b(i_hi);
    if (!(banchor > 2.0)) banchor = 2.0 + dx * dx * (lambda_d - m.a_minus);
    if (!(banchor > 2.0)) throw UnsupportedError("discrete_decay: lambda must exceed inf a");
    d.right_ratio = (banchor - std::sqrt(banchor * banchor - 4.0)) / 2.0;
    const std::size_t n = static_cast<std::size_t>(i_hi - i_lo + 1);
    std::vector<double> ratio(n);  // ratio[i - i_lo] = phi_{i+1}/phi_i
    double r = d.right_ratio;
    ratio[n - 1] = r;
    for (long i = i_hi; i > i_lo; --i) {
        const double den = b(i) - r;
        if (!(den > 0.0)) throw ConvergenceError("discrete_decay: continued fraction broke down");
        r = 1.0 / den;
        ratio[static_cast<std::size_t>(i - 1 - i_lo)] = r;
    }
    d.log_phi.assign(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) d.log_phi[k] = d.log_phi[k - 1] + std::log(ratio[k - 1]);
    const double shift = d.log_phi[static_cast<std::size_t>(-i_lo)];
    for (double& v : d.log_phi) v -= shift;
    const long half = std::max(1L, i_hi / 2);
    d.mu_of_lambda = -(d.log_phi[static_cast<std::size_t>(half - i_lo)] - d.log_phi[static_cast<std::size_t>(-i_lo)]) /
                     (static_cast<double>(half) * dx);
    return d;
}

double DiscreteDecay::log_value_cell(long i) const {
    if (i > i_hi) return log_phi.back() + static_cast<double>(i - i_hi) * std::log(right_ratio);
    if (i < i_lo) {
        const double lr = log_phi[1] - log_phi[0];
        return log_phi.front() - static_cast<double>(i_lo - i) * lr;
    }
    return log_phi[static_cast<std::size_t>(i - i_lo)];
}

double DiscreteDecay::log_value(double x) const {
    const double q = (x - x0) / dx;
    const double qr = std::round(q);
    if (std::abs(q - qr) <= 1e-7 * std::max(1.0, std::abs(q))) return log_value_cell(static_cast<long>(qr));
    const double fl = std::floor(q);
    const double s = q - fl;
    return (1.0 - s) * log_value_cell(static_cast<long>(fl)) + s * log_value_cell(static_cast<long>(fl) + 1);
}

Lambda0Estimate lambda0(const ReactionModel& m, double domain_size, EigenMethod method, int cells) {
    if (!m.time_independent) throw UnsupportedError("lambda0: medium must be time independent");
    if (!(domain_size > 0.0) || cells < 16) throw ConfigError("lambda0: bad domain");
    Lambda0Estimate est;
    est.method = method == EigenMethod::Matrix ? "matrix" : "evolution";
    const auto solve = [&](double L, int n) {
        // A ring model is the medium restricted to [0, L) with periodic wrap.
        ReactionModel ring_model = m;
        ring_model.p_period = L;
        ring_model.space_independent = false;
        EigenOptions eo;
        eo.cells_per_period = n;
        return principal_lambda(DispersalOperator::random(), ring_model, 0.0, method, eo).lambda;
    };
    est.lambda0 = solve(domain_size, cells);
    est.lambda0_double = solve(2.0 * domain_size, 2 * cells);
    est.drift = std::abs(est.lambda0_double - est.lambda0);
    est.richardson = (4.0 * est.lambda0_double - est.lambda0) / 3.0;
    est.stable = est.drift <= 1e-3;
    return est;
}

}  // namespace kpplab
