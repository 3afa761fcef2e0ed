#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/spectral.hpp"

using namespace kpplab;

namespace {

ReactionModel model(const char* text) { return make_media(MediaSpec::from_json(nlohmann::json::parse(text))); }

ReactionModel constant_model(double a0) {
    MediaSpec s;
    s.kind = "H1";
    s.a0 = a0;
    return make_media(s);
}

template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

// Golden-section minimum of a scalar function, used as an independent oracle.
template <class F>
std::pair<double, double> golden_min(F f, double a, double b) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    while (b - a > 1e-10) {
        const double x1 = b - g * (b - a), x2 = a + g * (b - a);
        if (f(x1) < f(x2)) b = x2;
        else a = x1;
    }
    return {0.5 * (a + b), f(0.5 * (a + b))};
}

// Dense continuum-tilted random operator on a ring, built independently of the library stencil.
Eigen::MatrixXd tilted_matrix(int n, double length, double mu, const std::function<double(double)>& a) {
    const double dx = length / n;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        M(i, (i + 1) % n) += 1.0 / (dx * dx) - mu / dx;
        M(i, (i + n - 1) % n) += 1.0 / (dx * dx) + mu / dx;
        M(i, i) += -2.0 / (dx * dx) + mu * mu + a(i * dx);
    }
    return M;
}

}  // namespace

TEST_CASE("constant media have closed-form principal exponents") {
    for (double a0 : {0.5, 1.0, 4.0})
        for (double mu : {0.0, 0.3, 1.0, 2.0})
            CHECK(principal_lambda(DispersalOperator::random(), constant_model(a0), mu).lambda ==
                  doctest::Approx(mu * mu + a0).epsilon(1e-12));

    const auto nl = DispersalOperator::nonlocal(Kernel::uniform(1.0));
    for (double mu : {0.5, 1.0, 1.9}) {
        const double oracle = simpson([mu](double z) { return 0.5 * std::exp(mu * z); }, -1.0, 1.0);
        CHECK(principal_lambda(nl, constant_model(1.0), mu).lambda == doctest::Approx(oracle).epsilon(2e-3));
    }
}

TEST_CASE("evolution and matrix methods agree on a periodic medium") {
    const auto m = model(R"({"kind":"H1","coefficient":"space_cos","a0":1,"amp":0.5,"p":5})");
    for (double mu : {0.25, 0.5, 1.0}) {
        const auto ev = principal_lambda(DispersalOperator::random(), m, mu, EigenMethod::Evolution);
        const auto mx = principal_lambda(DispersalOperator::random(), m, mu, EigenMethod::Matrix);
        CHECK(std::abs(ev.lambda - mx.lambda) < 1e-6);
        const Eigen::MatrixXd M =
            tilted_matrix(128, 5.0, mu, [](double x) { return 1.0 + 0.5 * std::cos(2 * M_PI * x / 5.0); });
        Eigen::EigenSolver<Eigen::MatrixXd> es(M);
        double best = -1e300;
        for (int k = 0; k < es.eigenvalues().size(); ++k) best = std::max(best, es.eigenvalues()[k].real());
        CHECK(std::abs(ev.lambda - best) < 1e-6);
        CHECK(ev.eta.front().min() > 0.0);
        CHECK(ev.residual < 1e-8);
    }
}

TEST_CASE("principal exponent is convex in the tilt") {
    const auto m = model(R"({"kind":"H1","coefficient":"space_cos","a0":1,"amp":0.5,"p":5})");
    std::vector<double> lam;
    for (int k = 0; k <= 10; ++k) lam.push_back(principal_lambda(DispersalOperator::random(), m, 0.2 * k).lambda);
    for (std::size_t k = 1; k + 1 < lam.size(); ++k) CHECK(lam[k + 1] - 2 * lam[k] + lam[k - 1] >= -1e-8);
}

TEST_CASE("non-periodic media are rejected") {
    const auto m = model(R"({"kind":"H2","coefficient":"quasi_periodic_x","a0":1,"coeffs":[0.1,0.1],"freqs":[1,1.4142135623730951]})");
    CHECK_THROWS_AS(principal_lambda(DispersalOperator::random(), m, 0.5), UnsupportedError);
}

TEST_CASE("speed curves") {
    const auto fisher = speed_curve(DispersalOperator::random(), constant_model(1.0), 0.2, 3.0, 15);
    CHECK(fisher.c_star == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(fisher.mu_star == doctest::Approx(1.0).epsilon(1e-5));
    const auto four = speed_curve(DispersalOperator::random(), constant_model(4.0), 0.5, 5.0, 12);
    CHECK(four.c_star == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(four.mu_star == doctest::Approx(2.0).epsilon(1e-5));
    CHECK_THROWS_AS(speed_curve(DispersalOperator::random(), constant_model(1.0), 2.0, 3.0, 8), ConvergenceError);

    const auto nl = speed_curve(DispersalOperator::nonlocal(Kernel::uniform(1.0)), constant_model(1.0), 0.5, 4.0, 12);
    const auto [mu_o, c_o] = golden_min([](double mu) { return std::sinh(mu) / (mu * mu); }, 0.5, 4.0);
    CHECK(nl.c_star == doctest::Approx(c_o).epsilon(0.01));
    CHECK(nl.mu_star == doctest::Approx(mu_o).epsilon(0.01));
}

TEST_CASE("S_mu traces") {
    const auto m = model(R"({"kind":"H1","coefficient":"time_sin","a0":1,"amp":0.5,"omega":1})");
    const double mu = 0.7;
    const auto tr = s_mu_trace(DispersalOperator::random(), m, mu, 0.0, 10.0, 0.5);
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        const double t = tr.t[k];
        CHECK(tr.s[k] == doctest::Approx(mu * t + (t - 0.5 * std::cos(t) + 0.5) / mu).epsilon(1e-8));
    }
    const auto flat = s_mu_trace(DispersalOperator::random(), constant_model(1.0), 0.5, 0.0, 4.0, 1.0);
    const auto dbl = s_mu_trace(DispersalOperator::random(), constant_model(1.0), 1.0, 0.0, 4.0, 1.0);
    CHECK(flat.s.back() == doctest::Approx((0.25 + 1.0) * 4.0 / 0.5).epsilon(1e-8));
    CHECK(dbl.s.back() == doctest::Approx((1.0 + 1.0) * 4.0 / 1.0).epsilon(1e-8));

    const auto per = model(R"({"kind":"H1","coefficient":"space_cos","a0":1,"amp":0.5,"p":5})");
    const auto lam = principal_lambda(DispersalOperator::random(), per, 0.6).lambda;
    const auto st = s_mu_trace(DispersalOperator::random(), per, 0.6, 0.0, 60.0, 1.0);
    CHECK(st.c.back() == doctest::Approx(lam / 0.6).epsilon(1e-6));
}

TEST_CASE("time-periodic principal exponent and beta bound") {
    const auto m = model(R"({"kind":"H1","coefficient":"tx_periodic","a0":1,"amp":0.4,"T":2,"p":4})");
    const auto ed = principal_lambda(DispersalOperator::random(), m, 0.5);
    CHECK(ed.eta.size() == 32);
    for (const auto& e : ed.eta) CHECK(e.min() > 0.0);
    CHECK(std::isfinite(ed.beta_bound));
    // Long-run S_mu slope agrees with lambda/mu.
    const auto tr = s_mu_trace(DispersalOperator::random(), m, 0.5, 0.0, 80.0, 2.0);
    const double slope = (tr.s.back() - tr.s[tr.s.size() - 11]) / 20.0;
    CHECK(slope == doctest::Approx(ed.lambda / 0.5).epsilon(1e-6));
}

TEST_CASE("decaying eigenfunction") {
    const auto d = decaying_eigenfunction(constant_model(1.0), 2.0, 40.0);
    CHECK(std::abs(d.mu_of_lambda - 1.0) < 1e-6);
    CHECK(d.value(3.0) == doctest::Approx(std::exp(-3.0)).epsilon(1e-8));

    double best = 1e300;
    for (double lam = 1.5; lam < 2.0; lam += 0.01) {
        const auto e = decaying_eigenfunction(constant_model(1.0), lam, 20.0);
        best = std::min(best, lam / e.mu_of_lambda);
    }
    CHECK(best == doctest::Approx(2.0).epsilon(1e-3));

    const auto m = model(R"({"kind":"H3","coefficient":"space_cos","a0":1,"amp":0.5,"p":6.283185307179586})");
    DecayOptions o;
    o.x_lo = -10.0;
    const auto p = decaying_eigenfunction(m, 2.0, 60.0, o);
    CHECK(p.sensitivity_ok);
    for (double x = -8.0; x < 28.0; x += 0.37) {
        const double h = 1e-2;
        const double f0 = p.value(x), fp = p.value(x + h), fm = p.value(x - h);
        const double res = (fp - 2 * f0 + fm) / (h * h) + m.a(0, x) * f0 - 2.0 * f0;
        CHECK(std::abs(res) < 1e-5 * 2.0 * f0 + 1e-4 * f0);
    }
    // sigma is periodic after the transient.
    for (double x = 0.0; x < 20.0; x += 0.5) CHECK(p.sigma_at(x) == doctest::Approx(p.sigma_at(x + 2 * M_PI)).epsilon(1e-6));
    CHECK_THROWS_AS(decaying_eigenfunction(constant_model(1.0), 0.5, 10.0), UnsupportedError);
}

TEST_CASE("discrete decaying eigenvector is exact on the grid") {
    const auto m = model(R"({"kind":"H3","coefficient":"space_cos","a0":1.25,"amp":0.25,"p":6.283185307179586})");
    const double dx = 0.1, lam = 1.8;
    const auto d = discrete_decay(m, lam, 0.0, dx, 0.002, -200, 600);
    for (long i = -199; i < 600; i += 7) {
        const double f0 = std::exp(d.log_value_cell(i)), fp = std::exp(d.log_value_cell(i + 1)),
                     fm = std::exp(d.log_value_cell(i - 1));
        const double res = (fp - 2 * f0 + fm) / (dx * dx) + m.a(0, i * dx) * f0 - lam * f0;
        CHECK(std::abs(res) < 1e-9 * f0);
    }
    CHECK(d.lambda_eff == doctest::Approx(std::log(1 + 0.002 * lam) / 0.002));
    CHECK(d.log_value(0.0) == 0.0);
}

TEST_CASE("scheme-consistent Floquet table solves the Euler scheme exactly") {
    const double dx = 0.1, dt = 0.002, mu = 0.8;
    const auto c = floquet_table(DispersalOperator::random(), constant_model(1.0), mu, dx, dt);
    const double oracle = std::log(1.0 + dt * ((2.0 * std::cosh(mu * dx) - 2.0) / (dx * dx) + 1.0)) / dt;
    CHECK(c.lambda == doctest::Approx(oracle).epsilon(1e-12));

    const auto m = model(R"({"kind":"H1","coefficient":"tx_periodic","a0":1,"amp":0.4,"T":2,"p":4})");
    const auto ft = floquet_table(DispersalOperator::random(), m, mu, dx, dt);
    const auto linear = custom_model([&m](double t, double x, double) { return m.a(t, x); },
                                     [](double, double, double) { return 0.0; }, 1.0, 2.0, 0.6, 1.4);
    const auto exact = [&](double t, double x) { return std::exp(-mu * x + ft.log_amplitude(t)) * ft.profile_at(t, x); };
    const Grid g = Grid::window(-3.0, dx, 80);
    Stepper st(DispersalOperator::random(), linear, g);
    for (int k = -3; k < ft.steps + 5; k += 37) {
        const double t = k * dt;
        Field u = Field::sample(g, [&](double x) { return exact(t, x); }, t);
        st.advance(u, dt);
        for (int i = 1; i + 1 < g.n; ++i) {
            const double e = exact(t + dt, g.x(i));
            CHECK(std::abs(u.values[static_cast<std::size_t>(i)] - e) <= 1e-10 * e);
        }
    }
}

TEST_CASE("lambda0 estimates") {
    const auto c = lambda0(constant_model(1.3), 10.0);
    CHECK(c.lambda0 == doctest::Approx(1.3).epsilon(1e-12));

    const auto m = model(R"({"kind":"H3","coefficient":"space_cos","a0":1,"amp":0.5,"p":6.283185307179586})");
    const double L = 4 * M_PI;
    const auto ev = lambda0(m, L, EigenMethod::Evolution, 128);
    const int n = 128;
    const double dx = L / n;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        M(i, (i + 1) % n) += 1 / (dx * dx);
        M(i, (i + n - 1) % n) += 1 / (dx * dx);
        M(i, i) += -2 / (dx * dx) + 1.0 + 0.5 * std::cos(i * dx);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    CHECK(std::abs(ev.lambda0 - es.eigenvalues().maxCoeff()) < 1e-6);
    CHECK(ev.lambda0 >= m.a_minus);
    CHECK(ev.lambda0 <= m.a_plus);
    CHECK(ev.stable);
}
