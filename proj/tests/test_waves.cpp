#include <doctest.h>

#include <cmath>

#include "kpplab/errors.hpp"
#include "kpplab/waves.hpp"

using namespace kpplab;

namespace {

ReactionModel model(const char* text) { return make_media(MediaSpec::from_json(nlohmann::json::parse(text))); }

double fisher_g(double u) { return u * (1.0 - u); }

PairOptions small_box(double dx, double dt) {
    PairOptions o;
    o.dx = dx;
    o.dt = dt;
    o.t_lo = -20;
    o.t_hi = 20;
    o.t_samples = 6;
    return o;
}

}  // namespace

TEST_CASE("front profile solves the travelling-wave ODE") {
    const double alpha = 0.64;
    const auto fp = front_profile(fisher_g, alpha);
    CHECK(fp.c_front == doctest::Approx(0.8 + 1.25));
    CHECK(fp.u_top == 1.0);
    // residual by central differences, independent of the stored slopes
    const double e = 1e-3;
    double worst = 0.0;
    for (double x = -10.0; x <= 20.0; x += 0.37) {
        const double u0 = fp.value(x), up = fp.value(x + e), um = fp.value(x - e);
        const double res = (up - 2 * u0 + um) / (e * e) + fp.c_front * (up - um) / (2 * e) + fisher_g(u0);
        worst = std::max(worst, std::abs(res));
    }
    CHECK(worst < 1e-4);
    CHECK(fp.value(40.0) * std::exp(0.8 * 40.0) == doctest::Approx(1.0).epsilon(1e-3));

    CHECK(fp.transform_slope(1e-9) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(fp.transform(0.0) == 0.0);
    const auto fm = front_profile(fisher_g, alpha, 1.0);
    CHECK(fm.u_top == doctest::Approx(0.5).epsilon(1e-9));
    for (double v = 1e-6; v < 50.0; v *= 1.7) {
        CHECK(fp.transform(v) <= v);
        CHECK(fm.transform(v) <= fp.transform(v) + 1e-12);
    }
    CHECK_THROWS_AS(front_profile(fisher_g, 1.2), ConfigError);
    CHECK_THROWS_AS(front_profile([](double u) { return 2 * u * (1 - u); }, 0.5), ConfigError);
}

TEST_CASE("front transform at alpha one quarter") {
    const auto h = front_profile(fisher_g, 0.25);
    const auto hM = front_profile(fisher_g, 0.25, 1.0);
    // h'(0) from a difference quotient, not the stored slopes
    const double v = 1e-7;
    CHECK(std::abs(h.transform(v) / v - 1.0) < 1e-4);
    int bad = 0;
    for (int i = 1; i <= 1000; ++i) {
        const double s = 10.0 * i / 1000.0;
        if (h.transform(s) > s) ++bad;
        if (hM.transform(s) > h.transform(s)) ++bad;
    }
    CHECK(bad == 0);
}

TEST_CASE("naro2 pair in a flat medium") {
    const double mu = 0.5, dx = 0.1, dt = 0.004;
    const auto p = build_pair_naro2(DispersalOperator::random(), logistic_model(), mu, 0.75, small_box(dx, dt));
    // discrete dispersion relation of the explicit scheme
    const double lam_d = (2 * std::cosh(mu * dx) - 2) / (dx * dx) + 1.0;
    const double lam = std::log1p(dt * lam_d) / dt;
    CHECK(p.speed == doctest::Approx(lam / mu).epsilon(1e-9));
    CHECK(p.speed == doctest::Approx(2.5).epsilon(1e-2));
    CHECK(p.residual.pass);
    CHECK(p.residual.super_defect <= 1e-10);
    CHECK(p.residual.sub_defect <= 1e-10);
    CHECK(p.phi(1.0, 3.0) == doctest::Approx(std::exp(-mu * 3.0 + lam * 1.0)).epsilon(1e-9));
    CHECK(p.lower(0.0, p.X(0.0) - 30.0) <= 1.0);

    CHECK_THROWS_AS(build_pair_naro2(DispersalOperator::random(), logistic_model(), 1.5, 2.0, small_box(dx, dt)),
                    ConstructionError);
    CHECK_THROWS_AS(build_pair_naro2(DispersalOperator::random(), logistic_model(), 0.5, 1.2, small_box(dx, dt)),
                    ConfigError);
    PairOptions no_dt = small_box(dx, 0.0);
    CHECK_THROWS_AS(build_pair_naro2(DispersalOperator::random(), logistic_model(), mu, 0.75, no_dt), ConfigError);
}

TEST_CASE("zla pair in a spatially periodic medium") {
    const auto m = model(R"({"kind":"H3","coefficient":"space_cos","a0":1.25,"amp":0.25,"p":6.283185307179586})");
    const double dx = 2 * M_PI / 63;
    auto o = small_box(dx, 0.002);
    const auto p = build_pair_zla(DispersalOperator::random(), m, 1.6, 0.85, 1.0, o);
    CHECK(p.residual.pass);
    REQUIRE(p.psi);
    for (double x = -5; x < 30; x += 1.3) CHECK(p.psi(0.0, x) <= p.lower(0.0, x) + 1e-12);
    CHECK_THROWS_AS(build_pair_zla(DispersalOperator::random(), m, 1.6, 0.6, 1.0, o), ConfigError);
    CHECK_THROWS_AS(build_pair_zla(DispersalOperator::random(), m, 2.1, 0.9, 1.0, o), ConstructionError);
}

TEST_CASE("naro3 rejects lambda at or below inf a") {
    const auto m = model(R"({"kind":"H3","coefficient":"space_cos","a0":1.25,"amp":0.25,"p":6.283185307179586})");
    CHECK_THROWS_AS(build_pair_naro3(DispersalOperator::random(), m, 0.9, 0.5, small_box(0.1, 0.002)),
                    ConstructionError);
    CHECK_THROWS_AS(build_pair_naro3(DispersalOperator::random(), logistic_model(), 1.5, 1.5, small_box(0.1, 0.002)),
                    ConfigError);
}

TEST_CASE("fisher wave moves at the pair speed") {
    WaveRecipe r;
    r.family = PairFamily::Naro2;
    r.mu = 0.5;
    r.mu2 = 0.75;
    r.wave.horizon = 30.0;
    const auto b = build_wave(DispersalOperator::random(), logistic_model(), r);
    const auto& w = b.wave;
    CHECK(w.sandwich_ok);
    CHECK(w.converged);
    CHECK(w.max_ratio <= 1.0 + 1e-12);
    CHECK(w.min_value > 0.0);
    const auto d = wave_diagnostics(w);
    CHECK(d.mean_speed == doctest::Approx(2.5).epsilon(0.03));
    CHECK(d.mean_speed == doctest::Approx(b.pair->speed).epsilon(0.01));
    CHECK(d.speed_converged);
    CHECK(d.max_width < 20.0);
    CHECK(d.max_jump < 4.0);
    CHECK(w.dt == doctest::Approx(b.entire->dt()).epsilon(1e-12));

    const auto j = r.to_json();
    const auto back = WaveRecipe::from_json(j);
    CHECK(back.to_json() == j);
    CHECK_THROWS_AS(pair_family_from_string("nope"), ConfigError);
}
