#include <doctest.h>

#include <cmath>
#include <random>

#include "kpplab/errors.hpp"
#include "kpplab/media.hpp"

using namespace kpplab;

namespace {

MediaSpec spec_from(const char* text) { return MediaSpec::from_json(nlohmann::json::parse(text)); }

}  // namespace

TEST_CASE("logistic catalog entry") {
    const auto m = logistic_model();
    CHECK(m.eval_f(0.3, -2.0, 0.25) == doctest::Approx(0.75));
    CHECK(m.eval_f(0.0, 0.0, 1.0) == 0.0);
    CHECK(m.eval_fu(1.0, 1.0, 3.0) == -1.0);
    CHECK(m.eval_f(0.0, 0.0, m.P0 + 1.0) <= -m.beta0);
    CHECK_THROWS_AS(m.eval_f(0.0, 0.0, -0.1), DomainError);
    CHECK(m.declared_class == HypothesisClass::H1);
}

TEST_CASE("derivative agrees with centered differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> dt(0.0, 10.0), dx(-10.0, 10.0), du(0.0, 3.0);
    for (const char* text :
         {R"({"kind":"H1_periodic","coefficient":"tx_periodic","a0":1,"amp":0.3,"T":2,"p":3})",
          R"({"kind":"H2","coefficient":"quasi_periodic_x","a0":1,"coeffs":[0.25,0.25],"freqs":[1,1.4142135623730951]})",
          R"({"kind":"custom","form":"a_minus_u","coefficient":"time_sin","a0":1,"amp":0.5,"omega":1})"}) {
        const auto m = make_media(spec_from(text));
        for (int k = 0; k < 1000; ++k) {
            const double t = dt(rng), x = dx(rng), u = du(rng);
            const double h = 1e-5 * std::max(1.0, u);
            const double lo = std::max(0.0, u - h);
            const double fd = (m.eval_f(t, x, u + h) - m.eval_f(t, x, lo)) / (u + h - lo);
            CHECK(std::abs(m.eval_fu(t, x, u) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("declared periods are honoured") {
    const auto m = make_media(spec_from(R"({"kind":"H1_periodic","coefficient":"tx_periodic","a0":1,"amp":0.3,"T":2,"p":3})"));
    REQUIRE(m.T_period);
    REQUIRE(m.p_period);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        const double t = d(rng), x = d(rng), u = std::abs(d(rng));
        CHECK(std::abs(m.eval_f(t + *m.T_period, x, u) - m.eval_f(t, x, u)) < 1e-10);
        CHECK(std::abs(m.eval_f(t, x + *m.p_period, u) - m.eval_f(t, x, u)) < 1e-10);
        CHECK(m.a(t, x) == m.eval_f(t, x, 0.0));
    }
}

TEST_CASE("quasi-periodic coefficient bounds") {
    const auto m = make_media(spec_from(
        R"({"kind":"H2","coefficient":"quasi_periodic_x","a0":1,"coeffs":[0.25,0.25],"freqs":[1,1.4142135623730951]})"));
    CHECK(m.a_minus == doctest::Approx(0.5));
    CHECK(m.a_plus == doctest::Approx(1.5));
    CHECK(verify_class(m, HypothesisClass::H2).pass());
}

TEST_CASE("standing hypothesis checks") {
    const auto logistic = logistic_model();
    const auto r = verify_H0(logistic, SampleBox{});
    CHECK(r.pass());
    REQUIRE(r.find("growth_average"));
    CHECK(r.find("growth_average")->value == doctest::Approx(1.0));

    const auto shifted = make_media(spec_from(R"({"kind":"custom","form":"a_minus_u","coefficient":"time_sin","a0":0.75,"amp":0.25,"omega":1})"));
    const auto r2 = verify_H0(shifted, SampleBox{});
    CHECK(r2.pass());
    CHECK(r2.find("growth_average")->value >= 0.5);

    // f(t, x, 0) = sin t has vanishing long-run averages.
    const auto sin_growth = custom_model([](double t, double, double u) { return std::sin(t) - u; },
                                         [](double, double, double) { return -1.0; }, 1.0, 2.0, -1.0, 1.0);
    H0Options opts;
    opts.horizon = 40.0;
    const auto r3 = verify_H0(sin_growth, SampleBox{0.0, 60.0}, opts);
    CHECK_FALSE(r3.find("growth_average")->pass);
    CHECK(r3.find("saturation")->pass);
}

TEST_CASE("class verifiers") {
    const auto h1 = make_media(spec_from(R"({"kind":"H1_periodic","coefficient":"tx_periodic","a0":1,"amp":0.3,"T":2,"p":3})"));
    const auto rep = verify_class(h1, HypothesisClass::H1);
    CHECK(rep.pass());
    CHECK(h1.C_h1 == doctest::Approx(1.3));

    const auto h3 = make_media(spec_from(R"({"kind":"H3","coefficient":"space_cos","a0":1.25,"amp":0.25,"p":6.283185307179586})"));
    CHECK(verify_class(h3, HypothesisClass::H3).pass());

    auto bad = h3;
    bad.g = [](double u) { return u * u; };
    bad.g_prime = [](double u) { return 2.0 * u; };
    const auto r = verify_class(bad, HypothesisClass::H3);
    CHECK_FALSE(r.pass());
    CHECK_FALSE(r.find("g_prime_zero")->pass);
}

TEST_CASE("inconsistent specs are rejected") {
    CHECK_THROWS_AS(make_media(spec_from(R"({"kind":"logistic","beta0":-1})")), ConfigError);
    CHECK_THROWS_AS(make_media(spec_from(R"({"kind":"H1","coefficient":"time_sin","a0":0.2,"amp":0.5,"T":1})")), ConfigError);
    CHECK_THROWS_AS(make_media(spec_from(R"({"kind":"nope"})")), ConfigError);
    CHECK_THROWS_AS(make_media(spec_from(R"({"kind":"H1","coefficient":"space_cos","a0":1,"amp":0.2})")), ConfigError);
}

TEST_CASE("spec round trip") {
    const auto s = spec_from(R"({"kind":"H1","coefficient":"tx_periodic","a0":1,"amp":0.3,"T":2,"p":3,"P0":2.5})");
    const auto j = s.to_json();
    const auto s2 = MediaSpec::from_json(j);
    CHECK(s2.to_json() == j);
    CHECK(make_media(s2).P0 == 2.5);
}
