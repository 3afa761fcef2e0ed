#include <doctest.h>

#include <cmath>
#include <random>

#include "kpplab/errors.hpp"
#include "kpplab/partmetric.hpp"

using namespace kpplab;

namespace {

Field random_positive(const Grid& g, std::mt19937_64& rng, double lo = 0.1, double hi = 2.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Field f = Field::constant(g, 1.0);
    for (auto& v : f.values) v = d(rng);
    return f;
}

// Brute force: smallest alpha on a geometric grid with v/alpha <= u <= alpha v.
double brute_force_rho(const Field& u, const Field& v) {
    for (int k = 0; k < 2000000; ++k) {
        const double alpha = std::exp(k * 1e-6);
        bool ok = true;
        for (std::size_t i = 0; i < u.values.size() && ok; ++i)
            ok = v.values[i] / alpha <= u.values[i] && u.values[i] <= alpha * v.values[i];
        if (ok) return std::log(alpha);
    }
    return INFINITY;
}

double logistic_exact(double u0, double t) { return u0 * std::exp(t) / (1.0 - u0 + u0 * std::exp(t)); }

}  // namespace

TEST_CASE("part metric basics") {
    const Grid g = Grid::window(0, 0.1, 10);
    const Field u = Field::constant(g, 0.7);
    CHECK(*part_metric(u, u) == 0.0);
    Field twice = u;
    for (auto& v : twice.values) v *= 2.0;
    CHECK(*part_metric(twice, u) == doctest::Approx(std::log(2.0)));
    Field zero = u;
    zero.values[4] = 0.0;
    CHECK_FALSE(part_metric(zero, u).has_value());
    CHECK_THROWS_AS(part_metric(u, Field::constant(Grid::window(0, 0.2, 10), 1.0)), ConfigError);
}

TEST_CASE("part metric against brute force and metric axioms") {
    std::mt19937_64 rng(9);
    const Grid g = Grid::window(0, 0.1, 12);
    for (int k = 0; k < 20; ++k) {
        const Field a = random_positive(g, rng, 0.5, 1.5), b = random_positive(g, rng, 0.5, 1.5),
                    c = random_positive(g, rng, 0.5, 1.5);
        const double rab = *part_metric(a, b);
        CHECK(std::abs(rab - brute_force_rho(a, b)) <= 1.1e-6);
        CHECK(rab == *part_metric(b, a));
        CHECK(rab <= *part_metric(a, c) + *part_metric(c, b) + 1e-12);
        for (double s : {0.3, 4.0}) {
            Field sa = a;
            for (auto& v : sa.values) v *= s;
            CHECK(*part_metric(sa, a) == doctest::Approx(std::abs(std::log(s))).epsilon(1e-12));
        }
    }
}

TEST_CASE("scalar logistic trace matches the closed form") {
    const Grid g = Grid::ring(3.0, 3);
    IVPOptions o;
    o.dt = 1e-4;
    const auto tr = metric_trace(DispersalOperator::random(), logistic_model(), Field::constant(g, 0.2),
                                 Field::constant(g, 0.8), 0.0, 4.0, 0.5, o);
    REQUIRE(tr.samples.size() == 9);
    for (const auto& s : tr.samples) {
        const double oracle = std::log(logistic_exact(0.8, s.t) / logistic_exact(0.2, s.t));
        CHECK(s.rho == doctest::Approx(oracle).epsilon(1e-4));
    }
    const auto est = decrement_estimate(tr, 0.5, 1.0);
    REQUIRE(est.delta);
    double oracle = INFINITY;
    for (double t = 0.0; t + 1.0 <= 4.0 + 1e-12; t += 0.5) {
        const double r0 = std::log(logistic_exact(0.8, t) / logistic_exact(0.2, t));
        const double r1 = std::log(logistic_exact(0.8, t + 1) / logistic_exact(0.2, t + 1));
        if (r0 >= 0.5) oracle = std::min(oracle, r0 - r1);
    }
    CHECK(*est.delta == doctest::Approx(oracle).epsilon(1e-3));
}

TEST_CASE("identical data give a zero trace and no qualifying segment") {
    const Grid g = Grid::ring(4.0, 20);
    const Field u = Field::constant(g, 0.4);
    const auto tr = metric_trace(DispersalOperator::random(), logistic_model(), u, u, 0.0, 2.0, 0.5);
    for (const auto& s : tr.samples) CHECK(s.rho == 0.0);
    CHECK_FALSE(decrement_estimate(tr, 0.2, 1.0).delta.has_value());
}

TEST_CASE("trace is monotone on random positive pairs with positive decrement") {
    std::mt19937_64 rng(77);
    const auto m = make_media(MediaSpec::from_json(
        nlohmann::json::parse(R"({"kind":"H1","coefficient":"tx_periodic","a0":1,"amp":0.5,"T":2,"p":4})")));
    for (int k = 0; k < 10; ++k) {
        const Grid g = Grid::ring(4.0, 40);
        const auto op = k % 2 ? DispersalOperator::nonlocal(Kernel::uniform(0.5)) : DispersalOperator::random();
        const auto tr = metric_trace(op, m, random_positive(g, rng), random_positive(g, rng), 0.0, 4.0, 0.25);
        CHECK(tr.monotone(1e-10));
        const auto est = decrement_estimate(tr, 0.2, 1.0);
        if (est.segments > 0) CHECK(*est.delta > 0.0);
    }
}
