#include <doctest.h>

#include <cmath>

#include "kpplab/entire.hpp"
#include "kpplab/errors.hpp"

using namespace kpplab;

namespace {

ReactionModel model(const char* text) { return make_media(MediaSpec::from_json(nlohmann::json::parse(text))); }

ReactionModel seasonal() {
    return model(R"({"kind":"custom","form":"a_minus_u","coefficient":"time_sin","a0":1,"amp":0.5,"omega":1})");
}

// Attracting orbit of u' = u (1 + 0.5 sin t - u) by long RK4 integration from far in the past.
struct OrbitOracle {
    double h = 1e-3;
    double t = -40.0 * M_PI;
    double y = 1.0;

    static double rate(double t, double y) { return y * (1.0 + 0.5 * std::sin(t) - y); }
    double advance_to(double target) {
        while (t < target - 1e-12) {
            const double s = std::min(h, target - t);
            const double k1 = rate(t, y), k2 = rate(t + s / 2, y + s / 2 * k1);
            const double k3 = rate(t + s / 2, y + s / 2 * k2), k4 = rate(t + s, y + s * k3);
            y += s / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
            t += s;
        }
        return y;
    }
};

}  // namespace

TEST_CASE("floor calibration") {
    const auto cal = calibrate_floor(DispersalOperator::random(), logistic_model());
    CHECK(cal.delta == 0.5);
    CHECK(cal.T == 1.0);

    auto dying = custom_model([](double, double, double u) { return -0.1 - u; },
                              [](double, double, double) { return -1.0; }, 0.1, 1.0, -0.1, -0.1);
    dying.space_independent = true;
    dying.time_independent = true;
    CHECK_THROWS_AS(calibrate_floor(DispersalOperator::random(), dying), ConstructionError);
}

TEST_CASE("logistic entire solution is one") {
    EntireOptions o;
    o.tol = 1e-12;
    const auto U = build_entire(DispersalOperator::random(), logistic_model(), o);
    CHECK(U.converged);
    CHECK(U.sandwich_monotone);
    CHECK(U.max_gap_ratio <= 0.9);
    for (const auto& f : U.snapshots)
        for (double v : f.values) CHECK(std::abs(v - 1.0) < 1e-6);
    CHECK(U.inf >= U.delta);
    CHECK(U.sup <= U.M);
    for (std::size_t n = 1; n < U.gap_history.size(); ++n) CHECK(U.gap_history[n] <= U.gap_history[n - 1]);

    EntireOptions same;
    same.delta = same.M = 1.0;
    same.T_iter = 1.0;
    const auto D = build_entire(DispersalOperator::random(), logistic_model(), same);
    CHECK(D.iterations == 0);
    CHECK(D.snapshots.back().values[0] == 1.0);

    const auto nl = build_entire(DispersalOperator::nonlocal(Kernel::uniform(1.0)), logistic_model(), o);
    CHECK(std::abs(nl.at(0.3).values[1] - 1.0) < 1e-6);
}

TEST_CASE("seasonal entire solution follows the scalar periodic orbit") {
    EntireOptions o;
    o.grid.dt = 2e-6;
    o.tol = 1e-10;
    const auto U = build_entire(DispersalOperator::random(), seasonal(), o);
    CHECK(U.converged);
    CHECK(U.sandwich_monotone);
    CHECK(U.max_gap_ratio <= 0.9);
    CHECK(U.t_b - U.t_a == doctest::Approx(6 * M_PI));
    OrbitOracle orbit;
    double worst = 0.0;
    for (std::size_t k = 0; k < U.snapshots.size(); k += 4) {
        const double t = U.t_a + static_cast<double>(k) * U.snap_dt;
        worst = std::max(worst, std::abs(U.snapshots[k].values[0] - orbit.advance_to(t)));
    }
    CHECK(worst < 1e-5);

    const auto rec = check_recurrence(U, 2 * M_PI, std::nullopt, 1e-6);
    REQUIRE(rec.time_defect);
    CHECK(*rec.time_defect < 1e-6);
    CHECK(rec.pass);
    CHECK_THROWS_AS(check_recurrence(U, 4 * M_PI, std::nullopt, 1e-6), ConfigError);
    // periodic wrap outside the window
    CHECK(U.value(2 * M_PI * 7 + 0.5, 0.0) == doctest::Approx(U.value(0.5, 0.0)).epsilon(1e-12));
}

TEST_CASE("re-evolving a stored snapshot reproduces later ones") {
    const auto m = model(R"({"kind":"H1","coefficient":"tx_periodic","a0":1,"amp":0.5,"T":2,"p":4})");
    EntireOptions o;
    o.grid.dx = 0.2;
    const auto U = build_entire(DispersalOperator::random(), m, o);
    REQUIRE(U.converged);
    CHECK(U.grid.periodic);
    const auto rep = verify_entire(DispersalOperator::random(), m, U, {EntirePerturbation::scaled(1.0)},
                                   {U.t_a + 16 * U.snap_dt}, 2.0, 1e-8, U.snap_dt);
    CHECK(rep.pass);
    for (double e : rep.traces[0].error) CHECK(e < 1e-8);
    const auto rec = check_recurrence(U, 2.0, 4.0, 1e-6);
    CHECK(rec.pass);
}

TEST_CASE("verify_entire attracts positive data") {
    const auto U = build_entire(DispersalOperator::random(), logistic_model());
    const auto rep = verify_entire(DispersalOperator::random(), logistic_model(), U,
                                   {EntirePerturbation::scaled(1.5), EntirePerturbation::scaled(0.5),
                                    EntirePerturbation::scaled(1.0)},
                                   {0.0, 0.5});
    CHECK(rep.pass);
    CHECK(rep.max_time_to_tol > 0.0);
    for (const auto& tr : rep.traces) {
        CHECK(tr.error.back() < 1e-3);
        if (tr.perturbation == "scale_1") CHECK(tr.error.front() == 0.0);
    }

    EntirePerturbation bump{"bump", [](const Field& u) {
                                return Field::sample(u.grid, [](double x) { return std::max(0.0, 1.0 - x * x); }, u.t);
                            }};
    const auto W = [] {
        EntireOptions o;
        o.grid.x_lo = -5;
        o.grid.x_hi = 5;
        auto m = logistic_model();
        m.space_independent = false;
        return std::make_pair(build_entire(DispersalOperator::random(), m, o), m);
    }();
    CHECK(W.first.edge_sensitivity < 1e-8);
    CHECK_THROWS_AS(verify_entire(DispersalOperator::random(), W.second, W.first, {bump}, {0.0}), ConfigError);
}

TEST_CASE("almost periods of a quasi-periodic medium") {
    const auto m = model(
        R"({"kind":"H2","coefficient":"quasi_periodic_x","a0":1,"coeffs":[0.1,0.1],"freqs":[1,1.4142135623730951]})");
    EntireOptions o;
    o.grid.x_lo = -60;
    o.grid.x_hi = 60;
    const auto U = build_entire(DispersalOperator::random(), m, o);
    CHECK(U.converged);
    CHECK(U.edge_sensitivity < 1e-6);
    const auto rec = check_recurrence(U, std::nullopt, std::nullopt, 0.05);
    CHECK(!rec.almost_periods.empty());
    CHECK(rec.scanned > 40.0);

    const auto L = build_entire(DispersalOperator::random(), logistic_model());
    const auto flat = check_recurrence(L, std::nullopt, std::nullopt, 1e-9);
    CHECK(flat.almost_periods.size() == 2);
    CHECK(flat.pass);
}
