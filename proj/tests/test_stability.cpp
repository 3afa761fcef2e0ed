#include <doctest.h>

#include <cmath>

#include "kpplab/errors.hpp"
#include "kpplab/stability.hpp"

using namespace kpplab;

namespace {

const WaveBundle& fisher() {
    static const WaveBundle b = [] {
        WaveRecipe r;
        r.wave.horizon = 20.0;
        return build_wave(DispersalOperator::random(), logistic_model(), r);
    }();
    return b;
}

PerturbationSpec spec(PerturbationKind k, double a, std::uint64_t seed = 0) {
    PerturbationSpec s;
    s.kind = k;
    s.amplitude = a;
    s.seed = seed;
    return s;
}

}  // namespace

TEST_CASE("perturbation construction") {
    const auto& w = fisher().wave;
    const auto zero = make_perturbation(w, 0.0, spec(PerturbationKind::Scale, 0.0));
    CHECK(zero.u0.values == w.snapshots[0].values);
    CHECK(zero.admissible);

    const auto s = make_perturbation(w, 0.0, spec(PerturbationKind::Scale, 0.3));
    CHECK(s.right_ratio_defect < 1e-3);
    CHECK(s.max_eta <= 0.3 + 1e-15);
    // behind the front the full amplitude applies
    CHECK(s.u0.values[0] / w.snapshots[0].values[0] == doctest::Approx(1.3));

    const auto a = make_perturbation(w, 0.0, spec(PerturbationKind::FrontNoise, 0.3, 7));
    const auto b = make_perturbation(w, 0.0, spec(PerturbationKind::FrontNoise, 0.3, 7));
    const auto c = make_perturbation(w, 0.0, spec(PerturbationKind::FrontNoise, 0.3, 8));
    CHECK(a.u0.values == b.u0.values);
    CHECK(a.u0.values != c.u0.values);

    const auto sh = make_perturbation(w, 0.0, spec(PerturbationKind::Shift, 0.1));
    CHECK(sh.max_eta <= 0.1 + 1e-15);
    CHECK(sh.admissible);

    const auto lf = make_perturbation(w, 0.0, spec(PerturbationKind::LeftFloor, 0.3));
    CHECK(lf.u0.values[0] >= 0.5 * fisher().entire->inf);

    const auto cut = make_perturbation(w, 0.0, spec(PerturbationKind::LeftCutoff, 0.1));
    CHECK(!cut.admissible);
    CHECK(!cut.flags.empty());

    CHECK_THROWS_AS(make_perturbation(w, 0.25, spec(PerturbationKind::Scale, 0.1)), ConfigError);
    CHECK_THROWS_AS(make_perturbation(w, 0.0, spec(PerturbationKind::Scale, 1.5)), ConfigError);
    CHECK_THROWS_AS(perturbation_kind_from_string("wobble"), ConfigError);
}

TEST_CASE("zero perturbation stays on the wave") {
    const auto& w = fisher().wave;
    StabilityOptions o;
    o.horizon = 10.0;
    const auto r = stability_experiment(DispersalOperator::random(), logistic_model(), w,
                                        make_perturbation(w, 0.0, spec(PerturbationKind::Scale, 0.0)), o);
    for (double v : r.R) CHECK(v == 0.0);
    CHECK(r.pass);
    CHECK(r.reevolution_checked > 0);
    CHECK(r.reevolution_error < 1e-8);
    CHECK(decrement_verification(r, 0.1, 1.0).applicable == false);
}

TEST_CASE("fisher wave absorbs admissible perturbations") {
    const auto& w = fisher().wave;
    StabilityOptions o;
    o.horizon = 50.0;
    const auto r = stability_experiment(DispersalOperator::random(), logistic_model(), w,
                                        make_perturbation(w, 0.0, spec(PerturbationKind::Scale, 0.5)), o);
    CHECK(r.rho_monotone);
    CHECK(r.front_zone_ok);
    REQUIRE(r.time_to_target);
    CHECK(r.R.back() < 1e-2);
    CHECK(r.reevolution_error < 1e-8);
    // rho(0) = ln 1.5 here; independent check of the first sample
    CHECK(r.rho.samples.front().rho == doctest::Approx(std::log(1.5)).epsilon(1e-9));
    const auto d = decrement_verification(r, 0.2, 1.0);
    CHECK(d.applicable);
    CHECK(d.pass);
    // with rho monotone, the half window at the minimizing start drops no more than the full one
    const auto half = decrement_verification(r, 0.2, 0.5);
    REQUIRE(half.delta);
    CHECK(*half.delta <= *d.delta + 1e-12);

    const auto sw = stability_sweep(DispersalOperator::random(), logistic_model(), w,
                                    {PerturbationKind::Shift, PerturbationKind::FrontNoise,
                                     PerturbationKind::LeftCutoff},
                                    {0.1}, {1}, 0.0, o);
    CHECK(sw.flagged == 1);
    CHECK(sw.asserted == 2);
    CHECK(sw.pass);
}

TEST_CASE("entire basin from scaled copies") {
    const auto U = build_entire(DispersalOperator::random(), logistic_model());
    const auto b = entire_basin_experiment(DispersalOperator::random(), logistic_model(), U, {0.5, 2.0, 1.0}, {0.0});
    CHECK(b.pass);
    REQUIRE(b.min_time);
    // scalar oracle: logistic from 0.5 hits |u - 1| < 1e-3 at t = ln(999)
    CHECK(*b.min_time == doctest::Approx(std::log(999.0)).epsilon(0.1));
}
