#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kpplab/discretization.hpp"
#include "kpplab/errors.hpp"

using namespace kpplab;

namespace {

// Composite Simpson rule, independent of the library's trapezoid weights.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

Field random_field(const Grid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.1, 2.0);
    Field f = Field::constant(g, 0.0);
    for (auto& v : f.values) v = d(rng);
    return f;
}

}  // namespace

TEST_CASE("grid coordinates follow the window shift") {
    Grid g = Grid::window(-1.0, 0.5, 10);
    CHECK(g.x(0) == doctest::Approx(-1.0));
    g.window_shift = 4;
    CHECK(g.x(0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(Grid::window(0.0, 0.0, 10), ConfigError);
    CHECK_THROWS_AS(Grid::window(0.0, 0.1, 2), ConfigError);
}

TEST_CASE("trajectory rejects non-increasing timestamps") {
    Trajectory tr;
    const Grid g = Grid::window(0, 0.1, 5);
    tr.push(Field::constant(g, 1.0, 0.0));
    tr.push(Field::constant(g, 1.0, 1.0));
    CHECK_THROWS_AS(tr.push(Field::constant(g, 1.0, 1.0)), InvariantError);
}

TEST_CASE("random dispersal of a quadratic is exactly 2 inside") {
    const Grid g = Grid::window(-2.0, 0.125, 33);
    const Field u = Field::sample(g, [](double x) { return x * x; });
    const Field out = apply(DispersalOperator::random(), u);
    for (int i = 1; i + 1 < g.n; ++i) CHECK(out.values[static_cast<std::size_t>(i)] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("affine functions are annihilated by random dispersal inside") {
    const Grid g = Grid::window(0.0, 0.25, 20);
    const Field u = Field::sample(g, [](double x) { return 3.0 - 0.5 * x; });
    const Field out = apply(DispersalOperator::random(), u);
    for (int i = 1; i + 1 < g.n; ++i) CHECK(std::abs(out.values[static_cast<std::size_t>(i)]) < 1e-12);
}

TEST_CASE("nonlocal dispersal annihilates constants and matches the closed-form convolution") {
    const auto op = DispersalOperator::nonlocal(Kernel::uniform(1.0));
    const Grid ring = Grid::ring(2.0 * M_PI * 4, 1600);
    const Field c = Field::constant(ring, 3.7);
    for (double v : apply(op, c).values) CHECK(v == 0.0);

    // Spacing commensurate with the kernel edge; interior cells only.
    const Grid win = Grid::window(-10.0, 0.01, 2000);
    const Field u = Field::sample(win, [](double x) { return std::cos(x); });
    const Field out = apply(op, u);
    // Oracle: (1/2) int_{-1}^{1} cos(x+z) dz - cos x = (sin 1 - 1) cos x.
    for (int i = 200; i < 1800; i += 97) {
        const double x = win.x(i);
        const double conv = simpson([x](double z) { return 0.5 * std::cos(x + z); }, -1.0, 1.0) - std::cos(x);
        CHECK(out.values[static_cast<std::size_t>(i)] == doctest::Approx(conv).epsilon(1e-4));
        CHECK(out.values[static_cast<std::size_t>(i)] ==
              doctest::Approx((std::sin(1.0) - 1.0) * std::cos(x)).epsilon(1e-4));
    }
}

TEST_CASE("kernel weights are nonnegative with unit mass") {
    for (const auto& k : {Kernel::uniform(1.0), Kernel::cosine_bump(1.5)}) {
        const auto kw = discretize(k, 0.05);
        double s = 0.0;
        for (double w : kw.w) {
            CHECK(w >= 0.0);
            s += w;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
    CHECK_THROWS_AS(discretize(Kernel::uniform(0.1), 0.1), ConfigError);
}

TEST_CASE("kernel Laplace moment") {
    const auto k = Kernel::uniform(1.0);
    CHECK(kernel_laplace(k, 0.0, 0.01) == doctest::Approx(1.0).epsilon(1e-14));
    const double oracle = simpson([](double z) { return 0.5 * std::exp(z); }, -1.0, 1.0);
    CHECK(kernel_laplace(k, 1.0, 0.001) == doctest::Approx(oracle).epsilon(1e-6));
    CHECK(kernel_laplace(k, -1.0, 0.001) == doctest::Approx(kernel_laplace(k, 1.0, 0.001)).epsilon(1e-14));
    CHECK_THROWS_AS(kernel_laplace(k, 60.0, 0.01), NumericError);
}

TEST_CASE("tilted operators") {
    const Grid ring = Grid::ring(10.0, 200);
    const Field one = Field::constant(ring, 1.0);
    const Field u = Field::sample(ring, [](double x) { return 1.0 + 0.3 * std::sin(2 * M_PI * x / 10.0); });

    const auto rnd = DispersalOperator::random();
    CHECK(tilted_apply(rnd, 0.0, u).values == apply(rnd, u).values);
    for (double v : tilted_apply(rnd, 0.7, one).values) CHECK(v == doctest::Approx(0.49).epsilon(1e-12));

    const auto nl = DispersalOperator::nonlocal(Kernel::uniform(1.0));
    CHECK(tilted_apply(nl, 0.0, u).values == apply(nl, u).values);
    const Grid fine = Grid::ring(10.0, 10000);
    const double oracle = simpson([](double z) { return 0.5 * std::exp(-z); }, -1.0, 1.0) - 1.0;
    for (double v : tilted_apply(nl, 1.0, Field::constant(fine, 1.0)).values)
        CHECK(v == doctest::Approx(oracle).epsilon(1e-5));
    CHECK(oracle == doctest::Approx(0.17520).epsilon(1e-4));
}

TEST_CASE("conjugate tilt keeps discrete exponentials exact") {
    // e^{mu x} Delta_h e^{-mu x} applied to 1 equals Delta_h e^{-mu x} / e^{-mu x}.
    const double dx = 0.1, mu = 0.8;
    const Grid ring = Grid::ring(5.0, 50);
    const Field one = Field::constant(ring, 1.0);
    const double oracle = (std::exp(mu * dx) + std::exp(-mu * dx) - 2.0) / (dx * dx);
    for (double v : tilted_apply(DispersalOperator::random(), mu, one, TiltForm::Conjugate).values)
        CHECK(v == doctest::Approx(oracle).epsilon(1e-12));
}

TEST_CASE("operators are linear") {
    std::mt19937_64 rng(5);
    const Grid ring = Grid::ring(8.0, 80);
    const auto nl = DispersalOperator::nonlocal(Kernel::cosine_bump(1.0));
    for (const auto& op : {DispersalOperator::random(), nl}) {
        for (int trial = 0; trial < 20; ++trial) {
            const Field a = random_field(ring, rng), b = random_field(ring, rng);
            Field ab = a;
            for (std::size_t i = 0; i < ab.values.size(); ++i) ab.values[i] = 2.0 * a.values[i] - 3.0 * b.values[i];
            for (double mu : {0.0, 0.6}) {
                const Field la = tilted_apply(op, mu, a), lb = tilted_apply(op, mu, b), lab = tilted_apply(op, mu, ab);
                for (std::size_t i = 0; i < ab.values.size(); ++i)
                    CHECK(std::abs(lab.values[i] - (2.0 * la.values[i] - 3.0 * lb.values[i])) <
                          1e-12 * (1.0 + std::abs(lab.values[i]) + 400.0));
            }
        }
    }
}

TEST_CASE("extension policy") {
    const Grid g = Grid::window(0.0, 0.1, 20);
    const auto c = extend_policy(Field::constant(g, 0.4), Side::Right);
    CHECK(c.value(3) == doctest::Approx(0.4));
    CHECK(extend_policy(Field::constant(g, 0.4), Side::Left).value(5) == doctest::Approx(0.4));

    const Field e = Field::sample(g, [](double x) { return std::exp(-x); });
    const auto r = extend_policy(e, Side::Right);
    for (int k = 1; k <= 10; ++k) {
        const double exact = std::exp(-g.x(g.n - 1 + k));
        CHECK(std::abs(r.value(k) - exact) <= 1e-10 * exact);
    }
    Field z = e;
    z.values.back() = 0.0;
    CHECK(extend_policy(z, Side::Right).value(2) == 0.0);
}

TEST_CASE("window shifts") {
    const Grid g = Grid::window(-5.0, 0.1, 100);
    const auto front = [](double x) { return 1.0 / (1.0 + std::exp(x)); };
    const Field u = Field::sample(g, front);
    CHECK(shift_window(u, 0).values == u.values);

    const Field s = shift_window(u, 7);
    CHECK(s.grid.window_shift == 7);
    for (int i = 0; i + 7 < g.n; ++i) CHECK(s.values[static_cast<std::size_t>(i)] == u.values[static_cast<std::size_t>(i + 7)]);
    // Newly exposed cells: compare against direct resampling at the new coordinates.
    for (int i = g.n - 7; i < g.n; ++i) CHECK(s.values[static_cast<std::size_t>(i)] == doctest::Approx(front(s.grid.x(i))).epsilon(1e-3));

    const Field back = shift_window(s, -7);
    for (int i = 7; i + 7 < g.n; ++i) CHECK(back.values[static_cast<std::size_t>(i)] == u.values[static_cast<std::size_t>(i)]);
    CHECK_THROWS_AS(shift_window(u, 100), ConfigError);
}

TEST_CASE("kernel tables load from CSV") {
    const auto path = std::filesystem::temp_directory_path() / "kpplab_kernel.csv";
    {
        std::ofstream out(path);
        out << "z,kappa\n# triangle\n";
        for (int i = -10; i <= 10; ++i) out << i * 0.1 << "," << (1.0 - std::abs(i * 0.1)) << "\n";
    }
    const Kernel k = Kernel::from_csv(path);
    CHECK(k.r0 == doctest::Approx(1.0));
    CHECK(k.density(0.05) == doctest::Approx(0.95));
    CHECK(kernel_laplace(k, 0.0, 0.1) == doctest::Approx(1.0));
    std::filesystem::remove(path);
    CHECK_THROWS_AS(Kernel::from_table({0.0, 0.5, 1.0}, {1.0, 0.5, 0.0}), ConfigError);
}

TEST_CASE("off-node kernel edges keep second-order moments") {
    const auto k = Kernel::uniform(1.0);
    const double exact = std::sinh(1.0);
    for (double dx : {0.03, 0.07, 0.0123}) {
        const double err = std::abs(kernel_laplace(k, 1.0, dx) - exact);
        CHECK(err < 2.0 * dx * dx);
    }
}
