// Python extension: thin wrappers, JSON crosses the boundary as text.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kpplab/entire.hpp"
#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/harness.hpp"
#include "kpplab/partmetric.hpp"
#include "kpplab/spectral.hpp"
#include "kpplab/stability.hpp"
#include "kpplab/waves.hpp"

namespace py = pybind11;
using namespace kpplab;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_array(const std::vector<double>& v) {
    Array a(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

Field to_field(const Grid& g, const Array& a, double t = 0.0) {
    if (a.ndim() != 1 || a.shape(0) != g.n) throw ConfigError("array length does not match the grid");
    Field f;
    f.grid = g;
    f.t = t;
    f.values.assign(a.data(), a.data() + a.shape(0));
    return f;
}

Array grid_x(const Grid& g) {
    std::vector<double> x(static_cast<std::size_t>(g.n));
    for (int i = 0; i < g.n; ++i) x[static_cast<std::size_t>(i)] = g.x(i);
    return to_array(x);
}

// Rows of a stack of fields with equal size.
Array stack(const std::vector<Field>& fs) {
    const py::ssize_t rows = static_cast<py::ssize_t>(fs.size());
    const py::ssize_t cols = fs.empty() ? 0 : fs.front().size();
    Array a({rows, cols});
    double* out = a.mutable_data();
    for (const auto& f : fs) out = std::copy(f.values.begin(), f.values.end(), out);
    return a;
}

ReactionModel media_from_json(const std::string& text) { return make_media(MediaSpec::from_json(json::parse(text))); }

py::dict entire_dict(const EntireSolution& U) {
    std::vector<double> t;
    for (std::size_t k = 0; k < U.snapshots.size(); ++k) t.push_back(U.t_a + static_cast<double>(k) * U.snap_dt);
    py::dict d;
    d["t"] = to_array(t);
    d["x"] = grid_x(U.grid);
    d["values"] = stack(U.snapshots);
    d["gap_history"] = to_array(U.gap_history);
    d["converged"] = U.converged;
    d["sandwich_monotone"] = U.sandwich_monotone;
    d["max_gap_ratio"] = U.max_gap_ratio;
    d["iterations"] = U.iterations;
    d["inf"] = U.inf;
    d["sup"] = U.sup;
    d["delta"] = U.delta;
    d["M"] = U.M;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "kpplab native core";
    m.attr("__version__") = KPPLAB_VERSION;

    auto base = py::register_exception<Error>(m, "KpplabError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ConstructionError>(m, "ConstructionError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<UnsupportedError>(m, "UnsupportedError", base.ptr());
    py::register_exception<InvariantError>(m, "InvariantError", base.ptr());

    py::class_<Grid>(m, "Grid")
        .def_static("window", &Grid::window, py::arg("x_min"), py::arg("dx"), py::arg("cells"))
        .def_static("ring", &Grid::ring, py::arg("length"), py::arg("cells"))
        .def_readonly("n", &Grid::n)
        .def_readonly("dx", &Grid::dx)
        .def_readonly("periodic", &Grid::periodic)
        .def_property_readonly("x", &grid_x);

    py::class_<DispersalOperator>(m, "Operator")
        .def_static("random", &DispersalOperator::random)
        .def_static("nonlocal_uniform", [](double r0) { return DispersalOperator::nonlocal(Kernel::uniform(r0)); },
                    py::arg("r0") = 1.0)
        .def_static("nonlocal_cosine", [](double r0) { return DispersalOperator::nonlocal(Kernel::cosine_bump(r0)); },
                    py::arg("r0") = 1.0)
        .def_static("nonlocal_table", [](const std::string& p) { return DispersalOperator::nonlocal(Kernel::from_csv(p)); })
        .def_property_readonly("is_random", &DispersalOperator::is_random)
        .def("__repr__", &DispersalOperator::describe);

    py::class_<ReactionModel>(m, "Media")
        .def_static("from_json", &media_from_json)
        .def_readonly("label", &ReactionModel::label)
        .def_readonly("a_minus", &ReactionModel::a_minus)
        .def_readonly("a_plus", &ReactionModel::a_plus)
        .def_readonly("P0", &ReactionModel::P0)
        .def_readonly("beta0", &ReactionModel::beta0)
        .def("f", &ReactionModel::eval_f, py::arg("t"), py::arg("x"), py::arg("u"))
        .def("a", [](const ReactionModel& r, double t, double x) { return r.a(t, x); });

    m.def(
        "solve_ivp",
        [](const DispersalOperator& op, const ReactionModel& md, const Grid& g, const Array& u0, double t0, double t1,
           std::optional<double> dt, double record_stride, double cfl_safety) {
            IVPOptions o;
            o.dt = dt;
            o.record_stride = record_stride;
            o.cfl_safety = cfl_safety;
            const Field f = to_field(g, u0, t0);
            Trajectory tr;
            {
                py::gil_scoped_release nogil;
                tr = solve_ivp(op, md, t0, f, t1, o);
            }
            std::vector<double> t;
            for (const auto& s : tr.snapshots) t.push_back(s.t);
            return py::make_tuple(to_array(t), stack(tr.snapshots));
        },
        py::arg("op"), py::arg("media"), py::arg("grid"), py::arg("u0"), py::arg("t0"), py::arg("t1"),
        py::arg("dt") = py::none(), py::arg("record_stride") = 0.0, py::arg("cfl_safety") = 0.5);

    m.def(
        "part_metric",
        [](const Array& u, const Array& v) {
            const Grid g = Grid::window(0.0, 1.0, static_cast<int>(u.shape(0)));
            return part_metric(to_field(g, u), to_field(g, v));
        },
        py::arg("u"), py::arg("v"));

    m.def(
        "speed_curve",
        [](const DispersalOperator& op, const ReactionModel& md, double lo, double hi, int points, int cells) {
            EigenOptions o;
            o.cells_per_period = cells;
            SpeedCurve c;
            {
                py::gil_scoped_release nogil;
                c = speed_curve(op, md, lo, hi, points, o);
            }
            py::dict d;
            d["mu"] = to_array(c.mu_grid);
            d["lambda"] = to_array(c.lambda_values);
            d["c"] = to_array(c.c_values);
            d["mu_star"] = c.mu_star;
            d["c_star"] = c.c_star;
            d["lambda_star"] = c.lambda_star;
            return d;
        },
        py::arg("op"), py::arg("media"), py::arg("mu_lo"), py::arg("mu_hi"), py::arg("points") = 40,
        py::arg("cells_per_period") = 128);

    m.def(
        "principal_lambda",
        [](const DispersalOperator& op, const ReactionModel& md, double mu, const std::string& method) {
            if (method != "evolution" && method != "matrix") throw ConfigError("method must be evolution or matrix");
            py::gil_scoped_release nogil;
            return principal_lambda(op, md, mu, method == "matrix" ? EigenMethod::Matrix : EigenMethod::Evolution)
                .lambda;
        },
        py::arg("op"), py::arg("media"), py::arg("mu"), py::arg("method") = "evolution");

    m.def(
        "decay_rate",
        [](const ReactionModel& md, double lambda, double x_max) {
            return decaying_eigenfunction(md, lambda, x_max).mu_of_lambda;
        },
        py::arg("media"), py::arg("lam"), py::arg("x_max") = 40.0);

    m.def(
        "build_entire",
        [](const DispersalOperator& op, const ReactionModel& md, double tol, double dx, double x_lo, double x_hi) {
            EntireOptions o;
            o.tol = tol;
            o.grid.dx = dx;
            o.grid.x_lo = x_lo;
            o.grid.x_hi = x_hi;
            EntireSolution U;
            {
                py::gil_scoped_release nogil;
                U = build_entire(op, md, o);
            }
            return entire_dict(U);
        },
        py::arg("op"), py::arg("media"), py::arg("tol") = 1e-10, py::arg("dx") = 0.1, py::arg("x_lo") = -20.0,
        py::arg("x_hi") = 20.0);

    py::class_<WaveBundle>(m, "Wave")
        .def_property_readonly("family", [](const WaveBundle& b) { return to_string(b.wave.family); })
        .def_property_readonly("t", [](const WaveBundle& b) { return to_array(b.wave.t); })
        .def_property_readonly("X", [](const WaveBundle& b) { return to_array(b.wave.X); })
        .def_property_readonly("predicted_speed", [](const WaveBundle& b) { return b.pair->speed; })
        .def_property_readonly("sandwich_ok", [](const WaveBundle& b) { return b.wave.sandwich_ok; })
        .def_property_readonly("converged", [](const WaveBundle& b) { return b.wave.converged; })
        .def_property_readonly("residual_pass", [](const WaveBundle& b) { return b.pair->residual.pass; })
        .def("profile",
             [](const WaveBundle& b, std::size_t k) {
                 if (k >= b.wave.snapshots.size()) throw py::index_error("no such record");
                 const auto& s = b.wave.snapshots[k];
                 return py::make_tuple(grid_x(s.grid), to_array(s.values));
             })
        .def("summary_json", [](const WaveBundle& b) { return b.wave.to_json().dump(); })
        .def(
            "diagnostics_json",
            [](const WaveBundle& b, double eps1, double eps2, double tau) {
                return wave_diagnostics(b.wave, eps1, eps2, tau).to_json().dump();
            },
            py::arg("eps1") = 0.1, py::arg("eps2") = 0.9, py::arg("tau") = 1.0);

    m.def(
        "build_wave",
        [](const DispersalOperator& op, const ReactionModel& md, const std::string& recipe) {
            const auto r = WaveRecipe::from_json(json::parse(recipe));
            py::gil_scoped_release nogil;
            return build_wave(op, md, r);
        },
        py::arg("op"), py::arg("media"), py::arg("recipe_json") = "{}");

    m.def(
        "stability_json",
        [](const DispersalOperator& op, const ReactionModel& md, const WaveBundle& b, const std::string& spec,
           double horizon, double eps_target, double t0) {
            const auto ps = PerturbationSpec::from_json(json::parse(spec));
            StabilityOptions so;
            so.horizon = horizon;
            so.eps_target = eps_target;
            py::gil_scoped_release nogil;
            const auto rep = stability_experiment(op, md, b.wave, make_perturbation(b.wave, t0, ps), so);
            return rep.to_json().dump();
        },
        py::arg("op"), py::arg("media"), py::arg("wave"), py::arg("spec_json"), py::arg("horizon") = 50.0,
        py::arg("eps_target") = 1e-2, py::arg("t0") = 0.0);

    m.def(
        "comparison_suite_json",
        [](const DispersalOperator& op, const ReactionModel& md, int pairs, std::uint64_t seed, double horizon) {
            py::gil_scoped_release nogil;
            return comparison_suite(op, md, pairs, seed, horizon).to_json().dump();
        },
        py::arg("op"), py::arg("media"), py::arg("pairs") = 100, py::arg("seed") = 0, py::arg("horizon") = 2.0);

    m.def(
        "partmetric_suite_json",
        [](const DispersalOperator& op, const ReactionModel& md, int pairs, std::uint64_t seed, double sigma,
           double tau) {
            py::gil_scoped_release nogil;
            return partmetric_suite(op, md, pairs, seed, sigma, tau).to_json().dump();
        },
        py::arg("op"), py::arg("media"), py::arg("pairs") = 100, py::arg("seed") = 0, py::arg("sigma") = 0.2,
        py::arg("tau") = 1.0);

    m.def(
        "run_json",
        [](const std::string& config) {
            const auto cfg = RunConfig::from_json(json::parse(config));
            py::gil_scoped_release nogil;
            return run(cfg).manifest.dump();
        },
        py::arg("config_json"));

    m.def(
        "resolve_config_json",
        [](const std::string& config) { return RunConfig::from_json(json::parse(config)).to_json().dump(); },
        py::arg("config_json"));

    m.def(
        "report_json",
        [](const std::vector<std::string>& dirs) {
            std::vector<std::filesystem::path> p(dirs.begin(), dirs.end());
            const auto t = report(p);
            json j = t.to_json();
            j["markdown"] = t.markdown();
            return j.dump();
        },
        py::arg("dirs"));
}
