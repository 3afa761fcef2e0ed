#include "kpplab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include "kpplab/entire.hpp"
#include "kpplab/errors.hpp"
#include "kpplab/evolve.hpp"
#include "kpplab/interface.hpp"
#include "kpplab/partmetric.hpp"
#include "kpplab/spectral.hpp"
#include "kpplab/stability.hpp"
#include "kpplab/waves.hpp"

namespace kpplab {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- specs

OperatorSpec OperatorSpec::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("operator must be an object");
    OperatorSpec o;
    o.kind = j.value("kind", o.kind);
    o.kernel = j.value("kernel", o.kernel);
    o.r0 = j.value("r0", o.r0);
    o.table = j.value("table", o.table);
    for (const auto& [k, v] : j.items())
        if (k != "kind" && k != "kernel" && k != "r0" && k != "table")
            throw ConfigError("operator: unknown field '" + k + "'");
    return o;
}

json OperatorSpec::to_json() const { return {{"kind", kind}, {"kernel", kernel}, {"r0", r0}, {"table", table}}; }

DispersalOperator OperatorSpec::make() const {
    if (kind == "random") return DispersalOperator::random();
    if (kind != "nonlocal") throw ConfigError("operator.kind must be random or nonlocal");
    if (kernel == "uniform") return DispersalOperator::nonlocal(Kernel::uniform(r0));
    if (kernel == "cosine_bump") return DispersalOperator::nonlocal(Kernel::cosine_bump(r0));
    if (kernel == "table") {
        if (table.empty()) throw ConfigError("operator.table is required for kernel 'table'");
        return DispersalOperator::nonlocal(Kernel::from_csv(table));
    }
    throw ConfigError("operator.kernel must be uniform, cosine_bump or table");
}

GridSpec GridSpec::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("grid must be an object");
    GridSpec g;
    g.dx = j.value("dx", g.dx);
    g.x_lo = j.value("x_lo", g.x_lo);
    g.x_hi = j.value("x_hi", g.x_hi);
    if (j.contains("dt") && !j["dt"].is_null()) g.dt = j["dt"].get<double>();
    g.cfl_safety = j.value("cfl_safety", g.cfl_safety);
    for (const auto& [k, v] : j.items())
        if (k != "dx" && k != "x_lo" && k != "x_hi" && k != "dt" && k != "cfl_safety")
            throw ConfigError("grid: unknown field '" + k + "'");
    if (!(g.dx > 0.0)) throw ConfigError("grid.dx must be positive");
    if (!(g.x_hi > g.x_lo)) throw ConfigError("grid.x_hi must exceed grid.x_lo");
    if (!(g.cfl_safety > 0.0 && g.cfl_safety <= 1.0)) throw ConfigError("grid.cfl_safety must lie in (0, 1]");
    if (g.dt && !(*g.dt > 0.0)) throw ConfigError("grid.dt must be positive");
    return g;
}

json GridSpec::to_json() const {
    json j = {{"dx", dx}, {"x_lo", x_lo}, {"x_hi", x_hi}, {"cfl_safety", cfl_safety}};
    j["dt"] = dt ? json(*dt) : json(nullptr);
    return j;
}

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k = {"simulate", "entire", "speed", "wave", "stability", "verify"};
    return k;
}

namespace {

json wave_defaults(double horizon) {
    WaveRecipe r;
    r.wave.horizon = horizon;
    return r.to_json();
}

json default_params(const std::string& kind) {
    if (kind == "simulate")
        return {{"initial", "front"}, {"amplitude", 1.0}, {"width", 1.0},   {"t1", 10.0},
                {"record_stride", 1.0}, {"track_front", false}, {"periodic", false}};
    if (kind == "entire")
        return {{"delta", nullptr}, {"M", nullptr},        {"T_iter", nullptr}, {"n_max", 60},
                {"tol", 1e-10},     {"t_a", 0.0},          {"t_b", nullptr},    {"snap_dt", nullptr},
                {"edge_check", true}, {"verify_horizon", 20.0}, {"verify_scales", {0.5, 1.5}}};
    if (kind == "speed") return {{"mu_lo", 0.2}, {"mu_hi", 4.0}, {"points", 40}, {"cells_per_period", 128}};
    if (kind == "wave") {
        json j = wave_defaults(40.0);
        j["snapshot_stride"] = 10;
        j["eps1"] = 0.1;
        j["eps2"] = 0.9;
        j["tau"] = 1.0;
        return j;
    }
    if (kind == "stability")
        return {{"wave", wave_defaults(10.0)},
                {"kinds", {"scale", "shift", "front_noise"}},
                {"flagged_kinds", {"left_cutoff"}},
                {"amplitudes", {0.1, 0.3}},
                {"seeds", nullptr},
                {"t0", 0.0},
                {"horizon", 50.0},
                {"eps_target", 1e-2},
                {"sample_dt", 0.5},
                {"eps0", 0.1},
                {"x_off", 0.0},
                {"decrement_eps0", 0.2},
                {"tau", 1.0}};
    if (kind == "verify")
        return {{"checks", {"H0", "class", "comparison", "partmetric"}},
                {"operators", {"random", "nonlocal"}},
                {"pairs", 100},
                {"class", nullptr},
                {"horizon", 2.0},
                {"sigma", 0.2},
                {"tau", 1.0}};
    return json::object();
}

bool compatible(const json& def, const json& v) {
    if (def.is_null()) return v.is_null() || v.is_number();
    if (def.is_number()) return v.is_number();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_string()) return v.is_string();
    if (def.is_array()) return v.is_array();
    if (def.is_object()) return v.is_object();
    return false;
}

json merge_params(const json& defaults, const json& given, const std::string& where, std::vector<std::string>& errs) {
    json out = defaults;
    if (!given.is_object()) {
        errs.push_back(where + " must be an object");
        return out;
    }
    for (const auto& [k, v] : given.items()) {
        if (!defaults.contains(k)) {
            errs.push_back(where + ": unknown parameter '" + k + "'");
            continue;
        }
        const json& d = defaults[k];
        // seeds accept an integer list in place of null
        if (k == "seeds" && (v.is_array() || v.is_null())) {
            out[k] = v;
            continue;
        }
        if (!compatible(d, v)) {
            errs.push_back(where + "." + k + " has the wrong type");
            continue;
        }
        out[k] = d.is_object() ? merge_params(d, v, where + "." + k, errs) : v;
    }
    return out;
}

template <class F>
void check(std::vector<std::string>& errs, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        errs.push_back(e.what());
    } catch (const json::exception& e) {
        errs.push_back(std::string("malformed value: ") + e.what());
    } catch (const Error& e) {
        errs.push_back(e.what());
    }
}

void validate_params(const std::string& kind, const json& p, std::vector<std::string>& errs) {
    const auto positive = [&](const char* key) {
        if (p.contains(key) && p[key].is_number() && !(p[key].get<double>() > 0.0))
            errs.push_back(kind + "." + std::string(key) + " must be positive");
    };
    if (kind == "simulate") {
        const auto init = p["initial"].get<std::string>();
        if (init != "front" && init != "constant" && init != "bump" && init != "random")
            errs.push_back("simulate.initial must be front, constant, bump or random");
        positive("t1");
        positive("width");
        if (p["record_stride"].get<double>() < 0.0) errs.push_back("simulate.record_stride must be >= 0");
    } else if (kind == "speed") {
        if (!(p["mu_hi"].get<double>() > p["mu_lo"].get<double>()) || !(p["mu_lo"].get<double>() > 0.0))
            errs.push_back("speed: need 0 < mu_lo < mu_hi");
        if (p["points"].get<double>() < 3) errs.push_back("speed.points must be at least 3");
        if (p["cells_per_period"].get<double>() < 64) errs.push_back("speed.cells_per_period must be at least 64");
    } else if (kind == "wave" || kind == "stability") {
        const json& w = kind == "wave" ? p : p["wave"];
        check(errs, [&] { WaveRecipe::from_json(w); });
        if (kind == "wave") positive("tau");
        if (kind == "stability") {
            for (const char* key : {"kinds", "flagged_kinds"})
                for (const auto& k : p[key]) check(errs, [&] { perturbation_kind_from_string(k.get<std::string>()); });
            for (const auto& a : p["amplitudes"])
                if (!a.is_number() || a.get<double>() < 0.0 || a.get<double>() >= 1.0)
                    errs.push_back("stability.amplitudes must lie in [0, 1)");
            if (p["seeds"].is_array())
                for (const auto& s : p["seeds"])
                    if (!s.is_number_integer() || s.get<std::int64_t>() < 0) errs.push_back("stability.seeds must be nonnegative integers");
            positive("horizon");
            positive("eps_target");
            positive("sample_dt");
            positive("tau");
        }
    } else if (kind == "verify") {
        for (const auto& c : p["checks"]) {
            const auto s = c.is_string() ? c.get<std::string>() : std::string();
            if (s != "H0" && s != "class" && s != "comparison" && s != "partmetric")
                errs.push_back("verify.checks entries must be H0, class, comparison or partmetric");
        }
        for (const auto& c : p["operators"])
            if (!c.is_string() || (c != "random" && c != "nonlocal"))
                errs.push_back("verify.operators entries must be random or nonlocal");
        if (p["pairs"].get<double>() < 1) errs.push_back("verify.pairs must be at least 1");
        if (!p["class"].is_null() && (!p["class"].is_string() || (p["class"] != "H1" && p["class"] != "H2" &&
                                                                    p["class"] != "H3")))
            errs.push_back("verify.class must be H1, H2, H3 or null");
    }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    std::vector<std::string> errs;
    RunConfig c;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const auto& kinds = experiment_kinds();
    if (!j.contains("kind") || !j["kind"].is_string()) {
        errs.push_back("kind is required (one of simulate, entire, speed, wave, stability, verify)");
    } else {
        c.kind = j["kind"].get<std::string>();
        if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
            errs.push_back("unknown kind '" + c.kind + "'");
    }
    for (const auto& [k, v] : j.items())
        if (k != "kind" && k != "model" && k != "operator" && k != "grid" && k != "params" && k != "seed" &&
            k != "out" && k != "threads")
            errs.push_back("unknown top-level field '" + k + "'");
    if (j.contains("model")) check(errs, [&] {
        c.model = MediaSpec::from_json(j["model"]);
        make_media(c.model);
    });
    if (j.contains("operator")) check(errs, [&] {
        c.op = OperatorSpec::from_json(j["operator"]);
        c.op.make();
    });
    if (j.contains("grid")) check(errs, [&] { c.grid = GridSpec::from_json(j["grid"]); });
    if (j.contains("seed")) {
        if (j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0) c.seed = j["seed"].get<std::uint64_t>();
        else errs.push_back("seed must be a nonnegative integer");
    }
    if (j.contains("out")) {
        if (j["out"].is_string()) c.out = j["out"].get<std::string>();
        else errs.push_back("out must be a string");
    }
    if (j.contains("threads")) {
        if (j["threads"].is_number_integer() && j["threads"].get<int>() >= 1) c.threads = j["threads"].get<int>();
        else errs.push_back("threads must be a positive integer");
    }
    if (std::find(kinds.begin(), kinds.end(), c.kind) != kinds.end()) {
        const auto before = errs.size();
        c.params = merge_params(default_params(c.kind), j.value("params", json::object()), "params", errs);
        if (errs.size() == before) validate_params(c.kind, c.params, errs);
    }
    if (!errs.empty()) {
        std::ostringstream s;
        s << errs.size() << " configuration error(s):";
        for (const auto& e : errs) s << "\n  - " << e;
        throw ConfigError(s.str());
    }
    return c;
}

json RunConfig::to_json() const {
    return {{"kind", kind},   {"model", model.to_json()}, {"operator", op.to_json()}, {"grid", grid.to_json()},
            {"params", params}, {"seed", seed},           {"out", out},               {"threads", threads}};
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- suites

namespace {

template <class F>
void parallel_for(int n, int threads, F&& f) {
    const int T = std::max(1, std::min(threads, n));
    if (T == 1) {
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int i = t; i < n; i += T) f(i);
            } catch (...) {
                errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::mt19937_64 task_rng(std::uint64_t seed, int task) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(task)};
    return std::mt19937_64(seq);
}

Grid suite_grid(const ReactionModel& m) {
    if (m.space_independent) return Grid::ring(8.0, 40);
    if (m.p_period) {
        const double p = *m.p_period;
        const double L = p * std::max(1.0, std::ceil(8.0 / p));
        return Grid::ring(L, static_cast<int>(std::lround(L / 0.2)));
    }
    return Grid::window(-4.0, 0.2, 40);
}

Field random_field(const Grid& g, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    Field f = Field::constant(g, 1.0);
    for (auto& v : f.values) v = d(rng);
    return f;
}

int suite_threads = 1;

}  // namespace

ComparisonSuite comparison_suite(const DispersalOperator& op, const ReactionModel& m, int pairs, std::uint64_t seed,
                                 double horizon) {
    if (pairs < 1) throw ConfigError("comparison suite needs at least one pair");
    ComparisonSuite s;
    s.pairs = pairs;
    const Grid g = suite_grid(m);
    struct Tally {
        int order = 0, pos = 0, bound = 0;
        long steps = 0;
    };
    std::vector<Tally> tallies(static_cast<std::size_t>(pairs));
    parallel_for(pairs, suite_threads, [&](int i) {
        auto rng = task_rng(seed, i);
        std::uniform_real_distribution<double> gap(0.0, 0.5);
        Field a = random_field(g, rng, 0.05, 1.5);
        Field b = a;
        for (auto& v : b.values) v += gap(rng);
        const double bound = apriori_bound(m, b);
        const double L = lipschitz_budget(m, g, 0.0, horizon, bound);
        const double dt_max = max_stable_dt(op, g.dx, L, 0.5);
        const long steps = static_cast<long>(std::ceil(horizon / dt_max));
        const double dt = horizon / static_cast<double>(steps);
        Stepper sa(op, m, g), sb(op, m, g);
        Tally& t = tallies[static_cast<std::size_t>(i)];
        for (long k = 0; k < steps; ++k) {
            sa.advance(a, dt);
            sb.advance(b, dt);
            ++t.steps;
            for (std::size_t c = 0; c < a.values.size(); ++c) {
                if (a.values[c] > b.values[c]) {
                    ++t.order;
                    break;
                }
            }
            if (!(a.min() > 0.0) || !(b.min() > 0.0)) ++t.pos;
            if (b.max() > bound * (1.0 + 1e-12)) ++t.bound;
        }
    });
    for (const auto& t : tallies) {
        s.ordering_violations += t.order;
        s.positivity_violations += t.pos;
        s.bound_violations += t.bound;
        s.steps_checked += t.steps;
    }
    s.pass = s.ordering_violations == 0 && s.positivity_violations == 0 && s.bound_violations == 0;
    return s;
}

json ComparisonSuite::to_json() const {
    return {{"pairs", pairs},
            {"ordering_violations", ordering_violations},
            {"positivity_violations", positivity_violations},
            {"bound_violations", bound_violations},
            {"steps_checked", steps_checked},
            {"pass", pass}};
}

PartMetricSuite partmetric_suite(const DispersalOperator& op, const ReactionModel& m, int pairs, std::uint64_t seed,
                                 double sigma, double tau, double horizon) {
    if (pairs < 1) throw ConfigError("part-metric suite needs at least one pair");
    PartMetricSuite s;
    s.pairs = pairs;
    const Grid g = suite_grid(m);
    std::vector<PartMetricTrace> traces(static_cast<std::size_t>(pairs));
    parallel_for(pairs, suite_threads, [&](int i) {
        auto rng = task_rng(seed, i);
        const Field u = random_field(g, rng, 0.1, 2.0), v = random_field(g, rng, 0.1, 2.0);
        traces[static_cast<std::size_t>(i)] = metric_trace(op, m, u, v, 0.0, horizon, 0.25);
    });
    s.worst_increase = -std::numeric_limits<double>::infinity();
    for (const auto& tr : traces) {
        const double inc = tr.max_increase();
        s.worst_increase = std::max(s.worst_increase, inc);
        if (!tr.monotone(1e-10)) ++s.monotone_failures;
        const auto est = decrement_estimate(tr, sigma, tau);
        s.decrement_windows += est.segments;
        if (est.segments > 0) {
            if (!(*est.delta > 0.0)) ++s.decrement_failures;
            s.min_delta = s.min_delta ? std::min(*s.min_delta, *est.delta) : *est.delta;
        }
    }
    s.pass = s.monotone_failures == 0 && s.decrement_failures == 0;
    return s;
}

json PartMetricSuite::to_json() const {
    json j = {{"pairs", pairs},
              {"monotone_failures", monotone_failures},
              {"worst_increase", worst_increase},
              {"decrement_windows", decrement_windows},
              {"decrement_failures", decrement_failures},
              {"pass", pass}};
    j["min_delta"] = min_delta ? json(*min_delta) : json(nullptr);
    return j;
}

// ---------------------------------------------------------------- persistence

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

class Artifacts {
public:
    Artifacts(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

    // rows are already comma-joined
    void csv(const std::string& name, const std::string& columns, const std::vector<std::string>& rows) {
        std::string s = "# run " + hash_ + "\n" + columns + "\n";
        for (const auto& r : rows) s += r + "\n";
        put(name, s);
    }
    void json_file(const std::string& name, json j) {
        j["run_hash"] = hash_;
        put(name, j.dump(2) + "\n");
    }
    const json& index() const { return index_; }

private:
    void put(const std::string& name, const std::string& content) {
        write_atomic(dir_ / name, content);
        index_[name] = fnv1a_hex(content);
    }
    fs::path dir_;
    std::string hash_;
    json index_ = json::object();
};

std::string row(std::initializer_list<double> v) {
    std::string s;
    for (double x : v) {
        if (!s.empty()) s += ",";
        s += num(x);
    }
    return s;
}

std::optional<double> opt_num(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

struct Outcome {
    json verdicts = json::object();
    json summary = json::object();
    bool pass = false;
};

Field initial_field(const RunConfig& c, const Grid& g) {
    const auto& p = c.params;
    const std::string init = p["initial"];
    const double a = p["amplitude"], w = p["width"];
    if (init == "constant") return Field::constant(g, a);
    if (init == "front") return Field::sample(g, [&](double x) { return a / (1.0 + std::exp(x / w)); });
    if (init == "bump") return Field::sample(g, [&](double x) { return a * std::max(0.0, 1.0 - (x / w) * (x / w)); });
    auto rng = task_rng(c.seed, 0);
    return random_field(g, rng, 0.1 * a, a);
}

Outcome run_simulate(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    const int cells = static_cast<int>(std::lround((c.grid.x_hi - c.grid.x_lo) / c.grid.dx));
    const Grid g = p["periodic"].get<bool>() ? Grid::ring(c.grid.x_hi - c.grid.x_lo, cells)
                                             : Grid::window(c.grid.x_lo, c.grid.dx, cells);
    IVPOptions o;
    o.dt = c.grid.dt;
    o.cfl_safety = c.grid.cfl_safety;
    o.record_stride = p["record_stride"];
    o.track_front = p["track_front"];
    const Field u0 = initial_field(c, g);
    Outcome out;
    Trajectory tr;
    std::string failure;
    try {
        tr = solve_ivp(op, m, 0.0, u0, p["t1"].get<double>(), o);
    } catch (const InvariantError& e) {
        failure = e.what();
    }
    std::vector<std::string> rows, front;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& s : tr.snapshots) {
        for (int i = 0; i < s.grid.n; ++i) rows.push_back(row({s.t, s.grid.x(i), s.values[static_cast<std::size_t>(i)]}));
        lo = std::min(lo, s.min());
        hi = std::max(hi, s.max());
        if (o.track_front)
            if (const auto X = interface_location(s, s.values.front(), o.front_level)) front.push_back(row({s.t, *X}));
    }
    art.csv("trajectory.csv", "t,x,u", rows);
    if (o.track_front) art.csv("front.csv", "t,X", front);
    const bool positive = failure.empty() && lo >= 0.0;
    const bool bounded = failure.empty() && hi <= apriori_bound(m, u0) * (1.0 + 1e-12);
    out.verdicts = {{"nonnegative", positive}, {"a_priori_bound", bounded}};
    if (!failure.empty()) out.verdicts["invariant_error"] = failure;
    out.summary = {{"snapshots", tr.snapshots.size()}, {"min", lo}, {"max", hi}};
    out.pass = positive && bounded;
    return out;
}

Outcome run_entire(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    EntireOptions o;
    o.delta = opt_num(p, "delta");
    o.M = opt_num(p, "M");
    o.T_iter = opt_num(p, "T_iter");
    o.n_max = p["n_max"];
    o.tol = p["tol"];
    o.t_a = p["t_a"];
    o.t_b = opt_num(p, "t_b");
    o.snap_dt = opt_num(p, "snap_dt");
    o.edge_check = p["edge_check"];
    o.grid.dx = c.grid.dx;
    o.grid.x_lo = c.grid.x_lo;
    o.grid.x_hi = c.grid.x_hi;
    o.grid.dt = c.grid.dt;
    o.grid.cfl_safety = c.grid.cfl_safety;
    const auto U = build_entire(op, m, o);

    std::vector<std::string> rows, gaps;
    for (const auto& s : U.snapshots)
        for (int i = 0; i < s.grid.n; ++i) rows.push_back(row({s.t, s.grid.x(i), s.values[static_cast<std::size_t>(i)]}));
    for (std::size_t n = 0; n < U.gap_history.size(); ++n) gaps.push_back(row({static_cast<double>(n), U.gap_history[n]}));
    art.csv("u_plus.csv", "t,x,u", rows);
    art.csv("gaps.csv", "iteration,gap", gaps);

    std::vector<EntirePerturbation> family;
    for (const auto& s : p["verify_scales"]) family.push_back(EntirePerturbation::scaled(s.get<double>()));
    Outcome out;
    json verification = nullptr;
    bool attract = true;
    if (!family.empty()) {
        const auto rep = verify_entire(op, m, U, family, {U.t_a}, p["verify_horizon"].get<double>());
        verification = rep.to_json();
        attract = rep.pass;
    }
    out.verdicts = {{"converged", U.converged},
                    {"sandwich_monotone", U.sandwich_monotone},
                    {"attracts_scaled_copies", attract}};
    out.summary = {{"iterations", U.iterations}, {"delta", U.delta},           {"M", U.M},
                   {"T_iter", U.T_iter},         {"inf", U.inf},               {"sup", U.sup},
                   {"max_gap_ratio", U.max_gap_ratio}, {"edge_sensitivity", U.edge_sensitivity},
                   {"final_gap", U.gap_history.empty() ? 0.0 : U.gap_history.back()}};
    art.json_file("entire.json", {{"summary", out.summary}, {"verification", verification}});
    out.pass = U.converged && U.sandwich_monotone && attract;
    return out;
}

Outcome run_speed(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    EigenOptions eo;
    eo.cells_per_period = p["cells_per_period"];
    const auto curve =
        speed_curve(op, m, p["mu_lo"].get<double>(), p["mu_hi"].get<double>(), p["points"].get<int>(), eo);
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < curve.mu_grid.size(); ++i)
        rows.push_back(row({curve.mu_grid[i], curve.lambda_values[i], curve.c_values[i]}));
    art.csv("speed_curve.csv", "mu,lambda,c", rows);
    Outcome out;
    out.summary = {{"mu_star", curve.mu_star}, {"c_star", curve.c_star}, {"lambda_star", curve.lambda_star}};
    out.verdicts = {{"interior_minimum", std::isfinite(curve.c_star) && curve.c_star > 0.0}};
    out.pass = out.verdicts["interior_minimum"];
    return out;
}

void wave_artifacts(const WaveBundle& b, int stride, Artifacts& art) {
    const auto& w = b.wave;
    std::vector<std::string> xs, prof;
    for (std::size_t k = 0; k < w.t.size(); ++k) {
        xs.push_back(row({w.t[k], w.X[k]}));
        if (static_cast<int>(k) % std::max(1, stride) != 0) continue;
        const auto& s = w.snapshots[k];
        const Field ref = w.reference(s.grid, s.t);
        for (int i = 0; i < s.grid.n; ++i) {
            const auto j = static_cast<std::size_t>(i);
            prof.push_back(row({s.t, s.grid.x(i), s.values[j], s.values[j] / ref.values[j]}));
        }
    }
    art.csv("interface.csv", "t,X", xs);
    art.csv("wave_profile.csv", "t,x,u,u_over_uplus", prof);
}

Outcome run_wave(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    const auto r = WaveRecipe::from_json(p);
    const auto b = build_wave(op, m, r);
    wave_artifacts(b, p["snapshot_stride"].get<int>(), art);
    const auto d = wave_diagnostics(b.wave, p["eps1"].get<double>(), p["eps2"].get<double>(), p["tau"].get<double>());
    Outcome out;
    out.verdicts = {{"pair_residuals", b.pair->residual.pass},
                    {"sandwich", b.wave.sandwich_ok},
                    {"start_time_independent", b.wave.converged}};
    out.summary = {{"family", to_string(b.wave.family)},
                   {"predicted_speed", b.pair->speed},
                   {"mean_speed", d.mean_speed},
                   {"least_mean_speed", d.least_mean_speed},
                   {"max_width", d.max_width},
                   {"max_jump", d.max_jump},
                   {"T_big", b.wave.T_big},
                   {"dt", b.wave.dt}};
    art.json_file("wave.json", {{"wave", b.wave.to_json()},
                                {"diagnostics", d.to_json()},
                                {"pair_residual", b.pair->residual.to_json()},
                                {"entire", {{"inf", b.entire->inf}, {"sup", b.entire->sup}}}});
    out.pass = b.pair->residual.pass && b.wave.sandwich_ok && b.wave.converged;
    return out;
}

Outcome run_stability(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    const auto b = build_wave(op, m, WaveRecipe::from_json(p["wave"]));
    wave_artifacts(b, 10, art);
    StabilityOptions so;
    so.horizon = p["horizon"];
    so.eps_target = p["eps_target"];
    so.sample_dt = p["sample_dt"];
    so.eps0 = p["eps0"];
    so.x_off = p["x_off"];
    std::vector<std::uint64_t> seeds;
    if (p["seeds"].is_array())
        for (const auto& s : p["seeds"]) seeds.push_back(s.get<std::uint64_t>());
    else
        seeds = {c.seed, c.seed + 1, c.seed + 2};

    std::vector<PerturbationSpec> specs;
    for (const char* key : {"kinds", "flagged_kinds"})
        for (const auto& k : p[key])
            for (const auto& a : p["amplitudes"])
                for (auto s : seeds) {
                    PerturbationSpec ps;
                    ps.kind = perturbation_kind_from_string(k.get<std::string>());
                    ps.amplitude = a.get<double>();
                    ps.seed = s;
                    specs.push_back(ps);
                }
    const double t0 = p["t0"];
    std::vector<StabilityReport> reports(specs.size());
    parallel_for(static_cast<int>(specs.size()), c.threads, [&](int i) {
        const auto& ps = specs[static_cast<std::size_t>(i)];
        reports[static_cast<std::size_t>(i)] =
            stability_experiment(op, m, b.wave, make_perturbation(b.wave, t0, ps), so);
    });

    std::vector<std::string> rows;
    json runs = json::array();
    int asserted = 0, passed = 0, flagged = 0, decrement_runs = 0, decrement_fail = 0;
    std::optional<double> min_delta;
    double worst_R = 0.0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        for (std::size_t k = 0; k < r.t.size(); ++k) {
            const auto& rs = r.rho.samples[k];
            rows.push_back(std::to_string(i) + "," + r.perturbation + "," + num(specs[i].amplitude) + "," +
                           std::to_string(specs[i].seed) + "," +
                           row({r.t[k], r.R[k], r.R_front[k], rs.defined ? rs.rho : std::nan(""), r.X[k]}));
        }
        const auto dec = decrement_verification(r, p["decrement_eps0"].get<double>(), p["tau"].get<double>());
        json jr = r.to_json();
        jr["decrement"] = dec.to_json();
        runs.push_back(jr);
        if (!r.admissible) {
            ++flagged;
            continue;
        }
        ++asserted;
        if (r.pass) ++passed;
        worst_R = std::max(worst_R, r.R.back());
        if (dec.applicable) {
            ++decrement_runs;
            if (!dec.pass) ++decrement_fail;
            min_delta = min_delta ? std::min(*min_delta, *dec.delta) : *dec.delta;
        }
    }
    art.csv("stability_traces.csv", "run,kind,amplitude,seed,t,R,R_front,rho,X", rows);
    art.json_file("stability.json", {{"runs", runs}});
    Outcome out;
    out.verdicts = {{"admissible_runs_pass", asserted > 0 && passed == asserted},
                    {"decrement_positive", decrement_fail == 0}};
    out.summary = {{"family", to_string(b.wave.family)},
                   {"asserted", asserted},
                   {"passed", passed},
                   {"flagged", flagged},
                   {"worst_final_R", worst_R},
                   {"decrement_runs", decrement_runs}};
    out.summary["min_delta"] = min_delta ? json(*min_delta) : json(nullptr);
    out.pass = asserted > 0 && passed == asserted && decrement_fail == 0;
    return out;
}

Outcome run_verify(const RunConfig& c, const DispersalOperator& op, const ReactionModel& m, Artifacts& art) {
    const auto& p = c.params;
    Outcome out;
    out.pass = true;
    json detail = json::object();
    const auto has = [&](const char* name) {
        for (const auto& x : p["checks"])
            if (x == name) return true;
        return false;
    };
    if (has("H0")) {
        H0Options ho;
        ho.seed = static_cast<unsigned>(c.seed);
        const auto rep = verify_H0(m, SampleBox{}, ho);
        detail["H0"] = rep.to_json();
        out.verdicts["H0"] = rep.pass();
        out.pass = out.pass && rep.pass();
    }
    if (has("class")) {
        std::optional<HypothesisClass> cls = m.declared_class;
        if (p["class"].is_string()) {
            const std::string s = p["class"];
            cls = s == "H1" ? HypothesisClass::H1 : s == "H2" ? HypothesisClass::H2 : HypothesisClass::H3;
        }
        if (cls) {
            const auto rep = verify_class(m, *cls, 2000, static_cast<unsigned>(c.seed));
            detail["class"] = rep.to_json();
            out.verdicts["class"] = rep.pass();
            out.pass = out.pass && rep.pass();
        } else {
            detail["class"] = "no declared class";
        }
    }
    std::vector<std::pair<std::string, DispersalOperator>> ops;
    for (const auto& name : p["operators"]) {
        if (name == "random") ops.emplace_back("random", DispersalOperator::random());
        else ops.emplace_back("nonlocal", op.is_random() ? DispersalOperator::nonlocal(Kernel::uniform(1.0)) : op);
    }
    const int pairs = p["pairs"];
    for (const auto& [name, o] : ops) {
        if (has("comparison")) {
            const auto s = comparison_suite(o, m, pairs, c.seed, p["horizon"].get<double>());
            detail["comparison_" + name] = s.to_json();
            out.verdicts["comparison_" + name] = s.pass;
            out.pass = out.pass && s.pass;
        }
        if (has("partmetric")) {
            const auto s = partmetric_suite(o, m, pairs, c.seed + 1, p["sigma"].get<double>(), p["tau"].get<double>());
            detail["partmetric_" + name] = s.to_json();
            out.verdicts["partmetric_" + name] = s.pass;
            out.pass = out.pass && s.pass;
            if (s.min_delta) out.summary["min_delta_" + name] = *s.min_delta;
        }
    }
    art.json_file("verify.json", detail);
    return out;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

fs::path resolve_out_dir(const RunConfig& cfg) {
    json j = cfg.to_json();
    j.erase("out");
    j.erase("threads");
    fs::path base = cfg.out.empty() ? fs::path("runs") / (cfg.kind + "-" + fnv1a_hex(j.dump()).substr(0, 8))
                                    : fs::path(cfg.out);
    if (base.is_relative())
        if (const char* root = std::getenv("KPPLAB_OUT"); root && *root) base = fs::path(root) / base;
    return base;
}

RunResult run(const RunConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    json resolved = cfg.to_json();
    json hashed = resolved;
    hashed.erase("out");
    hashed.erase("threads");
    const std::string hash = fnv1a_hex(hashed.dump());

    RunResult res;
    res.dir = resolve_out_dir(cfg);
    fs::create_directories(res.dir);
    Artifacts art(res.dir, hash);

    const auto m = make_media(cfg.model);
    const auto op = cfg.op.make();
    suite_threads = cfg.threads;
    Outcome out;
    std::string error;
    try {
        if (cfg.kind == "simulate") out = run_simulate(cfg, op, m, art);
        else if (cfg.kind == "entire") out = run_entire(cfg, op, m, art);
        else if (cfg.kind == "speed") out = run_speed(cfg, op, m, art);
        else if (cfg.kind == "wave") out = run_wave(cfg, op, m, art);
        else if (cfg.kind == "stability") out = run_stability(cfg, op, m, art);
        else if (cfg.kind == "verify") out = run_verify(cfg, op, m, art);
        else throw ConfigError("unknown kind '" + cfg.kind + "'");
    } catch (const ConfigError&) {
        suite_threads = 1;
        throw;
    } catch (const Error& e) {
        error = e.what();
        out.pass = false;
    }
    suite_threads = 1;

    json inputs = {{"config", hash}};
    if (cfg.op.kernel == "table" && !cfg.op.table.empty()) {
        std::ifstream in(cfg.op.table, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        inputs["kernel_table"] = fnv1a_hex(s.str());
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json manifest = {{"run_hash", hash},
                     {"kind", cfg.kind},
                     {"config", resolved},
                     {"versions",
                      {{"kpplab", KPPLAB_VERSION},
                       {"compiler", __VERSION__},
                       {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                             std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                     {"output_dir", res.dir.string()},
                     {"started_utc", utc_now()},
                     {"wall_clock_s", wall},
                     {"input_hashes", inputs},
                     {"artifacts", art.index()},
                     {"verdicts", out.verdicts},
                     {"summary", out.summary},
                     {"pass", out.pass}};
    if (!error.empty()) manifest["error"] = error;
    write_atomic(res.dir / "manifest.json", manifest.dump(2) + "\n");
    res.manifest = manifest;
    res.pass = out.pass;
    return res;
}

// ---------------------------------------------------------------- report

json ReportTable::to_json() const { return {{"rows", rows}, {"missing", missing}, {"all_pass", all_pass}}; }

std::string ReportTable::markdown() const {
    std::ostringstream s;
    s << "| run | kind | pass | summary |\n|---|---|---|---|\n";
    for (const auto& r : rows) {
        std::string summary;
        for (const auto& [k, v] : r["summary"].items()) {
            if (!summary.empty()) summary += ", ";
            summary += k + "=" + (v.is_number_float() ? num(v.get<double>()) : v.dump());
        }
        s << "| " << r["dir"].get<std::string>() << " | " << r["kind"].get<std::string>() << " | "
          << (r["pass"].get<bool>() ? "pass" : "FAIL") << " | " << summary << " |\n";
    }
    for (const auto& m : missing) s << "| " << m << " | - | missing | no manifest |\n";
    return s.str();
}

ReportTable report(const std::vector<fs::path>& run_dirs) {
    ReportTable t;
    for (const auto& d : run_dirs) {
        const fs::path mf = d / "manifest.json";
        std::ifstream in(mf);
        if (!in) {
            t.missing.push_back(d.string());
            continue;
        }
        json m;
        try {
            m = json::parse(in);
        } catch (const json::exception&) {
            t.missing.push_back(d.string());
            continue;
        }
        const bool pass = m.value("pass", false);
        json r = {{"dir", d.string()},
                  {"kind", m.value("kind", std::string("?"))},
                  {"run_hash", m.value("run_hash", std::string())},
                  {"pass", pass},
                  {"verdicts", m.value("verdicts", json::object())},
                  {"summary", m.value("summary", json::object())}};
        if (m.contains("error")) r["error"] = m["error"];
        t.rows.push_back(r);
        t.all_pass = t.all_pass && pass;
    }
    return t;
}

}  // namespace kpplab
