#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kpplab/errors.hpp"
#include "kpplab/harness.hpp"

using namespace kpplab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("kpplab_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

}  // namespace

TEST_CASE("config validation lists every problem") {
    const json bad = {{"kind", "speed"},
                      {"grid", {{"dx", -1.0}}},
                      {"params", {{"mu_lo", "x"}, {"bogus", 1}}},
                      {"threads", 0},
                      {"extra", true}};
    try {
        RunConfig::from_json(bad);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("grid.dx") != std::string::npos);
        CHECK(msg.find("mu_lo") != std::string::npos);
        CHECK(msg.find("bogus") != std::string::npos);
        CHECK(msg.find("threads") != std::string::npos);
        CHECK(msg.find("extra") != std::string::npos);
    }
    CHECK_THROWS_AS(RunConfig::from_json(json{{"kind", "nope"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"kind", "wave"}, {"params", {{"family", "xyz"}}}}), ConfigError);

    // defaults are materialized and survive a round trip
    const auto c = RunConfig::from_json(json{{"kind", "speed"}});
    CHECK(c.params["points"] == 40);
    CHECK(RunConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("fnv1a reference values") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("speed run in a flat medium and the report table") {
    const auto root = scratch("speed");
    auto c = RunConfig::from_json(json{{"kind", "speed"}, {"params", {{"points", 25}}}, {"out", root.string()}});
    const auto r = run(c);
    CHECK(r.pass);
    // c(mu) = (mu^2 + 1)/mu has its minimum 2 at mu = 1
    CHECK(r.manifest["summary"]["c_star"].get<double>() == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(r.manifest["summary"]["mu_star"].get<double>() == doctest::Approx(1.0).epsilon(2e-2));
    const std::string csv = slurp(root / "speed_curve.csv");
    CHECK(csv.rfind("# run " + r.manifest["run_hash"].get<std::string>(), 0) == 0);
    CHECK(r.manifest["artifacts"]["speed_curve.csv"] == fnv1a_hex(csv));

    // c* = 2 sqrt(a) for f = a(1 - u)
    const auto root4 = scratch("speed4");
    const auto r4 = run(RunConfig::from_json(
        json{{"kind", "speed"}, {"model", {{"a0", 4.0}}}, {"params", {{"points", 25}}}, {"out", root4.string()}}));
    const auto both = report({root, root4});
    REQUIRE(both.rows.size() == 2);
    CHECK(both.rows[0]["summary"]["c_star"].get<double>() == doctest::Approx(2.0).epsilon(1e-3));
    CHECK(both.rows[1]["summary"]["c_star"].get<double>() == doctest::Approx(4.0).epsilon(1e-3));

    CHECK(report({}).rows.empty());
    CHECK(report({}).all_pass);
    const auto t = report({root, scratch("missing")});
    CHECK(t.rows.size() == 1);
    CHECK(t.missing.size() == 1);
    CHECK(t.all_pass);
    CHECK(t.markdown().find("missing") != std::string::npos);
}

TEST_CASE("runs are reproducible across thread counts") {
    const json base = {{"kind", "verify"},
                       {"seed", 7},
                       {"params", {{"checks", {"comparison", "partmetric"}}, {"pairs", 6}, {"horizon", 1.0}}}};
    json a = base, b = base;
    a["out"] = scratch("det_a").string();
    b["out"] = scratch("det_b").string();
    b["threads"] = 3;
    const auto ra = run(RunConfig::from_json(a));
    const auto rb = run(RunConfig::from_json(b));
    CHECK(ra.pass);
    CHECK(ra.manifest["run_hash"] == rb.manifest["run_hash"]);
    CHECK(ra.manifest["artifacts"] == rb.manifest["artifacts"]);
    CHECK(slurp(ra.dir / "verify.json") == slurp(rb.dir / "verify.json"));

    // the resolved config stored in a manifest reproduces the run
    json again = ra.manifest["config"];
    again["out"] = scratch("det_c").string();
    const auto rc = run(RunConfig::from_json(again));
    CHECK(rc.manifest["artifacts"] == ra.manifest["artifacts"]);

    const auto t = report({ra.dir, rb.dir});
    CHECK(t.rows.size() == 2);
    CHECK(t.all_pass);
}

TEST_CASE("entire run in a flat medium returns the constant state") {
    const auto root = scratch("entire");
    const auto r = run(RunConfig::from_json(json{{"kind", "entire"},
                                                 {"grid", {{"dx", 0.25}, {"x_lo", -10.0}, {"x_hi", 10.0}}},
                                                 {"params", {{"verify_horizon", 10.0}}},
                                                 {"out", root.string()}}));
    CHECK(r.pass);
    CHECK(r.manifest["summary"]["inf"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.manifest["summary"]["sup"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fs::exists(root / "u_plus.csv"));
}

TEST_CASE("property suites hold for the logistic medium") {
    const auto m = make_media(MediaSpec{});
    for (const auto& op : {DispersalOperator::random(), DispersalOperator::nonlocal(Kernel::uniform(1.0))}) {
        const auto cs = comparison_suite(op, m, 5, 11, 1.0);
        CHECK(cs.pass);
        CHECK(cs.steps_checked > 0);
        const auto ps = partmetric_suite(op, m, 5, 12);
        CHECK(ps.pass);
        CHECK(ps.worst_increase <= 1e-10);
    }
    CHECK_THROWS_AS(comparison_suite(DispersalOperator::random(), m, 0, 1), ConfigError);
}
