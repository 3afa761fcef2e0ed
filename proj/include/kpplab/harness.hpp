#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpplab/discretization.hpp"
#include "kpplab/media.hpp"

namespace kpplab {

/// "operator" block of a run config.
struct OperatorSpec {
    std::string kind = "random";     // random | nonlocal
    std::string kernel = "uniform";  // uniform | cosine_bump | table
    double r0 = 1.0;
    std::string table;  // CSV path for kernel == "table"

    static OperatorSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
    DispersalOperator make() const;
};

/// "grid" block: used by simulate and entire.
struct GridSpec {
    double dx = 0.1;
    double x_lo = -20.0, x_hi = 20.0;
    std::optional<double> dt;
    double cfl_safety = 0.5;

    static GridSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RunConfig {
    std::string kind;  // simulate | entire | speed | wave | stability | verify
    MediaSpec model;
    OperatorSpec op;
    GridSpec grid;
    nlohmann::json params = nlohmann::json::object();  // kind-specific, defaults filled in
    std::uint64_t seed = 0;
    std::string out;
    int threads = 1;

    /// Collects every violation before throwing one ConfigError listing all of them.
    static RunConfig from_json(const nlohmann::json& j);
    /// Resolved document with all defaults materialized.
    nlohmann::json to_json() const;
};

/// Kinds accepted by RunConfig.
const std::vector<std::string>& experiment_kinds();

/// FNV-1a 64-bit hash, hex encoded.
std::string fnv1a_hex(const std::string& bytes);

struct RunResult {
    std::filesystem::path dir;
    nlohmann::json manifest;
    bool pass = false;
};

/// Output directory for a config: KPPLAB_OUT (if set) is the root for relative paths.
std::filesystem::path resolve_out_dir(const RunConfig& cfg);

/// Runs the experiment, writes CSV/JSON artifacts and manifest.json (atomically).
RunResult run(const RunConfig& cfg);

struct ReportTable {
    nlohmann::json rows = nlohmann::json::array();
    std::vector<std::string> missing;
    bool all_pass = true;
    nlohmann::json to_json() const;
    std::string markdown() const;
};

ReportTable report(const std::vector<std::filesystem::path>& run_dirs);

// Property suites shared by the verify experiment and the acceptance checks.

struct ComparisonSuite {
    int pairs = 0;
    int ordering_violations = 0;
    int positivity_violations = 0;
    int bound_violations = 0;
    long steps_checked = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Random strictly positive ordered pairs, stepped in lockstep; every step is checked.
ComparisonSuite comparison_suite(const DispersalOperator& op, const ReactionModel& m, int pairs, std::uint64_t seed,
                                 double horizon = 2.0);

struct PartMetricSuite {
    int pairs = 0;
    int monotone_failures = 0;
    double worst_increase = 0.0;
    int decrement_windows = 0;
    int decrement_failures = 0;
    std::optional<double> min_delta;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Random pairs with 0.1 <= u <= 2; rho must not increase (slack 1e-10) and every
/// tau-window starting with rho >= sigma must show a positive drop.
PartMetricSuite partmetric_suite(const DispersalOperator& op, const ReactionModel& m, int pairs, std::uint64_t seed,
                                 double sigma = 0.2, double tau = 1.0, double horizon = 4.0);

}  // namespace kpplab
