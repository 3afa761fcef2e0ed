#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpplab/entire.hpp"
#include "kpplab/partmetric.hpp"
#include "kpplab/waves.hpp"

namespace kpplab {

/// left_cutoff removes the profile far behind the front; it is constructible but
/// breaks the positive-left-tail hypothesis and is flagged in reports.
enum class PerturbationKind { Scale, Shift, FrontNoise, LeftFloor, LeftCutoff };

std::string to_string(PerturbationKind k);
PerturbationKind perturbation_kind_from_string(const std::string& s);

struct PerturbationSpec {
    PerturbationKind kind = PerturbationKind::Scale;
    double amplitude = 0.1;
    double decay_rate = 0.2;  // eta ~ e^{-decay_rate (x - X(t0))} ahead of the front
    std::uint64_t seed = 0;
    double left_offset = 20.0;  // left_floor / left_cutoff act on x <= X(t0) - left_offset

    static PerturbationSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct Perturbation {
    Field u0;
    PerturbationSpec spec;
    double t0 = 0.0;
    double max_eta = 0.0;
    double right_ratio_defect = 0.0;  // |u0/U - 1| at the right edge
    bool admissible = true;
    std::vector<std::string> flags;
};

/// u0 = U(t0, .) (1 + eta). t0 must be a recorded time of the profile.
/// Throws ConfigError when u0 fails to be positive.
Perturbation make_perturbation(const WaveProfile& profile, double t0, const PerturbationSpec& spec);

struct StabilityOptions {
    double horizon = 50.0;
    double eps_target = 1e-2;
    double sample_dt = 0.5;
    double eps0 = 0.1;         // front-zone monitor threshold
    double x_off = 0.0;        // monitor acts on x >= X(t) + x_off
    double rho_slack = 1e-10;
};

struct StabilityReport {
    std::string perturbation;
    nlohmann::json spec;
    bool admissible = true;
    std::vector<std::string> flags;
    std::vector<double> t;
    std::vector<double> R;        // sup |u/U - 1| on the tracked window
    std::vector<double> R_front;  // same restricted to x >= X(t) + x_off
    std::vector<double> X;
    PartMetricTrace rho;
    double reevolution_error = 0.0;  // against stored snapshots, relative
    long reevolution_checked = 0;
    std::optional<double> time_to_target;
    bool rho_monotone = false;
    bool front_zone_ok = true;
    bool pass = false;
    std::string diagnosis;

    nlohmann::json to_json() const;
};

StabilityReport stability_experiment(const DispersalOperator& op, const ReactionModel& m, const WaveProfile& profile,
                                     const Perturbation& u0, const StabilityOptions& opts = {});

struct DecrementCheck {
    bool applicable = false;
    std::optional<double> delta;
    int windows = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// delta = min rho drop over tau-windows starting with rho >= eps0.
DecrementCheck decrement_verification(const StabilityReport& report, double eps0, double tau);

struct StabilitySweep {
    std::vector<StabilityReport> reports;
    int asserted = 0, passed = 0, flagged = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Every kind x amplitude x seed from t0. Inadmissible runs are reported, not asserted.
StabilitySweep stability_sweep(const DispersalOperator& op, const ReactionModel& m, const WaveProfile& profile,
                               const std::vector<PerturbationKind>& kinds, const std::vector<double>& amplitudes,
                               const std::vector<std::uint64_t>& seeds, double t0 = 0.0,
                               const StabilityOptions& opts = {});

struct BasinReport {
    EntireReport runs;
    std::optional<double> min_time, max_time;
    std::optional<double> spread;  // (max - min) / max of the time to tolerance
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Attraction of u+ from scaled copies, started at every t0.
BasinReport entire_basin_experiment(const DispersalOperator& op, const ReactionModel& m, const EntireSolution& U,
                                    const std::vector<double>& scales, const std::vector<double>& t0_samples,
                                    double horizon = 20.0, double tol = 1e-3);

}  // namespace kpplab
