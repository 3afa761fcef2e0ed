#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kpplab/discretization.hpp"
#include "kpplab/media.hpp"

namespace kpplab {

/// Spatial grid and time step shared by the entire-solution computations.
struct EntireGridOptions {
    double dx = 0.1;                // random dispersal; nonlocal defaults to r0 / 8 when dx <= 0
    double x_lo = -20.0;            // window for media that are not periodic in x
    double x_hi = 20.0;
    std::optional<double> dt;       // empty: monotone bound with cfl_safety
    double cfl_safety = 0.5;
};

/// Ring of one x-period, a 3-cell ring for space-free media, or the window otherwise.
Grid entire_grid(const DispersalOperator& op, const ReactionModel& m, const EntireGridOptions& g);

struct FloorCalibration {
    double delta = 0.0;
    double T = 0.0;
    int attempts = 0;
};

struct CalibrationOptions {
    int max_halvings = 20;
    double max_T = 16.0;
    int t0_samples = 4;
    EntireGridOptions grid;
};

/// First (delta, T) with delta = P0 2^-k, T = 1, 2, 4, ... such that the constant delta
/// grows strictly above itself after time T from every sampled start time.
/// Throws ConstructionError when nothing works.
FloorCalibration calibrate_floor(const DispersalOperator& op, const ReactionModel& m,
                                 const CalibrationOptions& opts = {});

struct EntireOptions {
    std::optional<double> delta;   // empty: calibrate
    std::optional<double> M;       // empty: P0
    std::optional<double> T_iter;  // empty: calibrated T, rounded up to whole time periods
    int n_max = 60;
    double tol = 1e-10;            // part-metric gap declaring convergence
    double t_a = 0.0;
    std::optional<double> t_b;     // empty: t_a + 3 periods (or t_a + 1 for autonomous media)
    std::optional<double> snap_dt; // empty: 1/64 of a period, or 0.05
    bool edge_check = true;        // rerun on a wider window when the grid is not a ring
    EntireGridOptions grid;
};

struct EntireSolution {
    Grid grid;
    double t_a = 0.0, t_b = 0.0;
    double snap_dt = 0.0;
    int steps_per_snap = 1;
    std::vector<Field> snapshots;  // t_a + k snap_dt
    std::vector<double> gap_history;
    double delta = 0.0, M = 0.0, T_iter = 0.0;
    int iterations = 0;
    bool converged = false;
    bool sandwich_monotone = true;
    double max_gap_ratio = 0.0;     // max gap_{n+1}/gap_n while gap_n >= tol
    double edge_sensitivity = 0.0;  // window media only
    double inf = 0.0, sup = 0.0;
    std::optional<double> T_period;  // time period of the medium, if any
    bool time_independent = false;

    /// u+(t, .) on its own grid; periodic media wrap t, autonomous media ignore it.
    Field at(double t) const;
    /// u+(t, x) with linear interpolation; x wraps on rings and clamps on windows.
    double value(double t, double x) const;
    /// Samples u+(t, .) on another grid.
    Field on_grid(const Grid& g, double t) const;
    double dt() const { return snap_dt / steps_per_snap; }
};

EntireSolution build_entire(const DispersalOperator& op, const ReactionModel& m, const EntireOptions& opts = {});

struct EntirePerturbation {
    std::string name;
    std::function<Field(const Field& uplus_t0)> make;

    static EntirePerturbation scaled(double factor);
};

struct EntireTrace {
    std::string perturbation;
    double t0 = 0.0;
    std::vector<double> t;
    std::vector<double> error;  // |u - u+|_inf
    std::optional<double> time_to_tol;
};

struct EntireReport {
    std::vector<EntireTrace> traces;
    double tol = 0.0;
    double horizon = 0.0;
    double max_time_to_tol = 0.0;  // uniformity proxy over the sampled t0
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Throws ConfigError when some u0 is not bounded away from zero.
EntireReport verify_entire(const DispersalOperator& op, const ReactionModel& m, const EntireSolution& U,
                           const std::vector<EntirePerturbation>& perturbations, const std::vector<double>& t0_samples,
                           double horizon = 20.0, double tol = 1e-3, double sample_dt = 0.5);

struct RecurrenceReport {
    std::optional<double> time_defect;   // sup |u+(t+T) - u+(t)|
    std::optional<double> space_defect;  // sup |u+(x+p) - u+(x)|
    std::vector<double> almost_periods;  // spatial shifts with sup-difference < tol
    double max_gap = 0.0;                // largest gap between consecutive almost periods
    double scanned = 0.0;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Periodic checks when T or p is given; otherwise scans spatial shifts for
/// tol-almost periods. Throws ConfigError when the window is too short.
RecurrenceReport check_recurrence(const EntireSolution& U, std::optional<double> T, std::optional<double> p,
                                  double tol);

}  // namespace kpplab
