#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kpplab/discretization.hpp"
#include "kpplab/entire.hpp"
#include "kpplab/media.hpp"

namespace kpplab {

/// Travelling front of U'' + c U' + g_M(U) = 0, c = sqrt(alpha) + 1/sqrt(alpha),
/// g_M(u) = g(u) - M u^2, normalized so that U(x) e^{sqrt(alpha) x} -> 1.
struct FrontProfile {
    double alpha = 0.25;
    double c_front = 2.5;
    double M_sub = 0.0;
    double u_top = 1.0;  // largest zero of g_M in (0, 1]
    double rise = 0.0;   // growth rate of u_top - U on the left
    double h = 1e-3;
    std::vector<double> x, U, dU;  // uniform in x, U decreasing

    double value(double xx) const;
    double slope(double xx) const;
    /// h(v) = U(-ln v / sqrt(alpha)), h(0) = 0.
    double transform(double v) const;
    double transform_slope(double v) const;
};

struct FrontOptions {
    double h = 1e-3;
    double start_offset = 1e-7;  // initial distance from the upper rest state
    double u_stop = 1e-13;
};

/// Throws ConstructionError when the shot overshoots or turns back.
FrontProfile front_profile(const std::function<double(double)>& g, double alpha, double M_sub = 0.0,
                           const FrontOptions& opts = {});

enum class PairFamily { Naro2, Naro3, Zla, Rashzh };

std::string to_string(PairFamily f);
PairFamily pair_family_from_string(const std::string& s);

struct PairOptions {
    double dx = 0.1;
    double dt = 0.0;          // required; the wave must run with the same step
    double ceiling = 1.0;     // inf of u+, the lower barrier must stay below it
    double t_lo = -60.0, t_hi = 60.0;
    int t_samples = 24;
    double x_back = 30.0, x_ahead = 40.0;  // sampled box around the predicted interface
    double residual_tol = 1e-10;           // relative to dt times the local scale
    double margin = 0.05;                  // extra slope of the sigma ramp
    int max_doublings = 60;
};

struct ResidualReport {
    double super_defect = 0.0;  // max positive part of N(W) - W_next, relative
    double sub_defect = 0.0;    // max positive part of w_next - N(w), relative
    double ceiling_excess = 0.0;
    double worst_t = 0.0, worst_x = 0.0;
    long samples = 0;
    bool pass = false;
    nlohmann::json to_json() const;
};

/// Lower barrier d phi - d1 phi1 and upper barrier d phi + d1 phi1 of a transition wave.
struct SubSuperPair {
    PairFamily family = PairFamily::Naro2;
    std::function<double(double, double)> log_phi;  // ln phi(t, x)
    std::function<double(double, double)> phi1;
    std::function<double(double)> X;               // predicted interface location
    std::function<double(double, double)> psi;      // zla only: h_{g_M}(phi), below the lower barrier
    double d_star = 1.0;
    double d1_star = 1.0;
    double dx = 0.1, dt = 0.0;
    double speed = 0.0;       // predicted mean speed
    double decay_rate = 0.0;  // predicted exponential rate of phi1/phi along x + X(t)
    nlohmann::json params;
    ResidualReport residual;
    std::shared_ptr<const FrontProfile> front;  // zla only

    double phi(double t, double x) const { return std::exp(log_phi(t, x)); }
    double lower(double t, double x) const { return d_star * phi(t, x) - d1_star * phi1(t, x); }
    double upper(double t, double x) const { return d_star * phi(t, x) + d1_star * phi1(t, x); }
};

/// Periodic media: mu < mu* and mu < mu' < (1 + nu) mu.
SubSuperPair build_pair_naro2(const DispersalOperator& op, const ReactionModel& m, double mu, double mu_prime,
                              const PairOptions& opts);
/// Time-independent media: lambda above the generalized principal eigenvalue, eps in (0, 1).
SubSuperPair build_pair_naro3(const DispersalOperator& op, const ReactionModel& m, double lambda, double eps,
                              const PairOptions& opts);
/// H3 media: lambda in (lambda0, 2 inf a), alpha in (1 - (2 inf a - lambda) / sup a, 1).
SubSuperPair build_pair_zla(const DispersalOperator& op, const ReactionModel& m, double lambda, double alpha,
                            double M_sub, const PairOptions& opts);
/// Nonlocal periodic media: mu < mu1 < min(mu*, 2 mu).
SubSuperPair build_pair_rashzh(const DispersalOperator& op, const ReactionModel& m, double mu, double mu1,
                               const PairOptions& opts);

/// Discrete one-step residuals of both barriers on the sampled box.
ResidualReport pair_residuals(const DispersalOperator& op, const ReactionModel& m, const SubSuperPair& pair,
                              const PairOptions& opts);

struct WaveOptions {
    double horizon = 40.0;
    std::optional<double> T_big;  // empty: 3 ln(1/tol) / (speed * decay_rate), clamped to [10, 80]
    double tol = 1e-6;            // relative difference against a run started earlier
    double record_dt = 0.5;
    double level = 0.5;
    double window_back = 40.0, window_ahead = 40.0;
    double sandwich_slack = 1e-6;
};

struct WaveProfile {
    PairFamily family = PairFamily::Naro2;
    nlohmann::json pair_params;
    double d_star = 1.0, d1_star = 1.0;
    double dt = 0.0;
    double T_big = 0.0;
    double level = 0.5;
    std::vector<Field> snapshots;  // moving-frame windows at record times t >= 0
    std::vector<double> t, X;      // interface samples at the same times
    double start_gap = 0.0;        // relative front-zone difference to a run started earlier, at t = 0
    bool converged = false;
    double sandwich_violation = 0.0;
    bool sandwich_ok = false;
    double max_ratio = 0.0;  // max U / u+
    double min_value = 0.0;
    Boundary boundary;
    std::shared_ptr<const EntireSolution> entire;
    std::shared_ptr<const SubSuperPair> pair;

    Field reference(const Grid& g, double t) const { return entire->on_grid(g, t); }
    nlohmann::json to_json() const;
};

WaveProfile construct_wave(const DispersalOperator& op, const ReactionModel& m, const SubSuperPair& pair,
                           const EntireSolution& entire, const WaveOptions& opts = {});

struct WaveDiagnostics {
    double max_width = 0.0;  // sup_t diam{x : eps1 <= U/u+ <= eps2}
    double max_jump = 0.0;   // sup |X(t) - X(s)| over |t - s| <= tau
    double least_mean_speed = 0.0;
    double mean_speed = 0.0;
    bool speed_converged = false;
    int samples = 0;
    nlohmann::json to_json() const;
};

WaveDiagnostics wave_diagnostics(const WaveProfile& w, double eps1 = 0.1, double eps2 = 0.9, double tau = 1.0,
                                 std::optional<double> delta = std::nullopt);

/// Parameters of one wave construction, as read from a run config.
struct WaveRecipe {
    PairFamily family = PairFamily::Naro2;
    double mu = 0.5;         // naro2, rashzh
    double mu2 = 0.75;       // naro2 mu', rashzh mu1
    double lambda = 1.5;     // naro3, zla
    double eps = 0.5;        // naro3
    double alpha = 0.85;     // zla
    double M_sub = 1.0;      // zla
    double dx = 0.1;
    double cfl_safety = 0.5;
    WaveOptions wave;
    PairOptions pair;        // dx, dt and ceiling are filled in

    static WaveRecipe from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct WaveBundle {
    std::shared_ptr<const EntireSolution> entire;
    std::shared_ptr<const SubSuperPair> pair;
    WaveProfile wave;
};

/// Lattice step, entire solution, pair and wave with one consistent (dx, dt).
WaveBundle build_wave(const DispersalOperator& op, const ReactionModel& m, const WaveRecipe& r);

}  // namespace kpplab
