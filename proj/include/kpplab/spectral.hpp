#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kpplab/discretization.hpp"
#include "kpplab/media.hpp"

namespace kpplab {

enum class EigenMethod { Evolution, Matrix };

struct EigenOptions {
    int cells_per_period = 128;  // at least 64
    std::optional<double> dx;    // overrides cells_per_period
    double tol = 1e-12;          // chunk-to-chunk relative change declaring convergence
    double max_time = 4000.0;
    TiltForm form = TiltForm::Continuum;
};

/// Principal data of the tilted linear problem w_t = A_mu w + a(t, x) w.
struct EigenData {
    double mu = 0.0;
    double lambda = 0.0;
    std::string method;
    Grid ring;
    std::vector<Field> eta;    // one time period of the normalized profile (one field if autonomous)
    double beta_bound = 0.0;   // oscillation of S_mu(t) - (lambda/mu) t - ln|eta(t)|/mu over a period
    double residual = 0.0;     // fixed-point residual of the renormalized period map
    double drift = 0.0;        // last chunk-to-chunk change of lambda
};

/// Ring used for a medium's x-period (or a short ring for space-free media).
Grid eigen_ring(const DispersalOperator& op, const ReactionModel& m, const EigenOptions& opts = {});

EigenData principal_lambda(const DispersalOperator& op, const ReactionModel& m, double mu,
                           EigenMethod method = EigenMethod::Evolution, const EigenOptions& opts = {});

struct SpeedCurve {
    std::vector<double> mu_grid;
    std::vector<double> lambda_values;
    std::vector<double> c_values;
    double mu_star = 0.0;
    double c_star = 0.0;
    double lambda_star = 0.0;
};

SpeedCurve speed_curve(const DispersalOperator& op, const ReactionModel& m, double mu_lo, double mu_hi,
                       int grid_points, const EigenOptions& opts = {});

struct SMuTrace {
    double mu = 0.0;
    std::vector<double> t;
    std::vector<double> s;  // S_mu(t) = accumulated log |w(t)|_inf / mu
    std::vector<double> c;  // finite-difference speeds S_mu'(t) at midpoints
};

SMuTrace s_mu_trace(const DispersalOperator& op, const ReactionModel& m, double mu, double t0, double t1,
                    double sample_dt, const EigenOptions& opts = {});

/// Scheme-consistent principal data: conjugate tilt plus the evolve Euler step at a
/// fixed (dx, dt). Cell/time aligned lookups are exact discrete solutions of the
/// untilted linear scheme.
struct FloquetTable {
    double mu = 0.0;
    double lambda = 0.0;  // log growth per unit time of the discrete period map
    double dt = 0.0;
    double period = 0.0;  // time period (dt for autonomous media)
    int steps = 1;        // Euler steps per period
    Grid ring;
    std::vector<std::vector<double>> profile;  // normalized profile at steps 0..steps (last == first)
    std::vector<double> log_growth;            // cumulative log of the unnormalized amplitude, 0..steps

    /// Cumulative log amplitude A(t); exact at multiples of dt.
    double log_amplitude(double t) const;
    /// Normalized periodic profile v(t, x).
    double profile_at(double t, double x) const;
};

FloquetTable floquet_table(const DispersalOperator& op, const ReactionModel& m, double mu, double dx, double dt,
                           double tol = 1e-13, long max_steps = 4000000);

struct DecayOptions {
    double h = 1e-3;
    double x_lo = 0.0;  // may be negative to extend the eigenfunction left of 0
    double anchor_perturbation = 0.1;
    double sensitivity_tol = 1e-4;
};

struct DecayEigenfunction {
    double lambda = 0.0;
    double x_lo = 0.0, x_max = 0.0, h = 0.0;
    std::vector<double> x;
    std::vector<double> log_phi;  // ln phi, phi(0) = 1
    std::vector<double> sigma;    // -phi'/phi
    double mu_of_lambda = 0.0;
    double anchor_sensitivity = 0.0;
    bool sensitivity_ok = true;

    double log_value(double xx) const;  // continued with the anchor rate beyond the ends
    double value(double xx) const { return std::exp(log_value(xx)); }
    double sigma_at(double xx) const;
};

DecayEigenfunction decaying_eigenfunction(const ReactionModel& m, double lambda, double x_max,
                                          const DecayOptions& opts = {});

/// Exact grid eigenvector of the discretized phi'' + a phi = lambda_d phi, decaying to the right.
struct DiscreteDecay {
    double lambda_d = 0.0;    // discrete spatial eigenvalue
    double lambda_eff = 0.0;  // ln(1 + dt lambda_d) / dt: growth rate of the Euler scheme
    double dt = 0.0;
    double x0 = 0.0, dx = 0.0;
    long i_lo = 0, i_hi = 0;
    std::vector<double> log_phi;  // cells i_lo..i_hi, phi(x0) = 1
    double right_ratio = 0.0;     // phi_{i+1}/phi_i beyond i_hi
    double mu_of_lambda = 0.0;    // -ln(right_ratio)/dx averaged

    double log_value_cell(long i) const;
    double log_value(double x) const;
};

DiscreteDecay discrete_decay(const ReactionModel& m, double lambda_d, double x0, double dx, double dt, long i_lo,
                             long i_hi);

struct Lambda0Estimate {
    double lambda0 = 0.0;
    double lambda0_double = 0.0;  // same on twice the domain
    double richardson = 0.0;
    double drift = 0.0;
    bool stable = true;
    std::string method;
};

Lambda0Estimate lambda0(const ReactionModel& m, double domain_size, EigenMethod method = EigenMethod::Evolution,
                        int cells = 256);

}  // namespace kpplab
