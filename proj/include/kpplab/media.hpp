#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace kpplab {

enum class ModelKind { LogisticUniform, H1Periodic, H2AlmostPeriodic, H3Space, Custom };
enum class HypothesisClass { H1, H2, H3 };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

using RateFn = std::function<double(double t, double x, double u)>;
using CoefficientFn = std::function<double(double t, double x)>;

/// Growth-rate model f(t, x, u) of u_t = A u + u f(t, x, u) together with the
/// constants of the standing hypotheses and whatever symmetry the model declares.
struct ReactionModel {
    ModelKind kind = ModelKind::Custom;
    std::string label;
    RateFn f;
    RateFn f_u;
    CoefficientFn a;  // a(t, x) = f(t, x, 0)

    double beta0 = 1.0;
    double P0 = 2.0;
    double nu = 1.0;
    double C_h1 = 1.0;
    double delta_h1 = 1.0;

    // KPP comparison nonlinearity for H3 models: a(x) g(u) <= u f <= a(x) u.
    std::function<double(double)> g;
    std::function<double(double)> g_prime;

    double a_minus = 0.0;  // inf a
    double a_plus = 0.0;   // sup a
    std::optional<double> T_period;
    std::optional<double> p_period;
    std::vector<double> frequencies;  // quasi-periodic frequencies in x (or t)
    bool time_independent = false;
    bool space_independent = false;
    std::optional<HypothesisClass> declared_class;

    /// Evaluates f; throws DomainError for u < 0.
    double eval_f(double t, double x, double u) const;
    double eval_fu(double t, double x, double u) const;
    bool space_periodic() const { return space_independent || p_period.has_value(); }
    bool time_periodic() const { return time_independent || T_period.has_value(); }
};

double eval_f(const ReactionModel& m, double t, double x, double u);
double eval_fu(const ReactionModel& m, double t, double x, double u);

/// Catalog description of a model (also the JSON "model" block of a run config).
///
/// form "a_one_minus_u":  f = a(t,x) (1 - u)
/// form "a_minus_u":      f = a(t,x) - u
/// coefficient types: constant, time_sin, space_cos, tx_periodic, quasi_periodic_x
struct MediaSpec {
    std::string kind = "logistic";
    std::string form = "a_one_minus_u";
    std::string coefficient = "constant";
    double a0 = 1.0;
    double amp = 0.0;
    double T = 0.0;      // time period (time_sin uses omega = 2 pi / T when T > 0, else omega)
    double omega = 1.0;  // angular frequency in t for time_sin with T == 0
    double p = 0.0;      // space period (space_cos, tx_periodic)
    std::vector<double> coeffs;
    std::vector<double> freqs;
    std::vector<double> phases;
    std::optional<double> beta0;
    std::optional<double> P0;

    static MediaSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

ReactionModel make_media(const MediaSpec& spec);

/// Convenience catalog entries.
ReactionModel logistic_model();
ReactionModel custom_model(RateFn f, RateFn f_u, double beta0, double P0, double a_minus, double a_plus);

struct SampleBox {
    double t_min = 0.0, t_max = 10.0;
    double x_min = -10.0, x_max = 10.0;
    double u_max = 3.0;
};

struct ClauseResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    std::string detail;
};

struct HypothesisReport {
    std::vector<ClauseResult> clauses;
    std::vector<std::string> notes;
    bool pass() const;
    const ClauseResult* find(const std::string& name) const;
    nlohmann::json to_json() const;
};

struct H0Options {
    int samples = 2000;
    double horizon = 20.0;
    double margin = 1e-3;
    unsigned seed = 7;
};

/// Sampled check of the standing hypotheses: saturation (f <= -beta0 for u >= P0),
/// decay (f_u <= -beta0), and finite-window averages of inf_x f(tau, x, 0).
HypothesisReport verify_H0(const ReactionModel& m, const SampleBox& box, const H0Options& opts = {});

HypothesisReport verify_class(const ReactionModel& m, HypothesisClass cls, int samples = 2000, unsigned seed = 11);

}  // namespace kpplab
