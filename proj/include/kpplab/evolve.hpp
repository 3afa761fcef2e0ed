#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "kpplab/discretization.hpp"
#include "kpplab/media.hpp"

namespace kpplab {

struct IVPOptions {
    std::optional<double> dt;  // empty: largest admissible step dividing the stride
    double cfl_safety = 0.5;
    double record_stride = 0.0;  // 0 records only the endpoints
    bool track_front = false;
    double value_floor = 1e-300;
    double front_level = 0.5;
    Boundary boundary;
    // Reference state for the tracked interface ratio u/ref; defaults to the left-edge value.
    std::function<Field(const Field&)> front_reference;
    // Lipschitz budget override; negative means sample it.
    double lipschitz = -1.0;
};

/// Sampled sup of |d/du (u f)| over the grid cells, t in [t0, t1] and u in [0, u_max], doubled.
double lipschitz_budget(const ReactionModel& m, const Grid& grid, double t0, double t1, double u_max);

/// Largest step satisfying the monotonicity bound.
double max_stable_dt(const DispersalOperator& op, double dx, double lipschitz, double safety);

/// Throws StepSizeError when dt breaks the monotonicity bound.
void check_step_size(const DispersalOperator& op, double dx, double dt, double lipschitz, double safety);

/// Explicit Euler stepper u <- u + dt (A u + u f(t, x, u)) with negative round-off clamped to 0.
class Stepper {
public:
    Stepper(const DispersalOperator& op, const ReactionModel& m, const Grid& grid, Boundary boundary = {});

    void advance(Field& u, double dt);
    const Boundary& boundary() const { return boundary_; }
    void set_boundary(Boundary b) { boundary_ = std::move(b); }

private:
    const ReactionModel* model_;
    Stencil stencil_;
    Boundary boundary_;
    std::vector<double> padded_;
    std::vector<double> lap_;
};

Field step(const DispersalOperator& op, const ReactionModel& m, const Field& u, double dt,
           double cfl_safety = 0.5, const Boundary& boundary = {});

/// Step schedule over [t0, t1]: snapshot times and steps per segment.
struct Schedule {
    std::vector<double> stops;  // snapshot times after t0
    double dt = 0.0;
    std::vector<int> steps;  // Euler steps inside each segment
};

Schedule make_schedule(const DispersalOperator& op, const ReactionModel& m, const Field& u0, double t1,
                       const IVPOptions& opts, double u_max);

Trajectory solve_ivp(const DispersalOperator& op, const ReactionModel& m, double t0, const Field& u0, double t1,
                     const IVPOptions& opts = {});

std::pair<Trajectory, Trajectory> solve_pair(const DispersalOperator& op, const ReactionModel& m, double t0,
                                             const Field& u01, const Field& u02, double t1,
                                             const IVPOptions& opts = {});

/// A priori bound max(|u0|_inf, P0 + 1) kept by the scheme.
double apriori_bound(const ReactionModel& m, const Field& u0);

}  // namespace kpplab
