#pragma once

#include "dcgrid/grid.hpp"
#include "dcgrid/types.hpp"

#include <vector>

namespace dcgrid {

/// Per-node operating boxes. The i_f currents box is consumed by the MPC
/// layer; it is carried here so limits live in one config surface.
struct OperatingLimits {
    Vec v_min, v_max;  // volts, v_min > 0
    Vec p_min, p_max;  // watts
    Vec i_min, i_max;  // amps

    void validate(int nodes) const;
};

struct SsSettings {
    int multistarts = 5;
    int max_iterations = 4000;       // projected-gradient iterations per start
    double step_tolerance = 1e-11;   // stationarity: projected step length
    double penalty_initial = 1e-4;
    double penalty_growth = 10.0;
    int penalty_rounds = 10;
    double feasibility_tol = 1e-9;   // p-box violation, relative to box scale
    bool polish = true;
};

struct SetpointSolution {
    Vec v;             // optimal node voltages
    Vec p;             // implied converter powers, p = -(Y_ad v) o v
    double objective = 0.0;
    bool feasible = false;
    double worst_violation = 0.0;
    int start_index = -1;
    int iterations = 0;
    double kkt_residual = 0.0;
};

/// p + (Y_ad v) o v, elementwise; zero at a consistent operating point.
Vec power_balance_residual(const Vec& v, const Vec& p, const Mat& y_ad);

/// Loss-minimal steady-state voltages: min v'Q_loss v subject to the
/// voltage box and the power box on the implied p(v) = -(Y_ad v) o v.
/// Projected gradient with Armijo line search and an increasing exact
/// penalty on the power box, multistarted from box corners and center,
/// followed by an active-set Newton polish.
SetpointSolution solve_opt_ss(const Mat& q_loss, const Mat& y_ad, const OperatingLimits& limits,
                              const SsSettings& settings = SsSettings());

SetpointSolution solve_opt_ss(const GridTopology& topo, const std::vector<LineParams>& lines,
                              const Vec& loads, const OperatingLimits& limits,
                              const SsSettings& settings = SsSettings());

/// Dense grid enumeration over the voltage box at the given spacing
/// (volts); the oracle for small grids. Errors for more than 4 nodes.
SetpointSolution brute_force_opt_ss(const Mat& q_loss, const Mat& y_ad,
                                    const OperatingLimits& limits, double resolution);

/// Independent validity check of a returned solution: power balance,
/// boxes, objective consistency. Does not trust solver bookkeeping.
bool check_setpoint(const Mat& q_loss, const Mat& y_ad, const OperatingLimits& limits,
                    const SetpointSolution& sol, double balance_tol = 1e-8,
                    double box_tol = 1e-9);

}  // namespace dcgrid
