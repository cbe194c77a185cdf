#pragma once

#include "dcgrid/model.hpp"
#include "dcgrid/qp.hpp"
#include "dcgrid/steady_state.hpp"
#include "dcgrid/types.hpp"

#include <memory>

namespace dcgrid {

enum class ControllerKind { tracking, economic };

const char* to_string(ControllerKind kind);

struct MpcConfig {
    int horizon = 300;       // N steps
    double eta = 1e-2;       // input-deviation weight (tracking only)
    Vec v_min, v_max;        // per-node state boxes over the horizon
    Vec i_min, i_max;
    Vec u_min, u_max;        // reference-voltage box
    bool warm_start = true;
    QpSettings qp;
    enum class OnFailure { abort, hold_previous } on_failure = OnFailure::abort;

    void validate(int nodes) const;
    static MpcConfig from_limits(const OperatingLimits& limits, int horizon, double eta);
};

struct MpcDiagnostics {
    QpStatus status = QpStatus::max_iterations;
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    bool condensing_reused = false;
    bool held_previous = false;  // fallback path taken
};

struct MpcStepResult {
    Vec u_applied;          // first move, clamped into the input box
    Mat predicted_inputs;   // n x N
    Mat predicted_states;   // dim x (N+1), column 0 is the measured state
    double objective = 0.0; // predicted cost including constant terms
    MpcDiagnostics diag;
};

/// Condensed (input-only) QP for the setpoint-tracking controller: stage
/// costs |v(k)-v*|^2 + eta |u(k)-v*|^2 for k = 1..N-1 plus the terminal
/// cost (x(N)-x_eq)' P (x(N)-x_eq), dynamics eliminated by forward
/// substitution, boxes on predicted v, i_f and u.
QpProblem build_tracking_qp(const DiscreteModel& model, const Mat& lyapunov_p,
                            const Vec& v_star, const Vec& x0, const MpcConfig& config);

/// Condensed QP for the economic controller: sum_{k=1..N} v(k)'Q_loss v(k),
/// no setpoint and no terminal cost; the Hessian is PSD and singular.
QpProblem build_economic_qp(const DiscreteModel& model, const Mat& q_loss, const Vec& x0,
                            const MpcConfig& config);

/// Receding-horizon controller wrapping the condensed builds, the QP solver
/// and horizon-shifted warm starts. One instance per closed loop.
class MpcController {
  public:
    MpcController(ControllerKind kind, MpcConfig config);
    ~MpcController();
    MpcController(MpcController&&) noexcept;
    MpcController& operator=(MpcController&&) noexcept;

    ControllerKind kind() const;

    /// Installs the prediction model (and, for tracking, the terminal matrix
    /// and setpoint). Triggers recondensing; call only when inputs changed.
    void set_economic_plan(const DiscreteModel& model, const Mat& q_loss);
    void set_tracking_plan(const DiscreteModel& model, const Mat& lyapunov_p,
                           const Vec& v_star);

    MpcStepResult control_step(const Vec& x0);

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace dcgrid
