#include "dcgrid/mpc.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace dcgrid {

namespace {

// Inputs reach e after one step, i_f after two and v after three (B feeds
// only the integrator block), so box rows on v(1), v(2) and i_f(1) would
// constrain quantities no input can influence; they are left out of the QP.
constexpr int kFirstConstrainedV = 3;
constexpr int kFirstConstrainedIf = 2;

struct StepRows {
    int v_first = kFirstConstrainedV;
    int i_first = kFirstConstrainedIf;
    int v_count = 0;  // constrained v steps
    int i_count = 0;

    explicit StepRows(int horizon) {
        v_count = std::max(0, horizon - v_first + 1);
        i_count = std::max(0, horizon - i_first + 1);
    }
};

}  // namespace

const char* to_string(ControllerKind kind) {
    return kind == ControllerKind::tracking ? "tracking" : "economic";
}

void MpcConfig::validate(int nodes) const {
    if (horizon < 2) throw InvalidArgument("MPC horizon must be >= 2");
    if (!(eta > 0.0)) throw InvalidArgument("input weight eta must be > 0");
    const auto check = [nodes](const Vec& lo, const Vec& hi, const char* what) {
        if (lo.size() != nodes || hi.size() != nodes)
            throw InvalidArgument(std::string("MPC ") + what + " box length mismatch");
        for (Index i = 0; i < lo.size(); ++i)
            if (!(lo(i) <= hi(i)))
                throw InvalidArgument(std::string("MPC ") + what + " box empty");
    };
    check(v_min, v_max, "voltage");
    check(i_min, i_max, "current");
    check(u_min, u_max, "input");
}

MpcConfig MpcConfig::from_limits(const OperatingLimits& limits, int horizon, double eta) {
    MpcConfig c;
    c.horizon = horizon;
    c.eta = eta;
    c.v_min = limits.v_min;
    c.v_max = limits.v_max;
    c.i_min = limits.i_min;
    c.i_max = limits.i_max;
    c.u_min = limits.v_min;  // references share the voltage box
    c.u_max = limits.v_max;
    return c;
}

namespace detail {

/// Condensed-QP builder shared by both controllers. H, A and the gram
/// hints depend only on the model and cost data; f and the bounds are
/// rebuilt from the measured state every control step.
class CondensedMpc {
  public:
    void condense(const DiscreteModel& model, ControllerKind kind, const Mat& cost_matrix,
                  const Vec& v_star, const MpcConfig& config) {
        const StateLayout& layout = model.parent.layout;
        n_ = layout.nodes;
        s_ = layout.dim();
        if (layout.kind != ModelKind::reduced)
            throw InvalidArgument("MPC predicts with the reduced model");
        kind_ = kind;
        config.validate(n_);
        horizon_ = config.horizon;
        eta_ = config.eta;
        a_k_ = model.A_k;
        b_k_ = model.B_k;
        rows_ = StepRows(horizon_);

        if (kind == ControllerKind::tracking) {
            if (cost_matrix.rows() != s_ || cost_matrix.cols() != s_)
                throw InvalidArgument("terminal matrix dimension mismatch");
            if (v_star.size() != n_) throw InvalidArgument("setpoint length mismatch");
            v_star_ = v_star;
            x_eq_ = equilibrium_state(model.parent, v_star);
            terminal_p_ = cost_matrix;
        } else {
            if (cost_matrix.rows() != n_ || cost_matrix.cols() != n_)
                throw InvalidArgument("loss matrix dimension mismatch");
            q_loss_ = cost_matrix;
        }

        build_powers();
        build_hessian();
        build_constraints(config);
    }

    int horizon() const { return horizon_; }
    int nodes() const { return n_; }
    Index num_vars() const { return static_cast<Index>(n_) * horizon_; }

    const Mat& hessian() const { return h_qp_; }
    const Mat& constraints() const { return a_qp_; }
    const std::vector<GramGroup>& grams() const { return grams_; }

    void build_vectors(const Vec& x0, const MpcConfig& config, Vec& f, Vec& lower,
                       Vec& upper) const {
        if (x0.size() != s_) throw InvalidArgument("state dimension mismatch");
        const int N = horizon_;

        // Free response c_k = A_k^k x0.
        std::vector<Vec> c(N + 1);
        c[0] = x0;
        for (int k = 1; k <= N; ++k) c[k] = a_k_ * c[k - 1];

        // Backward pass for the linear cost: z_j = Qt_j (c_j - ref_j) + A' z_{j+1}.
        f.resize(num_vars());
        Vec z = Vec::Zero(s_);
        for (int j = N; j >= 1; --j) {
            if (j < N) z = (a_k_.transpose() * z).eval();
            z += stage_gradient_term(c[j], j);
            f.segment(static_cast<Index>(n_) * (j - 1), n_) = b_k_.transpose() * z;
        }
        if (kind_ == ControllerKind::tracking) {
            for (int j = 1; j <= N - 1; ++j)
                f.segment(static_cast<Index>(n_) * (j - 1), n_) -= eta_ * v_star_;
        }
        f *= 2.0;  // matches H = 2(G'QG + R)

        // Bounds: state rows first (v group then i_f group), then inputs.
        lower.resize(a_qp_.rows());
        upper.resize(a_qp_.rows());
        Index row = 0;
        for (int k = rows_.v_first; k <= N; ++k) {
            lower.segment(row, n_) = config.v_min - c[k].segment(0, n_);
            upper.segment(row, n_) = config.v_max - c[k].segment(0, n_);
            row += n_;
        }
        for (int k = rows_.i_first; k <= N; ++k) {
            lower.segment(row, n_) = config.i_min - c[k].segment(n_, n_);
            upper.segment(row, n_) = config.i_max - c[k].segment(n_, n_);
            row += n_;
        }
        for (int k = 1; k <= N; ++k) {
            lower.segment(row, n_) = config.u_min;
            upper.segment(row, n_) = config.u_max;
            row += n_;
        }
    }

    /// Predicted states reconstructed through the condensed operators:
    /// x(k) = A^k x0 + sum_i A^{k-i} B u(i). Column 0 holds x0.
    Mat predicted_states(const Vec& x0, const Mat& u_seq) const {
        Mat states(s_, horizon_ + 1);
        states.col(0) = x0;
        Vec c = x0;
        for (int k = 1; k <= horizon_; ++k) {
            c = (a_k_ * c).eval();
            Vec x = c;
            for (int i = 1; i <= k; ++i) x += t_pow_[k - i] * u_seq.col(i - 1);
            states.col(k) = x;
        }
        return states;
    }

    double predicted_cost(const Mat& states, const Mat& u_seq) const {
        double cost = 0.0;
        if (kind_ == ControllerKind::tracking) {
            for (int k = 1; k <= horizon_ - 1; ++k) {
                const Vec dv = states.col(k).segment(0, n_) - v_star_;
                const Vec du = u_seq.col(k - 1) - v_star_;
                cost += dv.squaredNorm() + eta_ * du.squaredNorm();
            }
            const Vec dx = states.col(horizon_) - x_eq_;
            cost += quadratic_form(terminal_p_, dx);
        } else {
            for (int k = 1; k <= horizon_; ++k) {
                const Vec v = states.col(k).segment(0, n_);
                cost += quadratic_form(q_loss_, v);
            }
        }
        return cost;
    }

    const Vec& setpoint() const { return v_star_; }
    const Vec& equilibrium() const { return x_eq_; }

  private:
    Vec stage_gradient_term(const Vec& c_j, int j) const {
        Vec term = Vec::Zero(s_);
        if (kind_ == ControllerKind::tracking) {
            if (j == horizon_)
                term = terminal_p_ * (c_j - x_eq_);
            else
                term.segment(0, n_) = c_j.segment(0, n_) - v_star_;
        } else {
            term.segment(0, n_) = q_loss_ * c_j.segment(0, n_);
        }
        return term;
    }

    void build_powers() {
        t_pow_.assign(horizon_, Mat());
        t_pow_[0] = b_k_;
        for (int d = 1; d < horizon_; ++d) t_pow_[d] = a_k_ * t_pow_[d - 1];
    }

    /// One backward cost-to-go style recursion delivering all Hessian-like
    /// blocks: with step weights Qt_j, block (j,i) for j >= i equals
    /// B' [sum_{k>=j} A'^{k-j} Qt_k A^{k-j}] A^{j-i} B = (B' W_j) T_{j-i}.
    Mat blocks_from_recursion(const std::function<void(int, Mat&)>& add_stage_weight) const {
        const int N = horizon_;
        const Index nv = num_vars();
        Mat blocks = Mat::Zero(nv, nv);
        Mat w = Mat::Zero(s_, s_);
        std::vector<Mat> v_rows(N + 1);
        for (int j = N; j >= 1; --j) {
            if (j < N) w = (a_k_.transpose() * w * a_k_).eval();
            add_stage_weight(j, w);
            v_rows[j] = b_k_.transpose() * w;  // n x s
        }
        for (int j = 1; j <= N; ++j) {
            for (int i = 1; i <= j; ++i) {
                const Mat block = v_rows[j] * t_pow_[j - i];
                blocks.block(static_cast<Index>(n_) * (j - 1), static_cast<Index>(n_) * (i - 1),
                             n_, n_) = block;
                if (i != j)
                    blocks.block(static_cast<Index>(n_) * (i - 1),
                                 static_cast<Index>(n_) * (j - 1), n_, n_) = block.transpose();
            }
        }
        return blocks;
    }

    // The control cost z'(G'QG + R)z + 2 g'z + const maps onto the QP
    // convention 1/2 z'Hz + f'z with H = 2(G'QG + R) and f = 2g.
    void build_hessian() {
        const int N = horizon_;
        h_qp_ = blocks_from_recursion([this, N](int j, Mat& w) {
            if (kind_ == ControllerKind::tracking) {
                if (j == N)
                    w += terminal_p_;
                else
                    w.diagonal().segment(0, n_).array() += 1.0;  // Q = I on v
            } else {
                w.block(0, 0, n_, n_) += q_loss_;
            }
        });
        if (kind_ == ControllerKind::tracking) {
            for (int j = 1; j <= N - 1; ++j)
                h_qp_.diagonal().segment(static_cast<Index>(n_) * (j - 1), n_).array() +=
                    eta_;
        }
        h_qp_ *= 2.0;
        h_qp_ = ((h_qp_ + h_qp_.transpose()) * 0.5).eval();  // exact symmetry
    }

    void build_constraints(const MpcConfig& config) {
        const int N = horizon_;
        const Index nv = num_vars();
        const Index vr = static_cast<Index>(n_) * rows_.v_count;
        const Index ir = static_cast<Index>(n_) * rows_.i_count;
        const Index ur = nv;
        a_qp_ = Mat::Zero(vr + ir + ur, nv);

        Index row = 0;
        for (int k = rows_.v_first; k <= N; ++k) {
            for (int i = 1; i <= k; ++i)
                a_qp_.block(row, static_cast<Index>(n_) * (i - 1), n_, n_) =
                    t_pow_[k - i].middleRows(0, n_);
            row += n_;
        }
        for (int k = rows_.i_first; k <= N; ++k) {
            for (int i = 1; i <= k; ++i)
                a_qp_.block(row, static_cast<Index>(n_) * (i - 1), n_, n_) =
                    t_pow_[k - i].middleRows(n_, n_);
            row += n_;
        }
        a_qp_.block(row, 0, ur, nv) = Mat::Identity(nv, nv);

        grams_.clear();
        if (vr > 0) {
            Mat gram_v = blocks_from_recursion([this](int j, Mat& w) {
                if (j >= rows_.v_first) w.diagonal().segment(0, n_).array() += 1.0;
            });
            grams_.push_back({0, vr, std::move(gram_v)});
        }
        if (ir > 0) {
            Mat gram_i = blocks_from_recursion([this](int j, Mat& w) {
                if (j >= rows_.i_first) w.diagonal().segment(n_, n_).array() += 1.0;
            });
            grams_.push_back({vr, ir, std::move(gram_i)});
        }
        grams_.push_back({vr + ir, ur, Mat::Identity(nv, nv)});
    }

    ControllerKind kind_ = ControllerKind::tracking;
    int n_ = 0, s_ = 0, horizon_ = 0;
    double eta_ = 0.0;
    Mat a_k_, b_k_;
    Mat terminal_p_;
    Mat q_loss_;
    Vec v_star_, x_eq_;
    StepRows rows_{2};
    std::vector<Mat> t_pow_;
    Mat h_qp_;
    Mat a_qp_;
    std::vector<GramGroup> grams_;

};

QpProblem assemble_problem(const CondensedMpc& builder, const Vec& x0,
                           const MpcConfig& config) {
    QpProblem p;
    p.H = builder.hessian();
    p.A = builder.constraints();
    p.gram_groups = builder.grams();
    Vec f, lo, hi;
    builder.build_vectors(x0, config, f, lo, hi);
    p.f = f;
    p.lower = lo;
    p.upper = hi;
    return p;
}

}  // namespace detail

QpProblem build_tracking_qp(const DiscreteModel& model, const Mat& lyapunov_p,
                            const Vec& v_star, const Vec& x0, const MpcConfig& config) {
    detail::CondensedMpc builder;
    builder.condense(model, ControllerKind::tracking, lyapunov_p, v_star, config);
    return detail::assemble_problem(builder, x0, config);
}

QpProblem build_economic_qp(const DiscreteModel& model, const Mat& q_loss, const Vec& x0,
                            const MpcConfig& config) {
    detail::CondensedMpc builder;
    builder.condense(model, ControllerKind::economic, q_loss, Vec(), config);
    return detail::assemble_problem(builder, x0, config);
}

struct MpcController::Impl {
    ControllerKind kind;
    MpcConfig config;
    detail::CondensedMpc builder;
    QpSolver solver;
    QpProblem problem;  // H/A/grams cached; f and bounds rewritten per step
    bool has_plan = false;
    bool fresh_condense = true;
    bool has_previous = false;
    Mat prev_inputs;  // n x N
    Vec prev_dual;

    Impl(ControllerKind k, MpcConfig c) : kind(k), config(std::move(c)) {
        solver.settings() = config.qp;
        solver.settings().warm_start = config.warm_start;
    }

    void install(const DiscreteModel& model, const Mat& cost, const Vec& v_star) {
        builder.condense(model, kind, cost, v_star, config);
        problem.H = builder.hessian();
        problem.A = builder.constraints();
        problem.gram_groups = builder.grams();
        fresh_condense = true;
        has_plan = true;
    }

    Vec shifted_warm_inputs() const {
        const int n = builder.nodes();
        const int N = builder.horizon();
        Vec z(static_cast<Index>(n) * N);
        for (int k = 0; k < N; ++k) {
            const int src = std::min(k + 1, N - 1);
            z.segment(static_cast<Index>(n) * k, n) = prev_inputs.col(src);
        }
        return z;
    }

    Vec shifted_warm_dual() const {
        const int n = builder.nodes();
        const int N = builder.horizon();
        Vec y = Vec::Zero(problem.A.rows());
        Index base = 0;
        auto shift_group = [&](int count) {
            for (int k = 0; k < count; ++k) {
                const int src = std::min(k + 1, count - 1);
                y.segment(base + static_cast<Index>(n) * k, n) =
                    prev_dual.segment(base + static_cast<Index>(n) * src, n);
            }
            base += static_cast<Index>(n) * count;
        };
        const StepRows rows(N);
        shift_group(rows.v_count);
        shift_group(rows.i_count);
        shift_group(N);
        return y;
    }

    MpcStepResult step(const Vec& x0) {
        if (!has_plan) throw InvalidArgument("controller has no model installed");
        const int n = builder.nodes();
        const int N = builder.horizon();

        Vec f, lo, hi;
        builder.build_vectors(x0, config, f, lo, hi);
        problem.f = f;
        problem.lower = lo;
        problem.upper = hi;

        if (config.warm_start && has_previous && prev_dual.size() == problem.A.rows())
            solver.set_warm_start(shifted_warm_inputs(), shifted_warm_dual());

        const QpSolution sol = solver.solve(problem, !fresh_condense);
        const bool reused = !fresh_condense;
        fresh_condense = false;

        MpcStepResult result;
        result.diag.status = sol.status;
        result.diag.iterations = sol.iterations;
        result.diag.primal_residual = sol.primal_residual;
        result.diag.dual_residual = sol.dual_residual;
        result.diag.condensing_reused = reused;

        if (sol.status != QpStatus::solved) {
            if (config.on_failure == MpcConfig::OnFailure::hold_previous && has_previous) {
                result.u_applied =
                    clamp_box(prev_inputs.col(0), config.u_min, config.u_max);
                result.predicted_inputs = prev_inputs;
                result.predicted_states = builder.predicted_states(x0, prev_inputs);
                result.objective =
                    builder.predicted_cost(result.predicted_states, prev_inputs);
                result.diag.held_previous = true;
                return result;
            }
            std::ostringstream msg;
            msg << to_string(kind) << " MPC QP not solved: status=" << to_string(sol.status)
                << " iterations=" << sol.iterations << " primal=" << sol.primal_residual
                << " dual=" << sol.dual_residual;
            throw NumericalError(msg.str());
        }

        Mat u_seq(n, N);
        for (int k = 0; k < N; ++k)
            u_seq.col(k) = sol.z.segment(static_cast<Index>(n) * k, n);

        result.predicted_inputs = u_seq;
        result.predicted_states = builder.predicted_states(x0, u_seq);
        result.objective = builder.predicted_cost(result.predicted_states, u_seq);
        result.u_applied = clamp_box(u_seq.col(0), config.u_min, config.u_max);

        prev_inputs = u_seq;
        prev_dual = sol.y;
        has_previous = true;
        return result;
    }
};

MpcController::MpcController(ControllerKind kind, MpcConfig config)
    : impl_(std::make_unique<Impl>(kind, std::move(config))) {}

MpcController::~MpcController() = default;
MpcController::MpcController(MpcController&&) noexcept = default;
MpcController& MpcController::operator=(MpcController&&) noexcept = default;

ControllerKind MpcController::kind() const { return impl_->kind; }

void MpcController::set_economic_plan(const DiscreteModel& model, const Mat& q_loss) {
    if (impl_->kind != ControllerKind::economic)
        throw InvalidArgument("economic plan on a tracking controller");
    impl_->install(model, q_loss, Vec());
}

void MpcController::set_tracking_plan(const DiscreteModel& model, const Mat& lyapunov_p,
                                      const Vec& v_star) {
    if (impl_->kind != ControllerKind::tracking)
        throw InvalidArgument("tracking plan on an economic controller");
    impl_->install(model, lyapunov_p, v_star);
}

MpcStepResult MpcController::control_step(const Vec& x0) { return impl_->step(x0); }

}  // namespace dcgrid
