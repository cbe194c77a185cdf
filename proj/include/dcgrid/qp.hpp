#pragma once

#include "dcgrid/types.hpp"

#include <Eigen/Cholesky>

#include <vector>

namespace dcgrid {

/// Optional structure hint for a contiguous block of constraint rows:
/// gram must equal A_rows' * A_rows for rows [row_begin, row_begin+row_count).
/// When groups cover all rows the solver equilibrates rows per group and
/// assembles its normal matrix from the grams instead of forming A'A densely.
struct GramGroup {
    Index row_begin = 0;
    Index row_count = 0;
    Mat gram;
};

/// Convex QP  min 1/2 z'Hz + f'z  s.t.  l <= A z <= u.
/// Box constraints on variables are expressed as identity rows of A.
struct QpProblem {
    Mat H;
    Vec f;
    Mat A;
    Vec lower;
    Vec upper;
    std::vector<GramGroup> gram_groups;

    Index num_vars() const { return H.rows(); }
    Index num_cons() const { return A.rows(); }
    void validate() const;
};

struct QpSettings {
    double eps_abs = 1e-6;
    double eps_rel = 1e-6;
    double rho = 1.0;       // fixed ADMM penalty
    double sigma = 1e-8;    // splitting regularization, never in the objective
    double alpha = 1.6;     // over-relaxation
    int max_iterations = 20000;
    int ruiz_iterations = 10;
    int check_interval = 10;
    bool warm_start = true;
    double eps_infeasible = 1e-8;
};

enum class QpStatus { solved, max_iterations, primal_infeasible, dual_infeasible };

const char* to_string(QpStatus status);

struct QpSolution {
    Vec z;
    Vec y;
    QpStatus status = QpStatus::max_iterations;
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
};

struct KktResiduals {
    double primal = 0.0;
    double dual = 0.0;
    double complementarity = 0.0;
};

/// Exact KKT residual norms at (z, y), independent of any solver internals.
KktResiduals kkt_residuals(const QpProblem& problem, const Vec& z, const Vec& y);

/// Dual objective -1/2 z'Hz - sup_{s in [l,u]} y's at a stationary pair.
double dual_objective(const QpProblem& problem, const Vec& z, const Vec& y);

/// Operator-splitting (ADMM) QP solver with Ruiz equilibration, fixed
/// penalty and over-relaxation. Instances hold a mutable workspace and a
/// warm-start state: use one instance per thread.
class QpSolver {
  public:
    explicit QpSolver(QpSettings settings = QpSettings());

    QpSettings& settings() { return settings_; }
    const QpSettings& settings() const { return settings_; }

    QpSolution solve(const QpProblem& problem) { return solve(problem, false); }

    /// With matrices_unchanged the cached scaling and factorization from the
    /// previous solve are reused; only f, lower and upper may have changed.
    QpSolution solve(const QpProblem& problem, bool matrices_unchanged);

    /// Seeds the next solve (unscaled coordinates). Ignored when warm
    /// starting is disabled in the settings.
    void set_warm_start(const Vec& z, const Vec& y);

    void reset();

  private:
    void setup(const QpProblem& problem);

    QpSettings settings_;

    // Cached scaled data for the current (H, A) pair.
    bool has_cache_ = false;
    Index n_ = 0, m_ = 0;
    Mat h_scaled_;
    Mat a_scaled_;
    Vec d_scale_;  // variable scaling D
    Vec e_scale_;  // constraint scaling E
    double cost_scale_ = 1.0;
    Eigen::LLT<Mat> kkt_llt_;
    bool use_ldlt_ = false;
    Eigen::LDLT<Mat> kkt_ldlt_;

    bool has_warm_ = false;
    Vec warm_z_, warm_y_;
};

}  // namespace dcgrid
