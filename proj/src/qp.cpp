#include "dcgrid/qp.hpp"

#include <algorithm>
#include <cmath>

namespace dcgrid {

namespace {

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;

double clamp_scaling(double s) { return std::clamp(s, kMinScaling, kMaxScaling); }

double inf_norm_or_zero(const Vec& v) {
    if (v.size() == 0) return 0.0;
    double n = 0.0;
    for (Index i = 0; i < v.size(); ++i)
        if (std::isfinite(v(i))) n = std::max(n, std::abs(v(i)));
    return n;
}

}  // namespace

const char* to_string(QpStatus status) {
    switch (status) {
        case QpStatus::solved: return "solved";
        case QpStatus::max_iterations: return "max_iterations";
        case QpStatus::primal_infeasible: return "primal_infeasible";
        case QpStatus::dual_infeasible: return "dual_infeasible";
    }
    return "unknown";
}

void QpProblem::validate() const {
    const Index n = H.rows();
    if (H.cols() != n) throw InvalidArgument("Hessian must be square");
    if (f.size() != n) throw InvalidArgument("linear cost length mismatch");
    if (A.rows() != lower.size() || A.rows() != upper.size())
        throw InvalidArgument("constraint bound length mismatch");
    if (A.rows() > 0 && A.cols() != n) throw InvalidArgument("constraint matrix width mismatch");

    if (!H.allFinite()) throw InvalidArgument("Hessian contains NaN/Inf");
    if (!f.allFinite()) throw InvalidArgument("linear cost contains NaN/Inf");
    if (A.rows() > 0 && !A.allFinite()) throw InvalidArgument("constraint matrix contains NaN/Inf");

    const double h_scale = (n > 0) ? H.cwiseAbs().maxCoeff() : 0.0;
    if (n > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + h_scale))
        throw InvalidArgument("Hessian must be symmetric within 1e-12");

    for (Index j = 0; j < lower.size(); ++j) {
        if (std::isnan(lower(j)) || std::isnan(upper(j)))
            throw InvalidArgument("constraint bounds contain NaN");
        if (lower(j) > upper(j)) throw InvalidArgument("lower bound above upper bound");
    }

    Index covered = 0;
    for (const GramGroup& g : gram_groups) {
        if (g.row_begin != covered || g.row_count <= 0)
            throw InvalidArgument("gram groups must cover rows contiguously from zero");
        if (g.gram.rows() != n || g.gram.cols() != n)
            throw InvalidArgument("gram group dimension mismatch");
        covered += g.row_count;
    }
    if (!gram_groups.empty() && covered != A.rows())
        throw InvalidArgument("gram groups must cover all constraint rows");
}

KktResiduals kkt_residuals(const QpProblem& problem, const Vec& z, const Vec& y) {
    if (z.size() != problem.num_vars() || y.size() != problem.num_cons())
        throw InvalidArgument("kkt_residuals: dimension mismatch");
    KktResiduals r;
    const Vec az = problem.A.rows() > 0 ? Vec(problem.A * z) : Vec();
    double prim = 0.0, comp = 0.0;
    for (Index j = 0; j < az.size(); ++j) {
        prim = std::max(prim, std::max(az(j) - problem.upper(j), 0.0));
        prim = std::max(prim, std::max(problem.lower(j) - az(j), 0.0));
        if (y(j) > 0.0)
            comp = std::max(comp, y(j) * std::abs(problem.upper(j) - az(j)));
        else if (y(j) < 0.0)
            comp = std::max(comp, -y(j) * std::abs(az(j) - problem.lower(j)));
    }
    r.primal = prim;
    r.complementarity = comp;
    Vec dual = problem.H * z + problem.f;
    if (problem.A.rows() > 0) dual += problem.A.transpose() * y;
    r.dual = dual.size() > 0 ? dual.cwiseAbs().maxCoeff() : 0.0;
    return r;
}

double dual_objective(const QpProblem& problem, const Vec& z, const Vec& y) {
    double support = 0.0;
    for (Index j = 0; j < y.size(); ++j) {
        if (y(j) > 0.0)
            support += problem.upper(j) * y(j);
        else if (y(j) < 0.0)
            support += problem.lower(j) * y(j);
    }
    return -0.5 * z.dot(problem.H * z) - support;
}

QpSolver::QpSolver(QpSettings settings) : settings_(settings) {}

void QpSolver::reset() {
    has_cache_ = false;
    has_warm_ = false;
}

void QpSolver::set_warm_start(const Vec& z, const Vec& y) {
    warm_z_ = z;
    warm_y_ = y;
    has_warm_ = true;
}

void QpSolver::setup(const QpProblem& problem) {
    const Index n = problem.num_vars();
    const Index m = problem.num_cons();
    n_ = n;
    m_ = m;

    // PSD validation: attempted factorization of H + sigma I. The shift is
    // internal to the splitting method and never enters reported objectives.
    {
        Mat h_reg = problem.H;
        h_reg.diagonal().array() += settings_.sigma;
        Eigen::LDLT<Mat> psd(h_reg);
        const double h_scale = std::max(1.0, problem.H.cwiseAbs().maxCoeff());
        if (psd.info() != Eigen::Success || psd.vectorD().minCoeff() < -1e-9 * h_scale)
            throw NumericalError("Hessian is not positive semidefinite");
    }

    h_scaled_ = problem.H;
    a_scaled_ = problem.A;
    Vec f_scaled = problem.f;
    d_scale_ = Vec::Ones(n);
    e_scale_ = Vec::Ones(std::max<Index>(m, 0));
    cost_scale_ = 1.0;

    const bool grouped = !problem.gram_groups.empty();

    for (int pass = 0; pass < settings_.ruiz_iterations; ++pass) {
        Vec delta(n);
        for (Index i = 0; i < n; ++i) {
            double cn = h_scaled_.col(i).cwiseAbs().maxCoeff();
            if (m > 0) cn = std::max(cn, a_scaled_.col(i).cwiseAbs().maxCoeff());
            delta(i) = (cn > 0.0) ? clamp_scaling(1.0 / std::sqrt(cn)) : 1.0;
        }
        Vec erow = Vec::Ones(std::max<Index>(m, 0));
        if (m > 0) {
            if (grouped) {
                for (const GramGroup& g : problem.gram_groups) {
                    double rn = 0.0;
                    for (Index r = g.row_begin; r < g.row_begin + g.row_count; ++r)
                        rn = std::max(rn, a_scaled_.row(r).cwiseAbs().maxCoeff());
                    const double e = (rn > 0.0) ? clamp_scaling(1.0 / std::sqrt(rn)) : 1.0;
                    erow.segment(g.row_begin, g.row_count).setConstant(e);
                }
            } else {
                for (Index r = 0; r < m; ++r) {
                    const double rn = a_scaled_.row(r).cwiseAbs().maxCoeff();
                    erow(r) = (rn > 0.0) ? clamp_scaling(1.0 / std::sqrt(rn)) : 1.0;
                }
            }
        }

        h_scaled_ = delta.asDiagonal() * h_scaled_ * delta.asDiagonal();
        f_scaled = f_scaled.cwiseProduct(delta);
        if (m > 0) a_scaled_ = erow.asDiagonal() * a_scaled_ * delta.asDiagonal();
        d_scale_ = d_scale_.cwiseProduct(delta);
        if (m > 0) e_scale_ = e_scale_.cwiseProduct(erow);

        double mean_col = 0.0;
        for (Index i = 0; i < n; ++i) mean_col += h_scaled_.col(i).cwiseAbs().maxCoeff();
        mean_col /= static_cast<double>(n);
        const double denom = std::max(mean_col, inf_norm_or_zero(f_scaled));
        const double gamma = (denom > 0.0) ? clamp_scaling(1.0 / denom) : 1.0;
        h_scaled_ *= gamma;
        f_scaled *= gamma;
        cost_scale_ *= gamma;
    }

    // Normal matrix of the reduced ADMM step: H~ + sigma I + rho A~'A~.
    Mat kkt = h_scaled_;
    kkt.diagonal().array() += settings_.sigma;
    if (m > 0) {
        if (grouped) {
            for (const GramGroup& g : problem.gram_groups) {
                const double e2 = e_scale_(g.row_begin) * e_scale_(g.row_begin);
                kkt.noalias() += (settings_.rho * e2) *
                                 (d_scale_.asDiagonal() * g.gram * d_scale_.asDiagonal());
            }
        } else {
            kkt.noalias() += settings_.rho * a_scaled_.transpose() * a_scaled_;
        }
    }

    use_ldlt_ = false;
    kkt_llt_.compute(kkt);
    if (kkt_llt_.info() != Eigen::Success) {
        use_ldlt_ = true;
        kkt_ldlt_.compute(kkt);
        if (kkt_ldlt_.info() != Eigen::Success)
            throw NumericalError("ADMM normal matrix factorization failed");
    }
    has_cache_ = true;
}

QpSolution QpSolver::solve(const QpProblem& problem, bool matrices_unchanged) {
    problem.validate();
    if (!matrices_unchanged || !has_cache_ || problem.num_vars() != n_ ||
        problem.num_cons() != m_)
        setup(problem);

    const Index n = n_;
    const Index m = m_;
    const double rho = settings_.rho;
    const double sigma = settings_.sigma;
    const double relax = settings_.alpha;

    const Vec f_scaled = cost_scale_ * problem.f.cwiseProduct(d_scale_);
    Vec l_scaled(m), u_scaled(m);
    for (Index j = 0; j < m; ++j) {
        l_scaled(j) = problem.lower(j) * e_scale_(j);
        u_scaled(j) = problem.upper(j) * e_scale_(j);
    }

    Vec z = Vec::Zero(n);
    Vec y = Vec::Zero(m);
    if (settings_.warm_start && has_warm_ && warm_z_.size() == n && warm_y_.size() == m) {
        z = warm_z_.cwiseQuotient(d_scale_);
        y = cost_scale_ * warm_y_.cwiseQuotient(e_scale_);
    }
    Vec zeta(m);
    if (m > 0) zeta = (a_scaled_ * z).cwiseMax(l_scaled).cwiseMin(u_scaled);

    QpSolution sol;
    sol.status = QpStatus::max_iterations;

    Vec z_prev = z, y_prev = y;
    Vec rhs(n), z_tilde(n), zeta_tilde(m), zeta_hat(m);

    auto unscale_z = [&](const Vec& zs) { return Vec(zs.cwiseProduct(d_scale_)); };
    auto unscale_y = [&](const Vec& ys) {
        return Vec(ys.cwiseProduct(e_scale_) / cost_scale_);
    };

    int iter = 0;
    for (iter = 1; iter <= settings_.max_iterations; ++iter) {
        z_prev = z;
        y_prev = y;

        rhs = sigma * z - f_scaled;
        if (m > 0) rhs.noalias() += a_scaled_.transpose() * (rho * zeta - y);
        if (use_ldlt_)
            z_tilde = kkt_ldlt_.solve(rhs);
        else
            z_tilde = kkt_llt_.solve(rhs);

        z = relax * z_tilde + (1.0 - relax) * z;
        if (m > 0) {
            zeta_tilde.noalias() = a_scaled_ * z_tilde;
            zeta_hat = relax * zeta_tilde + (1.0 - relax) * zeta;
            zeta = (zeta_hat + y / rho).cwiseMax(l_scaled).cwiseMin(u_scaled);
            y += rho * (zeta_hat - zeta);
        }

        // Check at the first iteration too: a good warm start exits early.
        if (iter != 1 && iter % settings_.check_interval != 0 &&
            iter != settings_.max_iterations)
            continue;

        if (!z.allFinite() || (m > 0 && !y.allFinite()))
            throw NumericalError("QP solver iterates diverged (NaN/Inf)");

        const Vec zu = unscale_z(z);
        const Vec yu = unscale_y(y);
        const Vec hz = problem.H * zu;
        double r_prim = 0.0, eps_prim = settings_.eps_abs;
        if (m > 0) {
            const Vec az = problem.A * zu;
            const Vec zeta_u = zeta.cwiseQuotient(e_scale_);
            r_prim = (az - zeta_u).cwiseAbs().maxCoeff();
            eps_prim += settings_.eps_rel *
                        std::max(az.cwiseAbs().maxCoeff(), inf_norm_or_zero(zeta_u));
        }
        Vec dual = hz + problem.f;
        double aty_norm = 0.0;
        if (m > 0) {
            const Vec aty = problem.A.transpose() * yu;
            aty_norm = aty.cwiseAbs().maxCoeff();
            dual += aty;
        }
        const double r_dual = dual.cwiseAbs().maxCoeff();
        const double eps_dual =
            settings_.eps_abs +
            settings_.eps_rel * std::max({hz.cwiseAbs().maxCoeff(), aty_norm,
                                          inf_norm_or_zero(problem.f)});

        sol.primal_residual = r_prim;
        sol.dual_residual = r_dual;

        if (r_prim <= eps_prim && r_dual <= eps_dual) {
            sol.status = QpStatus::solved;
            break;
        }

        if (m > 0) {
            // Primal infeasibility certificate from the dual increment.
            const Vec dy = unscale_y(y) - unscale_y(y_prev);
            const double dy_norm = dy.cwiseAbs().maxCoeff();
            if (dy_norm > settings_.eps_infeasible) {
                const double aty_dy = (problem.A.transpose() * dy).cwiseAbs().maxCoeff();
                double support = 0.0;
                bool valid = true;
                for (Index j = 0; j < m && valid; ++j) {
                    if (dy(j) > settings_.eps_infeasible * dy_norm) {
                        if (!std::isfinite(problem.upper(j))) valid = false;
                        else support += problem.upper(j) * dy(j);
                    } else if (dy(j) < -settings_.eps_infeasible * dy_norm) {
                        if (!std::isfinite(problem.lower(j))) valid = false;
                        else support += problem.lower(j) * dy(j);
                    }
                }
                if (valid && aty_dy <= settings_.eps_infeasible * dy_norm &&
                    support <= -settings_.eps_infeasible * dy_norm) {
                    sol.status = QpStatus::primal_infeasible;
                    break;
                }
            }
        }
        {
            // Dual infeasibility certificate from the primal increment.
            const Vec dz = unscale_z(z) - unscale_z(z_prev);
            const double dz_norm = dz.cwiseAbs().maxCoeff();
            if (dz_norm > settings_.eps_infeasible) {
                const double hdz = (problem.H * dz).cwiseAbs().maxCoeff();
                const double fdz = problem.f.dot(dz);
                bool valid = hdz <= settings_.eps_infeasible * dz_norm &&
                             fdz <= -settings_.eps_infeasible * dz_norm;
                if (valid && m > 0) {
                    const Vec adz = problem.A * dz;
                    for (Index j = 0; j < m && valid; ++j) {
                        if (std::isfinite(problem.upper(j)) &&
                            adz(j) > settings_.eps_infeasible * dz_norm)
                            valid = false;
                        if (std::isfinite(problem.lower(j)) &&
                            adz(j) < -settings_.eps_infeasible * dz_norm)
                            valid = false;
                    }
                }
                if (valid) {
                    sol.status = QpStatus::dual_infeasible;
                    break;
                }
            }
        }
    }

    sol.iterations = std::min(iter, settings_.max_iterations);
    sol.z = unscale_z(z);
    sol.y = unscale_y(y);
    sol.objective = 0.5 * sol.z.dot(problem.H * sol.z) + problem.f.dot(sol.z);

    if (settings_.warm_start && sol.status == QpStatus::solved) {
        warm_z_ = sol.z;
        warm_y_ = sol.y;
        has_warm_ = true;
    }
    return sol;
}

}  // namespace dcgrid
