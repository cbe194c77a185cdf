#include "dcgrid/steady_state.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

namespace dcgrid {

namespace {

Vec implied_power(const Vec& v, const Mat& y_ad) { return -(y_ad * v).cwiseProduct(v); }

double power_scale(const OperatingLimits& lim) {
    double s = 1.0;
    for (Index i = 0; i < lim.p_min.size(); ++i) {
        if (std::isfinite(lim.p_min(i))) s = std::max(s, std::abs(lim.p_min(i)));
        if (std::isfinite(lim.p_max(i))) s = std::max(s, std::abs(lim.p_max(i)));
    }
    return s;
}

double box_violation(const Vec& p, const OperatingLimits& lim) {
    double viol = 0.0;
    for (Index i = 0; i < p.size(); ++i) {
        viol = std::max(viol, lim.p_min(i) - p(i));
        viol = std::max(viol, p(i) - lim.p_max(i));
    }
    return std::max(viol, 0.0);
}

/// Gradient of p_i(v) = -(Y v)_i v_i:  -( (Yv)_i e_i + v_i Y col_i ).
Vec power_gradient(const Vec& v, const Mat& y_ad, const Vec& yv, Index i) {
    Vec g = -v(i) * y_ad.col(i);
    g(i) -= yv(i);
    return g;
}

struct PenaltyEval {
    double objective = 0.0;   // v'Qv only
    double penalized = 0.0;   // objective + mu * violation sum
    Vec gradient;             // subgradient of the penalized function
};

PenaltyEval eval_penalty(const Vec& v, const Mat& q_loss, const Mat& y_ad,
                         const OperatingLimits& lim, double mu, bool want_gradient) {
    PenaltyEval out;
    const Vec qv = q_loss * v;
    const Vec yv = y_ad * v;
    out.objective = v.dot(qv);
    out.penalized = out.objective;
    if (want_gradient) out.gradient = 2.0 * qv;
    const Vec p = -yv.cwiseProduct(v);
    for (Index i = 0; i < v.size(); ++i) {
        const double below = lim.p_min(i) - p(i);
        const double above = p(i) - lim.p_max(i);
        if (below > 0.0) {
            out.penalized += mu * below;
            if (want_gradient) out.gradient -= mu * power_gradient(v, y_ad, yv, i);
        } else if (above > 0.0) {
            out.penalized += mu * above;
            if (want_gradient) out.gradient += mu * power_gradient(v, y_ad, yv, i);
        }
    }
    return out;
}

struct PgResult {
    Vec v;
    int iterations = 0;
};

PgResult projected_gradient(Vec v, const Mat& q_loss, const Mat& y_ad,
                            const OperatingLimits& lim, const SsSettings& cfg) {
    const double p_tol = cfg.feasibility_tol * power_scale(lim);
    double mu = cfg.penalty_initial;
    int total_iters = 0;
    double step = 1.0;
    for (int round = 0; round < cfg.penalty_rounds; ++round) {
        for (int it = 0; it < cfg.max_iterations; ++it) {
            ++total_iters;
            const auto cur = eval_penalty(v, q_loss, y_ad, lim, mu, true);
            const double gnorm = cur.gradient.cwiseAbs().maxCoeff();
            if (gnorm < 1e-300) break;
            // Armijo backtracking on the projected step.
            bool moved = false;
            step = std::min(step * 4.0, 1e3 / gnorm);
            for (int bt = 0; bt < 60; ++bt) {
                const Vec cand =
                    clamp_box(v - step * cur.gradient, lim.v_min, lim.v_max);
                const Vec dir = cand - v;
                if (dir.cwiseAbs().maxCoeff() <= cfg.step_tolerance * (1.0 + v.norm())) break;
                const auto trial = eval_penalty(cand, q_loss, y_ad, lim, mu, false);
                if (trial.penalized <= cur.penalized + 1e-4 * cur.gradient.dot(dir)) {
                    v = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if (!moved) break;  // projected-stationary at this penalty level
        }
        if (box_violation(implied_power(v, y_ad), lim) <= p_tol) break;
        mu *= cfg.penalty_growth;
    }
    return {v, total_iters};
}

struct ActiveSet {
    std::vector<Index> fixed_v;     // coordinates pinned at a voltage bound
    std::vector<double> fixed_val;
    std::vector<Index> active_p;    // power constraints on a bound
    std::vector<double> p_sign;     // +1 upper bound active, -1 lower
    std::vector<double> p_value;    // the bound itself
};

ActiveSet detect_active_set(const Vec& v, const Mat& y_ad, const OperatingLimits& lim) {
    ActiveSet as;
    const Index n = v.size();
    const Vec p = implied_power(v, y_ad);
    const double ps = power_scale(lim);
    for (Index i = 0; i < n; ++i) {
        const double width = lim.v_max(i) - lim.v_min(i);
        const double tol = 1e-6 * std::max(width, 1.0);
        if (v(i) - lim.v_min(i) <= tol) {
            as.fixed_v.push_back(i);
            as.fixed_val.push_back(lim.v_min(i));
        } else if (lim.v_max(i) - v(i) <= tol) {
            as.fixed_v.push_back(i);
            as.fixed_val.push_back(lim.v_max(i));
        }
    }
    for (Index i = 0; i < n; ++i) {
        const double tol = 1e-6 * ps;
        if (std::isfinite(lim.p_max(i)) && std::abs(p(i) - lim.p_max(i)) <= tol) {
            as.active_p.push_back(i);
            as.p_sign.push_back(+1.0);
            as.p_value.push_back(lim.p_max(i));
        } else if (std::isfinite(lim.p_min(i)) && std::abs(p(i) - lim.p_min(i)) <= tol) {
            as.active_p.push_back(i);
            as.p_sign.push_back(-1.0);
            as.p_value.push_back(lim.p_min(i));
        }
    }
    return as;
}

/// Newton refinement of the KKT system on the detected active set:
/// free-coordinate stationarity of v'Qv + sum nu_i s_i (p_i(v) - bound_i)
/// plus the active power constraints themselves. Returns false when the
/// refinement fails or the multipliers come out with the wrong sign.
bool polish_active_set(Vec& v, const Mat& q_loss, const Mat& y_ad, const OperatingLimits& lim,
                       const ActiveSet& as) {
    const Index n = v.size();
    std::vector<char> is_fixed(n, 0);
    for (size_t k = 0; k < as.fixed_v.size(); ++k) {
        is_fixed[as.fixed_v[k]] = 1;
        v(as.fixed_v[k]) = as.fixed_val[k];
    }
    std::vector<Index> free_idx;
    for (Index i = 0; i < n; ++i)
        if (!is_fixed[i]) free_idx.push_back(i);

    const Index nf = static_cast<Index>(free_idx.size());
    const Index na = static_cast<Index>(as.active_p.size());
    if (na == 0) return true;  // box-only active set: PG + clamp already exact
    if (nf + na == 0) return true;

    Vec nu = Vec::Zero(na);
    const double scale = std::max(1.0, power_scale(lim));

    for (int newton = 0; newton < 60; ++newton) {
        const Vec yv = y_ad * v;
        const Vec qv = q_loss * v;

        Vec residual(nf + na);
        // Stationarity on free coordinates.
        Vec grad_l = 2.0 * qv;
        for (Index a = 0; a < na; ++a)
            grad_l += nu(a) * as.p_sign[a] * power_gradient(v, y_ad, yv, as.active_p[a]);
        for (Index k = 0; k < nf; ++k) residual(k) = grad_l(free_idx[k]);
        // Active power constraints.
        for (Index a = 0; a < na; ++a) {
            const Index i = as.active_p[a];
            residual(nf + a) = as.p_sign[a] * (-yv(i) * v(i) - as.p_value[a]);
        }
        if (residual.cwiseAbs().maxCoeff() <= 1e-10 * scale) break;

        // Jacobian.
        Mat jac = Mat::Zero(nf + na, nf + na);
        Mat hess = 2.0 * q_loss;  // plus sum nu_a s_a Hess(p_i)
        for (Index a = 0; a < na; ++a) {
            const Index i = as.active_p[a];
            const double w = nu(a) * as.p_sign[a];
            hess.row(i) -= w * y_ad.row(i);
            hess.col(i) -= w * y_ad.col(i);
        }
        for (Index r = 0; r < nf; ++r)
            for (Index c = 0; c < nf; ++c) jac(r, c) = hess(free_idx[r], free_idx[c]);
        for (Index a = 0; a < na; ++a) {
            const Index i = as.active_p[a];
            const Vec gp = as.p_sign[a] * power_gradient(v, y_ad, yv, i);
            for (Index r = 0; r < nf; ++r) {
                jac(r, nf + a) = gp(free_idx[r]);
                jac(nf + a, r) = gp(free_idx[r]);
            }
        }

        Eigen::FullPivLU<Mat> lu(jac);
        if (!lu.isInvertible()) return false;
        const Vec delta = lu.solve(-residual);
        if (!delta.allFinite()) return false;
        for (Index k = 0; k < nf; ++k) v(free_idx[k]) += delta(k);
        nu += delta.tail(na);
    }

    // Multiplier signs must agree with minimization over inequality actives.
    for (Index a = 0; a < na; ++a)
        if (nu(a) < -1e-9) return false;
    // Stay inside the voltage box.
    for (Index i = 0; i < n; ++i)
        if (v(i) < lim.v_min(i) - 1e-9 || v(i) > lim.v_max(i) + 1e-9) return false;
    return true;
}

double projected_kkt_residual(const Vec& v, const Mat& q_loss, const Mat& y_ad,
                              const OperatingLimits& lim) {
    // Distance between v and the box projection of a gradient step of the
    // penalized objective with active-set multipliers approximated by the
    // exact-penalty slopes; adequate as a convergence diagnostic.
    const auto eval = eval_penalty(v, q_loss, y_ad, lim, 1.0, true);
    const Vec proj = clamp_box(v - eval.gradient, lim.v_min, lim.v_max);
    return (v - proj).cwiseAbs().maxCoeff();
}

}  // namespace

void OperatingLimits::validate(int nodes) const {
    const auto check_pair = [nodes](const Vec& lo, const Vec& hi, const char* what) {
        if (lo.size() != nodes || hi.size() != nodes)
            throw InvalidArgument(std::string(what) + " box length mismatch");
        for (Index i = 0; i < lo.size(); ++i)
            if (!(lo(i) <= hi(i)))
                throw InvalidArgument(std::string(what) + " box empty at node " +
                                      std::to_string(i));
    };
    check_pair(v_min, v_max, "voltage");
    check_pair(p_min, p_max, "power");
    check_pair(i_min, i_max, "current");
    if ((v_min.array() <= 0.0).any()) throw InvalidArgument("v_min must be > 0");
}

Vec power_balance_residual(const Vec& v, const Vec& p, const Mat& y_ad) {
    if (v.size() != p.size() || y_ad.rows() != v.size())
        throw InvalidArgument("power balance: dimension mismatch");
    return p + (y_ad * v).cwiseProduct(v);
}

SetpointSolution solve_opt_ss(const Mat& q_loss, const Mat& y_ad, const OperatingLimits& limits,
                              const SsSettings& settings) {
    const Index n = q_loss.rows();
    limits.validate(static_cast<int>(n));

    const double p_tol = settings.feasibility_tol * power_scale(limits);

    auto finish = [&](Vec v, int start, int iters) {
        SetpointSolution s;
        s.v = v;
        s.p = implied_power(v, y_ad);
        s.objective = quadratic_form(q_loss, v);
        s.worst_violation = box_violation(s.p, limits);
        s.feasible = s.worst_violation <= p_tol;
        s.start_index = start;
        s.iterations = iters;
        s.kkt_residual = projected_kkt_residual(v, q_loss, y_ad, limits);
        return s;
    };

    // Degenerate zero-loss tie-break: a uniform voltage at the midpoint of
    // the tightest (intersection) box, when the implied powers allow it.
    {
        const double lo = limits.v_min.maxCoeff();
        const double hi = limits.v_max.minCoeff();
        if (lo <= hi) {
            const Vec uniform = Vec::Constant(n, 0.5 * (lo + hi));
            if (box_violation(implied_power(uniform, y_ad), limits) <= p_tol)
                return finish(uniform, -1, 0);
        }
    }

    std::vector<Vec> starts;
    starts.push_back(0.5 * (limits.v_min + limits.v_max));
    starts.push_back(limits.v_min);
    starts.push_back(limits.v_max);
    Vec alt1(n), alt2(n);
    for (Index i = 0; i < n; ++i) {
        alt1(i) = (i % 2 == 0) ? limits.v_min(i) : limits.v_max(i);
        alt2(i) = (i % 2 == 0) ? limits.v_max(i) : limits.v_min(i);
    }
    starts.push_back(alt1);
    starts.push_back(alt2);
    starts.resize(std::min<size_t>(starts.size(), std::max(settings.multistarts, 1)));

    SetpointSolution best;
    bool have_best = false;
    SetpointSolution best_infeasible;
    double least_violation = kInf;

    for (size_t s = 0; s < starts.size(); ++s) {
        auto pg = projected_gradient(starts[s], q_loss, y_ad, limits, settings);
        Vec v = pg.v;
        if (settings.polish) {
            Vec polished = v;
            const auto as = detect_active_set(polished, y_ad, limits);
            if (polish_active_set(polished, q_loss, y_ad, limits, as)) {
                const double obj_new = quadratic_form(q_loss, polished);
                const double obj_old = quadratic_form(q_loss, v);
                if (box_violation(implied_power(polished, y_ad), limits) <= p_tol &&
                    obj_new <= obj_old + 1e-9 * (1.0 + std::abs(obj_old)))
                    v = polished;
            }
        }
        auto sol = finish(v, static_cast<int>(s), pg.iterations);
        if (sol.feasible) {
            if (!have_best || sol.objective < best.objective) {
                best = sol;
                have_best = true;
            }
        } else if (sol.worst_violation < least_violation) {
            least_violation = sol.worst_violation;
            best_infeasible = sol;
        }
    }

    if (have_best) return best;
    if (least_violation < kInf) return best_infeasible;  // feasible == false
    throw NumericalError("opt_ss produced no candidate solutions");
}

SetpointSolution solve_opt_ss(const GridTopology& topo, const std::vector<LineParams>& lines,
                              const Vec& loads, const OperatingLimits& limits,
                              const SsSettings& settings) {
    const Mat q = loss_matrix(topo, lines);
    const Mat y = admittance_matrix(topo, lines, loads);
    return solve_opt_ss(q, y, limits, settings);
}

SetpointSolution brute_force_opt_ss(const Mat& q_loss, const Mat& y_ad,
                                    const OperatingLimits& limits, double resolution) {
    const Index n = q_loss.rows();
    if (n > 4) throw InvalidArgument("brute force enumeration limited to 4 nodes");
    if (!(resolution > 0.0)) throw InvalidArgument("resolution must be > 0");
    limits.validate(static_cast<int>(n));

    std::vector<std::vector<double>> grids(n);
    for (Index i = 0; i < n; ++i) {
        const double lo = limits.v_min(i), hi = limits.v_max(i);
        for (double x = lo; x < hi; x += resolution) grids[i].push_back(x);
        grids[i].push_back(hi);
    }

    const double p_tol = 0.0;  // enumeration uses exact box membership
    double best_obj = kInf;
    Vec best_v;

    std::vector<size_t> odo(static_cast<size_t>(std::max<Index>(n - 1, 0)), 0);
    const Index inner = n - 1;

    Vec v(n);
    bool done = false;
    while (!done) {
        for (Index i = 0; i < inner; ++i) v(i) = grids[i][odo[i]];
        v(inner) = grids[inner].front();

        // Fresh accumulators per odometer step; incremental along the
        // innermost dimension only.
        Vec yv = y_ad * v;
        Vec qv = q_loss * v;
        double obj = v.dot(qv);

        const auto& inner_grid = grids[inner];
        for (size_t t = 0;; ++t) {
            bool ok = true;
            for (Index i = 0; i < n; ++i) {
                const double p = -yv(i) * v(i);
                if (p < limits.p_min(i) - p_tol || p > limits.p_max(i) + p_tol) {
                    ok = false;
                    break;
                }
            }
            if (ok && obj < best_obj) {
                best_obj = obj;
                best_v = v;
            }
            if (t + 1 >= inner_grid.size()) break;
            const double delta = inner_grid[t + 1] - inner_grid[t];
            obj += 2.0 * delta * qv(inner) + delta * delta * q_loss(inner, inner);
            yv += delta * y_ad.col(inner);
            qv += delta * q_loss.col(inner);
            v(inner) = inner_grid[t + 1];
        }

        if (inner == 0) break;
        Index d = 0;
        while (true) {
            if (++odo[d] < grids[d].size()) break;
            odo[d] = 0;
            if (++d >= inner) {
                done = true;
                break;
            }
        }
    }

    SetpointSolution s;
    if (!std::isfinite(best_obj)) {
        s.feasible = false;
        s.worst_violation = kInf;
        return s;
    }
    s.v = best_v;
    s.p = implied_power(best_v, y_ad);
    s.objective = quadratic_form(q_loss, best_v);
    s.feasible = true;
    s.worst_violation = box_violation(s.p, limits);
    return s;
}

bool check_setpoint(const Mat& q_loss, const Mat& y_ad, const OperatingLimits& limits,
                    const SetpointSolution& sol, double balance_tol, double box_tol) {
    if (!sol.feasible) return false;
    const Index n = q_loss.rows();
    if (sol.v.size() != n || sol.p.size() != n) return false;

    const double scale = std::max(1.0, power_scale(limits));
    const Vec residual = power_balance_residual(sol.v, sol.p, y_ad);
    if (residual.cwiseAbs().maxCoeff() > balance_tol * scale) return false;

    for (Index i = 0; i < n; ++i) {
        if (sol.v(i) < limits.v_min(i) - box_tol || sol.v(i) > limits.v_max(i) + box_tol)
            return false;
        if (sol.p(i) < limits.p_min(i) - box_tol * scale ||
            sol.p(i) > limits.p_max(i) + box_tol * scale)
            return false;
    }
    const double obj = quadratic_form(q_loss, sol.v);
    return std::abs(obj - sol.objective) <= 1e-9 * (1.0 + std::abs(obj));
}

}  // namespace dcgrid
