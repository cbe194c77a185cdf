#include "dcgrid/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace dcgrid {

namespace {

constexpr double kHurwitzTol = -1e-10;  // "strictly negative real part"

void check_inputs(const GridTopology& topo, const std::vector<LineParams>& lines,
                  const std::vector<BusParams>& buses, const std::vector<DerivedGains>& gains,
                  const Vec& loads) {
    const int n = topo.node_count();
    if (static_cast<int>(lines.size()) != topo.line_count())
        throw InvalidArgument("line parameter count mismatch");
    if (static_cast<int>(buses.size()) != n) throw InvalidArgument("bus parameter count mismatch");
    if (static_cast<int>(gains.size()) != n) throw InvalidArgument("gain count mismatch");
    if (loads.size() != n) throw InvalidArgument("load vector length mismatch");
    if ((loads.array() <= 0.0).any())
        throw InvalidArgument("model assembly requires strictly positive loads");
    for (const auto& b : buses) b.validate();
}

}  // namespace

ContinuousModel assemble_reduced(const GridTopology& topo, const std::vector<LineParams>& lines,
                                 const std::vector<BusParams>& buses,
                                 const std::vector<DerivedGains>& gains, const Vec& loads) {
    check_inputs(topo, lines, buses, gains, loads);
    const int n = topo.node_count();

    ContinuousModel m;
    m.layout = StateLayout{n, 0, ModelKind::reduced};
    m.loads = loads;

    const Mat q_loss = loss_matrix(topo, lines);

    m.A = Mat::Zero(3 * n, 3 * n);
    m.B = Mat::Zero(3 * n, n);
    for (int i = 0; i < n; ++i) {
        const double c_inv = 1.0 / buses[i].filter_capacitance;
        // dv/dt = (i_f - Y v - Q_loss v) / C_f
        m.A.block(i, 0, 1, n) = -c_inv * q_loss.row(i);
        m.A(i, i) -= c_inv * loads(i);
        m.A(i, n + i) = c_inv;
        // di_f/dt = alpha v + beta i_f + gamma e
        m.A(n + i, i) = gains[i].alpha;
        m.A(n + i, n + i) = gains[i].beta;
        m.A(n + i, 2 * n + i) = gains[i].gamma;
        // de/dt = v_ref - v
        m.A(2 * n + i, i) = -1.0;
        m.B(2 * n + i, i) = 1.0;
    }
    return m;
}

ContinuousModel assemble_full(const GridTopology& topo, const std::vector<LineParams>& lines,
                              const std::vector<BusParams>& buses,
                              const std::vector<DerivedGains>& gains, const Vec& loads) {
    check_inputs(topo, lines, buses, gains, loads);
    const int n = topo.node_count();
    const int ml = topo.line_count();

    ContinuousModel m;
    m.layout = StateLayout{n, ml, ModelKind::full};
    m.loads = loads;

    const Mat incidence = topo.incidence();  // zero columns for inactive lines

    const int dim = 3 * n + ml;
    m.A = Mat::Zero(dim, dim);
    m.B = Mat::Zero(dim, n);
    for (int i = 0; i < n; ++i) {
        const double c_inv = 1.0 / buses[i].filter_capacitance;
        // dv/dt = (i_f - Y v - M i_L) / C_f
        m.A(i, i) = -c_inv * loads(i);
        m.A(i, n + i) = c_inv;
        m.A.block(i, 3 * n, 1, ml) = -c_inv * incidence.row(i);
        m.A(n + i, i) = gains[i].alpha;
        m.A(n + i, n + i) = gains[i].beta;
        m.A(n + i, 2 * n + i) = gains[i].gamma;
        m.A(2 * n + i, i) = -1.0;
        m.B(2 * n + i, i) = 1.0;
    }
    for (int j = 0; j < ml; ++j) {
        lines[j].validate();
        // L_l di_L/dt = -R_l i_L + M^T v; inactive lines have a zero
        // incidence column and just decay.
        m.A.block(3 * n + j, 0, 1, n) = incidence.col(j).transpose() / lines[j].inductance;
        m.A(3 * n + j, 3 * n + j) = -lines[j].resistance / lines[j].inductance;
    }
    return m;
}

double max_step_size(const ContinuousModel& model) {
    Eigen::EigenSolver<Mat> es(model.A, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
    double h_max = kInf;
    for (Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double a = es.eigenvalues()(i).real();
        const double b = es.eigenvalues()(i).imag();
        if (a >= kHurwitzTol)
            throw NumericalError(
                "model is not strictly stable (eigenvalue real part >= 0); "
                "check gains and loads");
        h_max = std::min(h_max, -2.0 * a / (a * a + b * b));
    }
    return h_max;
}

DiscreteModel discretize(const ContinuousModel& model, double h) {
    if (!(h > 0.0)) throw InvalidArgument("step size h must be > 0");
    DiscreteModel d;
    d.h = h;
    d.A_k = Mat::Identity(model.A.rows(), model.A.cols()) + h * model.A;
    d.B_k = h * model.B;
    d.parent = model;
    d.h_max = max_step_size(model);
    d.stability_warning = h >= d.h_max;
    return d;
}

Mat lyapunov_matrix(const DiscreteModel& model) {
    const Mat& a = model.A_k;
    const Index s = a.rows();

    {
        Eigen::EigenSolver<Mat> es(a, /*computeEigenvectors=*/false);
        if (es.info() != Eigen::Success) throw NumericalError("eigenvalue computation failed");
        if (es.eigenvalues().cwiseAbs().maxCoeff() >= 1.0)
            throw NumericalError("spectral radius of A_k is >= 1; no Lyapunov solution");
    }

    // Unknowns: vech(P), the upper triangle (i <= j). Equation (i,j), i <= j:
    //   P_ij - (A' P A)_ij = I_ij
    // with (A' P A)_ij = sum_{k,l} A_ki P_kl A_lj expanded over k <= l.
    const Index nv = s * (s + 1) / 2;
    Mat sys = Mat::Zero(nv, nv);
    Vec rhs = Vec::Zero(nv);

    auto vech_index = [s](Index i, Index j) {  // i <= j
        return j * (j + 1) / 2 + i;
    };

    for (Index j = 0; j < s; ++j) {
        for (Index i = 0; i <= j; ++i) {
            const Index row = vech_index(i, j);
            rhs(row) = (i == j) ? 1.0 : 0.0;
            for (Index l = 0; l < s; ++l) {
                for (Index k = 0; k <= l; ++k) {
                    const Index col = vech_index(k, l);
                    double coeff = -(a(k, i) * a(l, j));
                    if (k != l) coeff -= a(l, i) * a(k, j);
                    if (k == i && l == j) coeff += 1.0;
                    sys(row, col) += coeff;
                }
            }
        }
    }

    Eigen::PartialPivLU<Mat> lu(sys);
    const Vec sol = lu.solve(rhs);

    Mat p(s, s);
    for (Index j = 0; j < s; ++j)
        for (Index i = 0; i <= j; ++i) {
            p(i, j) = sol(vech_index(i, j));
            p(j, i) = p(i, j);
        }

    const double residual = (a.transpose() * p * a - p + Mat::Identity(s, s)).norm();
    if (!(residual <= 1e-8 * (1.0 + p.norm())))
        throw NumericalError("Lyapunov solve residual too large");

    Eigen::SelfAdjointEigenSolver<Mat> es(p, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError("Lyapunov solution not positive definite");
    return p;
}

Vec step(const DiscreteModel& model, const Vec& x, const Vec& u) {
    if (x.size() != model.A_k.rows() || u.size() != model.B_k.cols())
        throw InvalidArgument("state or input dimension mismatch");
    return model.A_k * x + model.B_k * u;
}

Vec equilibrium_state(const ContinuousModel& model, const Vec& u) {
    if (u.size() != model.B.cols()) throw InvalidArgument("input dimension mismatch");
    return model.A.partialPivLu().solve(-model.B * u);
}

double interconnected_storage(const Vec& state_error, const StateLayout& layout,
                              const std::vector<StorageMatrix>& bus_storage,
                              const std::vector<LineParams>& lines) {
    if (layout.kind != ModelKind::full)
        throw InvalidArgument("interconnected storage expects a full-model layout");
    if (state_error.size() != layout.dim()) throw InvalidArgument("state dimension mismatch");
    if (static_cast<int>(bus_storage.size()) != layout.nodes)
        throw InvalidArgument("storage matrix count mismatch");
    if (static_cast<int>(lines.size()) != layout.lines)
        throw InvalidArgument("line parameter count mismatch");

    double v = 0.0;
    const int n = layout.nodes;
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d err(state_error(i), state_error(n + i), state_error(2 * n + i));
        v += bus_storage[i].value(err);
    }
    for (int j = 0; j < layout.lines; ++j) {
        const double il = state_error(3 * n + j);
        v += lines[j].inductance * il * il;
    }
    return v;
}

Vec rk4_step(const ContinuousModel& model, const Vec& x, const Vec& u, double dt, int substeps) {
    if (substeps < 1) throw InvalidArgument("substeps must be >= 1");
    const double hs = dt / substeps;
    const Vec bu = model.B * u;
    Vec xs = x;
    for (int s = 0; s < substeps; ++s) {
        const Vec k1 = model.A * xs + bu;
        const Vec k2 = model.A * (xs + 0.5 * hs * k1) + bu;
        const Vec k3 = model.A * (xs + 0.5 * hs * k2) + bu;
        const Vec k4 = model.A * (xs + hs * k3) + bu;
        xs += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return xs;
}

}  // namespace dcgrid
