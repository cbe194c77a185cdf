#pragma once

#include "dcgrid/grid.hpp"
#include "dcgrid/passivity.hpp"
#include "dcgrid/types.hpp"

#include <vector>

namespace dcgrid {

enum class ModelKind { reduced, full };

/// Ordering of the stacked state vector: v block, i_f block, e block and,
/// for the full model only, the i_L line-current block.
struct StateLayout {
    int nodes = 0;
    int lines = 0;  // zero for the reduced model
    ModelKind kind = ModelKind::reduced;

    int dim() const { return 3 * nodes + (kind == ModelKind::full ? lines : 0); }
    int v_offset() const { return 0; }
    int if_offset() const { return nodes; }
    int e_offset() const { return 2 * nodes; }
    int il_offset() const { return 3 * nodes; }
};

/// Linear state-space model dx/dt = A x + B u with the load admittances
/// baked in at assembly time. Immutable after assembly.
struct ContinuousModel {
    Mat A;
    Mat B;
    StateLayout layout;
    Vec loads;
};

/// Forward-Euler discretization A_k = I + h A, B_k = h B.
struct DiscreteModel {
    Mat A_k;
    Mat B_k;
    double h = 0.0;
    ContinuousModel parent;
    double h_max = 0.0;
    bool stability_warning = false;  // set when h >= h_max
};

/// Reduced (quasi-stationary line) model: 3n states. Line currents are the
/// static map R_l^{-1} M^T v, so the loss Laplacian enters the v rows.
ContinuousModel assemble_reduced(const GridTopology& topo, const std::vector<LineParams>& lines,
                                 const std::vector<BusParams>& buses,
                                 const std::vector<DerivedGains>& gains, const Vec& loads);

/// Full model: 3n+m states including line currents, with the skew-symmetric
/// +/-M coupling between the v and i_L blocks. Inactive lines keep their
/// state slot but are decoupled and decay through -R_l/L_l.
ContinuousModel assemble_full(const GridTopology& topo, const std::vector<LineParams>& lines,
                              const std::vector<BusParams>& buses,
                              const std::vector<DerivedGains>& gains, const Vec& loads);

DiscreteModel discretize(const ContinuousModel& model, double h);

/// Largest forward-Euler step preserving discrete asymptotic stability:
/// min over eigenvalues a+jb of -2a / (a^2 + b^2). Requires a Hurwitz A.
double max_step_size(const ContinuousModel& model);

/// Symmetric PD solution of A_k' P A_k - P = -I via a direct dense solve
/// over the half-vectorized unknowns. Requires spectral radius of A_k < 1.
Mat lyapunov_matrix(const DiscreteModel& model);

Vec step(const DiscreteModel& model, const Vec& x, const Vec& u);

/// Steady state for a constant input: x = -A^{-1} B u.
Vec equilibrium_state(const ContinuousModel& model, const Vec& u);

/// Composite storage function of the interconnected grid in error
/// coordinates: sum of per-bus quadratic storages plus L_l,j * i_L,j^2 per
/// line. Expects a full-model state error vector.
double interconnected_storage(const Vec& state_error, const StateLayout& layout,
                              const std::vector<StorageMatrix>& bus_storage,
                              const std::vector<LineParams>& lines);

/// Classic fixed-step RK4 integrator for x' = A x + B u with u held constant.
Vec rk4_step(const ContinuousModel& model, const Vec& x, const Vec& u, double dt, int substeps);

}  // namespace dcgrid
