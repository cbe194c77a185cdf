#pragma once

#include "dcgrid/grid.hpp"
#include "dcgrid/types.hpp"

#include <string>
#include <vector>

namespace dcgrid {

/// State-feedback gains of the primary voltage controller,
/// v_t = k1 * v + k2 * i_f + k3 * e.
struct ControllerGains {
    double k1 = 0.0;  // dimensionless
    double k2 = 0.0;  // ohm
    double k3 = 0.0;  // ohm per second
};

/// Closed-loop bus coefficients: di_f/dt = alpha*v + beta*i_f + gamma*e.
struct DerivedGains {
    double alpha = 0.0;  // (k1 - 1) / L_f
    double beta = 0.0;   // (k2 - R_f) / L_f
    double gamma = 0.0;  // k3 / L_f
};

DerivedGains derive_gains(const ControllerGains& gains, const BusParams& bus);

struct PassivityCheck {
    std::string name;
    double margin = 0.0;  // > 0 means satisfied with room to spare
    bool ok = false;
};

/// Result of checking the gain inequalities that make a bus equilibrium
/// independent passive. Failures are report content, not exceptions.
struct PassivityReport {
    std::vector<PassivityCheck> checks;
    double k3_upper_bound = 0.0;
    bool passed = false;
};

PassivityReport validate_passivity(const ControllerGains& gains, const BusParams& bus);

/// Quadratic storage-function matrix of one bus over (v~, i_f~, e~) error
/// coordinates:
///   [[C_f, 0,       0      ],
///    [0,   beta/w,  gamma/w],
///    [0,   gamma/w, alpha*gamma/w]]
/// Construction verifies positive definiteness; the normalization scalar w
/// must be chosen (negative) so the lower block is PD.
struct StorageMatrix {
    Eigen::Matrix3d matrix;
    double omega = -1.0;

    double value(const Eigen::Vector3d& error) const { return error.dot(matrix * error); }
};

StorageMatrix storage_matrix(const DerivedGains& derived, const BusParams& bus,
                             double omega = -1.0);

}  // namespace dcgrid
