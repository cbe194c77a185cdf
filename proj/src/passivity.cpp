#include "dcgrid/passivity.hpp"

#include <Eigen/Eigenvalues>

namespace dcgrid {

DerivedGains derive_gains(const ControllerGains& gains, const BusParams& bus) {
    bus.validate();
    DerivedGains d;
    d.alpha = (gains.k1 - 1.0) / bus.filter_inductance;
    d.beta = (gains.k2 - bus.filter_resistance) / bus.filter_inductance;
    d.gamma = gains.k3 / bus.filter_inductance;
    return d;
}

PassivityReport validate_passivity(const ControllerGains& gains, const BusParams& bus) {
    bus.validate();
    PassivityReport report;
    const double k3_hi = (gains.k1 - 1.0) * (gains.k2 - bus.filter_resistance) /
                         bus.filter_inductance;
    report.k3_upper_bound = k3_hi;

    report.checks.push_back({"k1 < 1", 1.0 - gains.k1, gains.k1 < 1.0});
    report.checks.push_back({"k2 < R_f", bus.filter_resistance - gains.k2,
                             gains.k2 < bus.filter_resistance});
    report.checks.push_back({"k3 > 0", gains.k3, gains.k3 > 0.0});
    report.checks.push_back({"k3 < (k1-1)(k2-R_f)/L_f", k3_hi - gains.k3, gains.k3 < k3_hi});

    report.passed = true;
    for (const auto& c : report.checks) report.passed = report.passed && c.ok;
    return report;
}

StorageMatrix storage_matrix(const DerivedGains& derived, const BusParams& bus, double omega) {
    bus.validate();
    if (omega == 0.0) throw InvalidArgument("storage normalization omega must be nonzero");

    StorageMatrix s;
    s.omega = omega;
    s.matrix.setZero();
    s.matrix(0, 0) = bus.filter_capacitance;
    s.matrix(1, 1) = derived.beta / omega;
    s.matrix(1, 2) = derived.gamma / omega;
    s.matrix(2, 1) = derived.gamma / omega;
    s.matrix(2, 2) = derived.alpha * derived.gamma / omega;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s.matrix);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= 0.0)
        throw NumericalError(
            "storage matrix not positive definite (check omega sign and gain validity)");
    return s;
}

}  // namespace dcgrid
