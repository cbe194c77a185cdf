#include "dcgrid/passivity.hpp"

#include "dcgrid/model.hpp"
#include "support.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace dcgrid;

TEST_CASE("derived gains apply the exact formulas") {
    const BusParams bus{0.1, 2.0, 1e-3};
    const auto d = derive_gains({0.0, 0.0, 0.0}, bus);
    CHECK(d.alpha == doctest::Approx(-0.5));

    const BusParams bus2{0.1, 1.0, 1e-3};
    CHECK(derive_gains({0.0, 0.0, 0.0}, bus2).beta == doctest::Approx(-0.1));
    CHECK(derive_gains({0.0, 0.0, 0.05}, bus2).gamma == doctest::Approx(0.05));
}

TEST_CASE("passivity report evaluates the gain inequalities") {
    const BusParams bus{0.1, 1.0, 1e-3};

    auto rep = validate_passivity({0.0, 0.0, 0.05}, bus);
    CHECK(rep.passed);
    CHECK(rep.k3_upper_bound == doctest::Approx(0.1));

    rep = validate_passivity({0.0, 0.0, 0.1}, bus);  // k3 exactly at bound
    CHECK_FALSE(rep.passed);

    rep = validate_passivity({2.0, 0.0, 0.05}, bus);  // k1 >= 1
    CHECK_FALSE(rep.passed);
    CHECK_FALSE(rep.checks[0].ok);
    CHECK(rep.checks[0].margin < 0.0);
}

TEST_CASE("shipped default gains validate and give a PD storage matrix") {
    const auto bus = test::default_bus();
    const auto gains = test::default_gains();
    REQUIRE(validate_passivity(gains, bus).passed);

    const auto derived = derive_gains(gains, bus);
    // The defaults are normalized so that alpha*beta - gamma = 1, which makes
    // omega = -1 the exact storage normalization.
    CHECK(derived.alpha * derived.beta - derived.gamma == doctest::Approx(1.0));

    const auto s = storage_matrix(derived, bus, -1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s.matrix);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(s.matrix(0, 0) == bus.filter_capacitance);

    CHECK_THROWS_AS(storage_matrix(derived, bus, +1.0), NumericalError);
    CHECK_THROWS_AS(storage_matrix(derived, bus, 0.0), InvalidArgument);
}

TEST_CASE("storage matrix is PD for random validated gains") {
    test::Rng rng(101);
    const auto bus = test::default_bus();
    for (int trial = 0; trial < 1000; ++trial) {
        const auto gains = test::random_valid_gains(rng, bus);
        REQUIRE(validate_passivity(gains, bus).passed);
        const auto s = storage_matrix(derive_gains(gains, bus), bus, -1.0);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s.matrix);
        CHECK(es.eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("validation is monotone in k3") {
    test::Rng rng(102);
    const auto bus = test::default_bus();
    for (int trial = 0; trial < 200; ++trial) {
        const auto gains = test::random_valid_gains(rng, bus);
        if (!validate_passivity(gains, bus).passed) continue;
        ControllerGains smaller = gains;
        smaller.k3 = rng.uniform(1e-12, gains.k3);
        CHECK(validate_passivity(smaller, bus).passed);
    }
}

TEST_CASE("storage decreases along isolated-bus trajectories") {
    // Single bus, no lines, zero external current: d/dt S <= 0 within
    // integration tolerance (passivity inequality with zero input).
    const auto bus = test::default_bus();
    const auto gains = test::default_gains();
    const auto derived = derive_gains(gains, bus);
    const auto storage = storage_matrix(derived, bus, -1.0);

    const auto topo = build_topology(1, {});
    const Vec loads = Vec::Constant(1, 0.04);
    const auto model = assemble_reduced(topo, {}, {bus}, {derived}, loads);

    const Vec v_ref = Vec::Constant(1, 400.0);
    const Vec x_eq = equilibrium_state(model, v_ref);

    Vec x(3);
    x << x_eq(0) + 15.0, x_eq(1) - 4.0, x_eq(2) + 2.0;

    const double dt = 1e-4;
    double s_prev = storage.value(Eigen::Vector3d(x - x_eq));
    for (int k = 0; k < 20000; ++k) {
        x = rk4_step(model, x, v_ref, dt, 1);
        const double s = storage.value(Eigen::Vector3d(x - x_eq));
        CHECK((s - s_prev) / dt <= 1e-8);
        s_prev = s;
    }
    CHECK(s_prev < 1e-6);  // trajectory actually converged
}
