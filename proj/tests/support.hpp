#pragma once

// Shared helpers for the test suites: deterministic RNG, random grids and
// gains, the shipped default parameter set, and independent oracles.

#include "dcgrid/grid.hpp"
#include "dcgrid/model.hpp"
#include "dcgrid/passivity.hpp"
#include "dcgrid/qp.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace dcgrid::test {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    /// Uniform in [lo, hi). Derived from raw 64-bit draws so sequences are
    /// identical across standard libraries.
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(gen_() % static_cast<std::uint64_t>(hi - lo + 1));
    }
    std::mt19937_64& raw() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

/// Bus and gain defaults matching the shipped network file.
inline BusParams default_bus() { return BusParams{0.3, 0.1, 2.0e-3}; }
inline ControllerGains default_gains() { return ControllerGains{0.95, -0.7, 0.4}; }

/// CIGRE-shaped 11-node / 12-line topology (0-based node indices).
inline std::vector<LineSpec> cigre_lines() {
    return {
        {1, 0, 1},  {2, 1, 2},  {3, 2, 3},  {4, 3, 4},   {5, 4, 5},  {6, 5, 6},
        {7, 6, 7},  {8, 7, 8},  {9, 8, 9},  {10, 9, 10}, {11, 2, 7},  // node 3 - node 8
        {12, 3, 10},                                                  // node 4 - node 11
    };
}

/// Line parameters matching the shipped network file (ohm; tau = L/R = 60 us).
inline std::vector<LineParams> default_cigre_line_params() {
    const double r[12] = {45, 50, 55, 60, 65, 70, 55, 50, 60, 65, 75, 80};
    std::vector<LineParams> lines;
    for (double ri : r) lines.push_back({ri, ri * 6e-5});
    return lines;
}

/// Nominal load admittances matching the shipped network file (siemens).
inline Vec default_cigre_loads() {
    Vec y(11);
    y << 0.045, 0.050, 0.030, 0.025, 0.055, 0.035, 0.060, 0.030, 0.040, 0.025, 0.045;
    return y;
}

/// Random connected topology on n nodes: a random spanning tree plus a few
/// extra edges.
inline GridTopology random_connected_topology(Rng& rng, int n) {
    std::vector<LineSpec> lines;
    int id = 0;
    for (int v = 1; v < n; ++v) lines.push_back({id++, rng.uniform_int(0, v - 1), v});
    const int extra = rng.uniform_int(0, std::max(0, n - 2));
    for (int k = 0; k < extra; ++k) {
        const int a = rng.uniform_int(0, n - 1);
        const int b = rng.uniform_int(0, n - 1);
        if (a != b) lines.push_back({id++, a, b});
    }
    return build_topology(n, lines);
}

inline std::vector<LineParams> random_line_params(Rng& rng, const GridTopology& topo) {
    std::vector<LineParams> lines;
    for (int j = 0; j < topo.line_count(); ++j) {
        const double r = rng.uniform(40.0, 80.0);
        lines.push_back({r, r * 6e-5});
    }
    return lines;
}

/// Gains drawn away from the Prop. 1 boundaries so they validate robustly.
inline ControllerGains random_valid_gains(Rng& rng, const BusParams& bus) {
    ControllerGains g;
    g.k1 = rng.uniform(-3.0, 0.9);
    g.k2 = rng.uniform(-3.0, bus.filter_resistance - 0.05);
    const double hi = (g.k1 - 1.0) * (g.k2 - bus.filter_resistance) / bus.filter_inductance;
    g.k3 = rng.uniform(0.05, 0.95) * hi;
    return g;
}

/// Line losses summed edge by edge: sum_j (v_to - v_from)^2 / R_j over
/// active lines. Independent of the Laplacian assembly.
inline double edgewise_losses(const GridTopology& topo, const std::vector<LineParams>& lines,
                              const Vec& v) {
    double total = 0.0;
    for (int j = 0; j < topo.line_count(); ++j) {
        const LineSpec& l = topo.lines()[j];
        if (!topo.is_active(l.id)) continue;
        const double dv = v(l.to) - v(l.from);
        total += dv * dv / lines[j].resistance;
    }
    return total;
}

/// Exhaustive active-set solution of min 1/2 z'Hz + f'z s.t. Az <= u with
/// strictly convex H and few constraints: solves the equality-constrained
/// KKT system for every subset of active constraints and keeps the feasible
/// optimum. Independent of the iterative solver.
struct ActiveSetResult {
    Vec z;
    double objective = std::numeric_limits<double>::infinity();
    bool found = false;
};

inline ActiveSetResult active_set_enumeration(const Mat& h, const Vec& f, const Mat& a,
                                              const Vec& u) {
    const Index n = h.rows();
    const Index m = a.rows();
    ActiveSetResult best;
    for (unsigned mask = 0; mask < (1u << m); ++mask) {
        std::vector<Index> act;
        for (Index j = 0; j < m; ++j)
            if (mask & (1u << j)) act.push_back(j);
        const Index k = static_cast<Index>(act.size());
        Mat kkt(n + k, n + k);
        kkt.setZero();
        kkt.topLeftCorner(n, n) = h;
        Vec rhs(n + k);
        rhs.head(n) = -f;
        for (Index i = 0; i < k; ++i) {
            kkt.block(n + i, 0, 1, n) = a.row(act[i]);
            kkt.block(0, n + i, n, 1) = a.row(act[i]).transpose();
            rhs(n + i) = u(act[i]);
        }
        Eigen::FullPivLU<Mat> lu(kkt);
        if (!lu.isInvertible()) continue;
        const Vec sol = lu.solve(rhs);
        const Vec z = sol.head(n);
        const Vec y = sol.tail(k);
        if (m > 0 && ((a * z - u).array() > 1e-9).any()) continue;
        if (k > 0 && (y.array() < -1e-9).any()) continue;
        const double obj = 0.5 * z.dot(h * z) + f.dot(z);
        if (obj < best.objective) {
            best.objective = obj;
            best.z = z;
            best.found = true;
        }
    }
    return best;
}

}  // namespace dcgrid::test
