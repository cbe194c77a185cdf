#pragma once

#include "dcgrid/types.hpp"

#include <vector>

namespace dcgrid {

/// Series parameters of one power line.
struct LineParams {
    double resistance = 0.0;  // ohm, > 0
    double inductance = 0.0;  // henry, > 0

    void validate() const;
};

/// RLC filter of one bus (converter side). The load admittance is
/// time-varying and supplied separately by the scenario.
struct BusParams {
    double filter_resistance = 0.0;   // ohm, > 0
    double filter_inductance = 0.0;   // henry, > 0
    double filter_capacitance = 0.0;  // farad, > 0

    void validate() const;
};

struct LineSpec {
    int id = -1;
    int from = -1;
    int to = -1;
};

/// Directed graph of buses and lines. Immutable after construction; line
/// removal returns a new topology with the line flagged inactive so node
/// and line indexing stay stable across failures.
class GridTopology {
  public:
    static GridTopology build(int node_count, const std::vector<LineSpec>& lines);

    int node_count() const { return node_count_; }
    /// Number of declared lines, active or not.
    int line_count() const { return static_cast<int>(lines_.size()); }
    int active_line_count() const;

    const std::vector<LineSpec>& lines() const { return lines_; }
    const LineSpec& line(int line_id) const;
    bool is_active(int line_id) const;

    /// Column index of a line in incidence/matrix order (declaration order).
    int line_index(int line_id) const;

    /// n-by-m signed incidence matrix. Column j carries -1 at the from node
    /// and +1 at the to node of line j; inactive lines give a zero column.
    Mat incidence() const;

    friend GridTopology remove_line(const GridTopology& topo, int line_id);

  private:
    GridTopology() = default;
    void check_connected() const;

    int node_count_ = 0;
    std::vector<LineSpec> lines_;
    std::vector<bool> active_;
};

GridTopology build_topology(int node_count, const std::vector<LineSpec>& lines);

/// Marks a line inactive and revalidates connectivity. Derived matrices must
/// be rebuilt by callers.
GridTopology remove_line(const GridTopology& topo, int line_id);

/// Q_loss = M diag(1/R_l) M^T over active lines: the weighted Laplacian whose
/// quadratic form v' Q_loss v is the instantaneous line loss in watts.
Mat loss_matrix(const GridTopology& topo, const std::vector<LineParams>& lines);

/// Y_ad = Q_loss + diag(loads). Loads must be nonnegative (siemens).
Mat admittance_matrix(const GridTopology& topo, const std::vector<LineParams>& lines,
                      const Vec& load_admittances);

/// Incidence, loss and admittance matrices assembled together.
struct NetworkMatrices {
    Mat incidence;    // n x m
    Mat loss;         // n x n
    Mat admittance;   // n x n
};

NetworkMatrices network_matrices(const GridTopology& topo, const std::vector<LineParams>& lines,
                                 const Vec& load_admittances);

}  // namespace dcgrid
