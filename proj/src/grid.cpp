#include "dcgrid/grid.hpp"

#include <algorithm>
#include <set>
#include <vector>

namespace dcgrid {

void LineParams::validate() const {
    if (!(resistance > 0.0)) throw InvalidArgument("line resistance must be > 0");
    if (!(inductance > 0.0)) throw InvalidArgument("line inductance must be > 0");
}

void BusParams::validate() const {
    if (!(filter_resistance > 0.0)) throw InvalidArgument("filter resistance must be > 0");
    if (!(filter_inductance > 0.0)) throw InvalidArgument("filter inductance must be > 0");
    if (!(filter_capacitance > 0.0)) throw InvalidArgument("filter capacitance must be > 0");
}

GridTopology GridTopology::build(int node_count, const std::vector<LineSpec>& lines) {
    if (node_count < 1) throw InvalidArgument("node count must be >= 1");
    GridTopology topo;
    topo.node_count_ = node_count;
    std::set<int> seen_ids;
    for (const LineSpec& l : lines) {
        if (l.from < 0 || l.from >= node_count || l.to < 0 || l.to >= node_count)
            throw InvalidArgument("line " + std::to_string(l.id) + ": endpoint out of range");
        if (l.from == l.to)
            throw InvalidArgument("line " + std::to_string(l.id) + ": self-loop");
        if (!seen_ids.insert(l.id).second)
            throw InvalidArgument("duplicate line id " + std::to_string(l.id));
        topo.lines_.push_back(l);
    }
    topo.active_.assign(topo.lines_.size(), true);
    topo.check_connected();
    return topo;
}

void GridTopology::check_connected() const {
    std::vector<char> reached(node_count_, 0);
    std::vector<int> stack{0};
    reached[0] = 1;
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (size_t j = 0; j < lines_.size(); ++j) {
            if (!active_[j]) continue;
            const LineSpec& l = lines_[j];
            int other = -1;
            if (l.from == v) other = l.to;
            else if (l.to == v) other = l.from;
            if (other >= 0 && !reached[other]) {
                reached[other] = 1;
                stack.push_back(other);
            }
        }
    }
    for (int v = 0; v < node_count_; ++v)
        if (!reached[v])
            throw InvalidArgument("graph not connected: node " + std::to_string(v) +
                                  " unreachable over active lines");
}

int GridTopology::active_line_count() const {
    return static_cast<int>(std::count(active_.begin(), active_.end(), true));
}

int GridTopology::line_index(int line_id) const {
    for (size_t j = 0; j < lines_.size(); ++j)
        if (lines_[j].id == line_id) return static_cast<int>(j);
    throw InvalidArgument("unknown line id " + std::to_string(line_id));
}

const LineSpec& GridTopology::line(int line_id) const { return lines_[line_index(line_id)]; }

bool GridTopology::is_active(int line_id) const { return active_[line_index(line_id)]; }

Mat GridTopology::incidence() const {
    Mat m = Mat::Zero(node_count_, static_cast<Index>(lines_.size()));
    for (size_t j = 0; j < lines_.size(); ++j) {
        if (!active_[j]) continue;
        m(lines_[j].from, static_cast<Index>(j)) = -1.0;
        m(lines_[j].to, static_cast<Index>(j)) = 1.0;
    }
    return m;
}

GridTopology build_topology(int node_count, const std::vector<LineSpec>& lines) {
    return GridTopology::build(node_count, lines);
}

GridTopology remove_line(const GridTopology& topo, int line_id) {
    const int j = topo.line_index(line_id);
    if (!topo.active_[j])
        throw InvalidArgument("line " + std::to_string(line_id) + " already inactive");
    GridTopology out = topo;
    out.active_[j] = false;
    try {
        out.check_connected();
    } catch (const InvalidArgument&) {
        throw InvalidArgument("removing line " + std::to_string(line_id) +
                              " would disconnect the graph");
    }
    return out;
}

Mat loss_matrix(const GridTopology& topo, const std::vector<LineParams>& lines) {
    if (static_cast<int>(lines.size()) != topo.line_count())
        throw InvalidArgument("line parameter count does not match topology");
    const int n = topo.node_count();
    Mat q = Mat::Zero(n, n);
    for (int j = 0; j < topo.line_count(); ++j) {
        const LineSpec& l = topo.lines()[j];
        if (!topo.is_active(l.id)) continue;
        lines[j].validate();
        const double g = 1.0 / lines[j].resistance;
        q(l.from, l.from) += g;
        q(l.to, l.to) += g;
        q(l.from, l.to) -= g;
        q(l.to, l.from) -= g;
    }
    return q;
}

Mat admittance_matrix(const GridTopology& topo, const std::vector<LineParams>& lines,
                      const Vec& load_admittances) {
    if (load_admittances.size() != topo.node_count())
        throw InvalidArgument("load vector length does not match node count");
    if ((load_admittances.array() < 0.0).any())
        throw InvalidArgument("negative load admittance");
    Mat y = loss_matrix(topo, lines);
    y.diagonal() += load_admittances;
    return y;
}

NetworkMatrices network_matrices(const GridTopology& topo, const std::vector<LineParams>& lines,
                                 const Vec& load_admittances) {
    NetworkMatrices nm;
    nm.incidence = topo.incidence();
    nm.loss = loss_matrix(topo, lines);
    nm.admittance = nm.loss + Mat(load_admittances.asDiagonal());
    return nm;
}

}  // namespace dcgrid
