#include "magtv/grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace magtv {

namespace {

std::string describe(const Vec3& p) {
    std::ostringstream os;
    os << "(" << p.x() << ", " << p.y() << ", " << p.z() << ")";
    return os.str();
}

}  // namespace

VoxelPartition::VoxelPartition(Box3 region, std::array<int, 3> resolution)
    : region_(region), res_(resolution) {
    for (int r : res_) {
        if (r <= 0) throw std::invalid_argument("voxel resolution must be positive");
    }
    if (!(region_.hi.array() > region_.lo.array()).all()) {
        throw std::invalid_argument("voxel region must have positive extent");
    }
}

Vec3 VoxelPartition::cell_size() const {
    return region_.extent().cwiseQuotient(
        Vec3(double(res_[0]), double(res_[1]), double(res_[2])));
}

int VoxelPartition::cell_index(const Vec3& p) const {
    if (!region_.contains(p)) {
        throw std::domain_error("point " + describe(p) +
                                " lies outside the partition region");
    }
    const Vec3 h = cell_size();
    int idx[3];
    for (int a = 0; a < 3; ++a) {
        // Half-open [lo, hi) cells, closed on the region's max face.
        int i = static_cast<int>(std::floor((p[a] - region_.lo[a]) / h[a]));
        i = std::clamp(i, 0, res_[a] - 1);
        // The division can land one cell off for points on or near a facet;
        // nudge so that lo + i*h <= p < lo + (i+1)*h holds as evaluated.
        if (region_.lo[a] + (i + 1) * h[a] <= p[a] && i + 1 <= res_[a] - 1) ++i;
        if (p[a] < region_.lo[a] + i * h[a] && i > 0) --i;
        idx[a] = i;
    }
    return (idx[2] * res_[1] + idx[1]) * res_[0] + idx[0];
}

Vec3 VoxelPartition::cell_center(int cell) const {
    if (cell < 0 || cell >= num_cells()) {
        throw std::out_of_range("cell index out of range");
    }
    const int nx = res_[0], ny = res_[1];
    const int ix = cell % nx;
    const int iy = (cell / nx) % ny;
    const int iz = cell / (nx * ny);
    const Vec3 h = cell_size();
    return region_.lo + Vec3((ix + 0.5) * h.x(), (iy + 0.5) * h.y(),
                             (iz + 0.5) * h.z());
}

VoxelPartition VoxelPartition::refined(int factor) const {
    if (factor < 2) throw std::invalid_argument("refinement factor must be >= 2");
    return VoxelPartition(
        region_, {res_[0] * factor, res_[1] * factor, res_[2] * factor});
}

DipoleGsmSpace::DipoleGsmSpace(VoxelPartition partition,
                               std::vector<Vec3> nodes)
    : partition_(std::move(partition)), nodes_(std::move(nodes)) {
    cell_nodes_.assign(partition_.num_cells(), {});
    std::map<std::tuple<double, double, double>, int> seen;
    for (int k = 0; k < static_cast<int>(nodes_.size()); ++k) {
        const Vec3& p = nodes_[k];
        if (!all_finite(p)) {
            throw std::invalid_argument("non-finite node " + describe(p));
        }
        if (!seen.emplace(std::make_tuple(p.x(), p.y(), p.z()), k).second) {
            throw std::invalid_argument("duplicate node " + describe(p));
        }
        cell_nodes_[partition_.cell_index(p)].push_back(k);
    }
    for (int c = 0; c < partition_.num_cells(); ++c) {
        if (cell_nodes_[c].empty()) {
            throw std::invalid_argument(
                "every voxel must contain a node; cell " + std::to_string(c) +
                " has none");
        }
    }
}

DipoleGsmSpace DipoleGsmSpace::cell_centers(VoxelPartition partition) {
    std::vector<Vec3> nodes;
    nodes.reserve(partition.num_cells());
    for (int c = 0; c < partition.num_cells(); ++c) {
        nodes.push_back(partition.cell_center(c));
    }
    return DipoleGsmSpace(std::move(partition), std::move(nodes));
}

DipoleGsmSpace DipoleGsmSpace::with_nodes(VoxelPartition partition,
                                          std::vector<Vec3> nodes) {
    return DipoleGsmSpace(std::move(partition), std::move(nodes));
}

int DipoleGsmSpace::owning_node(const Vec3& p) const {
    const int cell = partition_.cell_index(p);
    const auto& candidates = cell_nodes_[cell];
    int best = candidates.front();
    double best_d = (p - nodes_[best]).squaredNorm();
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const double d = (p - nodes_[candidates[i]]).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = candidates[i];
        }
    }
    return best;
}

int DipoleGsmSpace::node_at(const Vec3& p) const {
    if (!partition_.region().contains(p)) return -1;
    for (int k : cell_nodes_[partition_.cell_index(p)]) {
        if (nodes_[k] == p) return k;
    }
    return -1;
}

bool DipoleGsmSpace::supported_on_nodes(
    const DiscreteVectorMeasure& mu) const {
    for (const Atom& a : mu.atoms()) {
        if (!partition_.region().contains(a.position)) return false;
        if (node_at(a.position) < 0) return false;
    }
    return true;
}

DiscreteVectorMeasure project_onto_gsm(const DiscreteVectorMeasure& mu,
                                       const DipoleGsmSpace& space) {
    mu.require_inside(space.region());
    std::map<int, Vec3> sums;
    for (const Atom& a : mu.atoms()) {
        const int k = space.owning_node(a.position);
        auto it = sums.find(k);
        if (it == sums.end()) {
            sums.emplace(k, a.moment);
        } else {
            it->second += a.moment;
        }
    }
    std::vector<Atom> atoms;
    atoms.reserve(sums.size());
    for (const auto& [k, m] : sums) atoms.push_back(Atom{space.nodes()[k], m});
    return DiscreteVectorMeasure(std::move(atoms));
}

DiscreteVectorMeasure measure_from_stacked(const VectorXd& m,
                                           const DipoleGsmSpace& space) {
    if (m.size() != 3 * space.num_nodes()) {
        throw std::invalid_argument("stacked moment size does not match space");
    }
    std::vector<Atom> atoms;
    for (int k = 0; k < space.num_nodes(); ++k) {
        const Vec3 mk = m.segment<3>(3 * k);
        if (mk.norm() == 0.0) continue;
        atoms.push_back(Atom{space.nodes()[k], mk});
    }
    return DiscreteVectorMeasure(std::move(atoms));
}

VectorXd stacked_from_measure(const DiscreteVectorMeasure& mu,
                              const DipoleGsmSpace& space) {
    VectorXd m = VectorXd::Zero(3 * space.num_nodes());
    for (const Atom& a : mu.atoms()) {
        const int k = space.node_at(a.position);
        if (k < 0) {
            throw std::domain_error("atom at " + describe(a.position) +
                                    " is not on a node; project first");
        }
        m.segment<3>(3 * k) = a.moment;
    }
    return m;
}

}  // namespace magtv
