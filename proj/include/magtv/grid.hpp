#pragma once

#include <array>
#include <vector>

#include "magtv/geometry.hpp"
#include "magtv/measure.hpp"

namespace magtv {

/// Uniform voxel grid over an axis-aligned region.
///
/// Cells follow the half-open convention [lo, hi) per axis, closed on the
/// region's max faces, so membership is a total function: every point of the
/// region belongs to exactly one cell. Points landing exactly on an interior
/// facet go to the cell on the high side.
class VoxelPartition {
public:
    VoxelPartition(Box3 region, std::array<int, 3> resolution);

    const Box3& region() const { return region_; }
    const std::array<int, 3>& resolution() const { return res_; }
    int num_cells() const { return res_[0] * res_[1] * res_[2]; }

    /// Max cell diameter a; for a uniform grid this is one cell's diagonal.
    double mesh_size() const { return cell_size().norm(); }

    Vec3 cell_size() const;

    /// Flat index of the cell containing p. Throws std::domain_error when p
    /// lies outside the region.
    int cell_index(const Vec3& p) const;

    Vec3 cell_center(int cell) const;

    /// Partition of the same region with `factor`-times finer resolution
    /// per axis.
    VoxelPartition refined(int factor) const;

private:
    Box3 region_;
    std::array<int, 3> res_;
};

/// GSM space spanned by Dirac measures at fixed nodes.
///
/// In the plain case there is one node per voxel (the cell center).
/// Refinement unions carry extra nodes, several to a voxel; the compatible
/// partition is then the voxel grid split by nearest-node regions within
/// each voxel, which keeps every cell diameter at or below the voxel
/// diagonal. Every voxel must contain at least one node so that the
/// projection is total.
class DipoleGsmSpace {
public:
    static DipoleGsmSpace cell_centers(VoxelPartition partition);
    static DipoleGsmSpace with_nodes(VoxelPartition partition,
                                     std::vector<Vec3> nodes);

    const VoxelPartition& partition() const { return partition_; }
    const std::vector<Vec3>& nodes() const { return nodes_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    double mesh_size() const { return partition_.mesh_size(); }
    const Box3& region() const { return partition_.region(); }

    /// Node a point projects to: the nearest node within the point's voxel
    /// (lowest index on ties). Throws std::domain_error outside the region.
    int owning_node(const Vec3& p) const;

    /// Index of the node at exactly p, or -1.
    int node_at(const Vec3& p) const;

    /// True when every atom of mu sits exactly on a node.
    bool supported_on_nodes(const DiscreteVectorMeasure& mu) const;

private:
    DipoleGsmSpace(VoxelPartition partition, std::vector<Vec3> nodes);

    VoxelPartition partition_;
    std::vector<Vec3> nodes_;
    std::vector<std::vector<int>> cell_nodes_;
};

/// P_V(mu): each atom's moment is credited to its owning node; nodes left
/// with a net-zero moment produce no atom. TV-nonexpansive and idempotent on
/// node-supported measures. Throws std::domain_error naming the first atom
/// outside the partition's region.
DiscreteVectorMeasure project_onto_gsm(const DiscreteVectorMeasure& mu,
                                       const DipoleGsmSpace& space);

/// Measure with atoms at the space's nodes carrying the stacked moments
/// (3 entries per node; zero blocks produce no atom).
DiscreteVectorMeasure measure_from_stacked(const VectorXd& m,
                                           const DipoleGsmSpace& space);

/// Stacked moment vector of a node-supported measure. Throws
/// std::domain_error for off-node atoms.
VectorXd stacked_from_measure(const DiscreteVectorMeasure& mu,
                              const DipoleGsmSpace& space);

}  // namespace magtv
