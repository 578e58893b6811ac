#pragma once

#include <Eigen/Core>
#include <cmath>

namespace magtv {

using Vec3 = Eigen::Vector3d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline bool all_finite(const Vec3& v) {
    return std::isfinite(v.x()) && std::isfinite(v.y()) && std::isfinite(v.z());
}

/// Axis-aligned box; used for the source region S and for voxel grids.
struct Box3 {
    Vec3 lo{0, 0, 0};
    Vec3 hi{1, 1, 1};

    Vec3 extent() const { return hi - lo; }
    double diagonal() const { return extent().norm(); }

    bool contains(const Vec3& p) const {
        return p.x() >= lo.x() && p.x() <= hi.x() && p.y() >= lo.y() &&
               p.y() <= hi.y() && p.z() >= lo.z() && p.z() <= hi.z();
    }

    /// Euclidean distance from p to the box; zero for interior points.
    double distance(const Vec3& p) const {
        const Vec3 d = (lo - p).cwiseMax(0.0).cwiseMax(p - hi);
        return d.norm();
    }
};

}  // namespace magtv
