#pragma once

#include <vector>

#include "magtv/geometry.hpp"

namespace magtv {

/// One vector-weighted Dirac atom: a location and a moment (A·m² in SI
/// runs; arbitrary units when the model scale is 1).
struct Atom {
    Vec3 position{0, 0, 0};
    Vec3 moment{0, 0, 0};
};

/// Finite sum of vector-weighted Dirac atoms, mu = sum_k m_k delta_{x_k}.
///
/// Atoms with zero moment are dropped on construction; locations must be
/// pairwise distinct (use merged() for atom lists that may repeat one).
/// Immutable after construction.
class DiscreteVectorMeasure {
public:
    DiscreteVectorMeasure() = default;
    explicit DiscreteVectorMeasure(std::vector<Atom> atoms);

    /// Sums moments of atoms sharing an exact location, then constructs.
    static DiscreteVectorMeasure merged(const std::vector<Atom>& atoms);

    const std::vector<Atom>& atoms() const { return atoms_; }
    bool empty() const { return atoms_.empty(); }
    std::size_t size() const { return atoms_.size(); }

    /// Throws std::domain_error naming the first atom outside `region`.
    void require_inside(const Box3& region) const;

private:
    std::vector<Atom> atoms_;
};

/// ||mu||_TV = sum of Euclidean moment norms.
double tv_norm(const DiscreteVectorMeasure& mu);

/// The set of atom locations.
std::vector<Vec3> support_points(const DiscreteVectorMeasure& mu);

/// Hausdorff distance between finite point sets. Both empty -> 0; exactly
/// one empty -> +infinity, which callers flag in reports.
double hausdorff_distance(const std::vector<Vec3>& xs,
                          const std::vector<Vec3>& ys);

/// Directed distance sup_{x in xs} d(x, ys); empty xs -> 0, empty ys -> inf.
double directed_hausdorff(const std::vector<Vec3>& xs,
                          const std::vector<Vec3>& ys);

}  // namespace magtv
