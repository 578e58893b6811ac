#pragma once

#include <array>
#include <vector>

#include "magtv/forward.hpp"

namespace magtv {

/// Audit of the minimizer conditions over a dipole GSM space: with
/// c_k = (A*(f - A mu))(node_k),
///   |c_k| <= lambda/2 at every node, and
///   c_k = (lambda/2) m_k/|m_k| on the active set.
/// Tolerances are relative to lambda/2 so reports are scale-free.
struct CertificateReport {
    double lambda = 0;
    double tol = 0;
    std::vector<Vec3> duals;       ///< c_k per node
    std::vector<Vec3> moments;     ///< m_k per node (zero when inactive)
    std::vector<int> active_set;   ///< indices with m_k != 0
    double bound_gap = 0;          ///< max_k (|c_k| - lambda/2)_+
    double bound_margin = 0;       ///< lambda/2 - max_k |c_k| (signed)
    double alignment_gap = 0;      ///< max active |c_k - (lambda/2) m_k/|m_k||
    double pairing_residual = 0;   ///< |sum_k m_k.c_k - (lambda/2)||mu||_TV|
    double tv = 0;
    bool pass = false;

    /// max(bound_gap, alignment_gap, pairing_residual/(1+TV)); the solver
    /// stops when this drops below tol*(lambda/2).
    double gap() const;
};

/// Certificate for a node-supported measure (off-node atoms -> domain
/// error; project first).
CertificateReport certificate_check(const ForwardModel& model,
                                    const VectorXd& f, double lambda,
                                    const DiscreteVectorMeasure& mu,
                                    double tol);

/// Same check on stacked moments.
CertificateReport certificate_check_stacked(const ForwardModel& model,
                                            const VectorXd& f, double lambda,
                                            const VectorXd& m, double tol);

/// Minimizer-equivalence test for a second candidate against a certified
/// one: (a) equal images under A, (b) moments parallel with nonnegative
/// scale to m_k on the active set, and to c_k (with |c_k| = lambda/2) where
/// m_k = 0.
struct EquivalenceReport {
    bool same_image = false;
    bool condition_b = false;
    double image_gap = 0;       ///< ||A(mu - mu')||_H
    double worst_angle = 0;     ///< radians, over checked pairs
};

EquivalenceReport equivalence_check(const ForwardModel& model,
                                    const VectorXd& f, double lambda,
                                    const DiscreteVectorMeasure& mu,
                                    const DiscreteVectorMeasure& mu_prime,
                                    double tol,
                                    double angular_tol = 1e-6);

/// Dual-field magnitudes g(x) = |A*(f - A mu)|(x) on a sample grid strictly
/// finer than the node grid (factor >= 2 per axis), plus the node points
/// themselves so node-wise maxima are always dominated by the sample max.
struct LevelSetSample {
    std::vector<Vec3> points;
    VectorXd values;
    std::array<int, 3> resolution{0, 0, 0};
    int num_grid_points = 0;  ///< leading entries on the regular sub-grid
};

LevelSetSample dual_field_sample(const ForwardModel& model, const VectorXd& f,
                                 const DiscreteVectorMeasure& mu,
                                 std::array<int, 3> resolution);

/// Sample points with |g(x) - alpha| <= band. May be empty.
std::vector<Vec3> level_set_extract(const LevelSetSample& sample, double alpha,
                                    double band);

/// Nodes whose dual magnitude stays below lambda/2 - eps (checked against
/// the fine sample within each node's voxel, falling back to the node's own
/// dual). Such nodes carry no moment in any minimizer; overlap with the
/// report's active set is returned rather than asserted.
struct EliminationResult {
    std::vector<int> inactive_nodes;
    std::vector<int> active_overlap;  ///< active nodes wrongly listed, if any
};

EliminationResult atom_elimination_check(const CertificateReport& report,
                                         const LevelSetSample& g_fine,
                                         const DipoleGsmSpace& space,
                                         double lambda, double eps);

}  // namespace magtv
