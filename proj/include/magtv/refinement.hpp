#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "magtv/certificate.hpp"
#include "magtv/forward.hpp"
#include "magtv/solver.hpp"
#include "magtv/test_functions.hpp"

namespace magtv {

/// Nested grid sequence: level 1 uses the base resolution; each further
/// level refines by `factor` per axis and carries the union of all coarser
/// node sets with its own cell centers, so the spaces are nested.
struct RefinementPlan {
    Box3 region;
    std::array<int, 3> base_resolution{4, 4, 2};
    int levels = 2;
    int factor = 2;
    double lambda = 0;

    void validate() const;
};

struct RefinementData {
    SensorGrid sensors;
    VectorXd f;
    double scale = 1.0;
    std::optional<double> separation_gap;
    std::size_t dense_memory_cap = std::size_t{2} << 30;
    /// Per-level data perturbation f~_n = f + noise (0 keeps f~_n = f).
    double noise_std = 0;
    std::uint64_t noise_seed = 0;
    /// Sample-grid factor (>= 2) over the finest node grid for the dual
    /// field behind the level-set diagnostics.
    int dual_sample_factor = 2;
    /// Band half-width for the lambda/2 level set, relative to lambda/2.
    double level_set_band_rel = 1e-3;
    /// Directory for the binary model cache keyed by content hash.
    std::optional<std::string> model_cache_dir;
};

struct AuditOutcome {
    bool fncond3_ok = false;
    double fncond3_lhs = 0;
    double fncond3_rhs = 0;
    bool fncond2_ok = false;
    double fncond2_mid = 0;
    double fncond2_lo = 0;
    double fncond2_hi = 0;
    double kappa = 0;
    double delta_value = 0;
    double d_lambda_value = 0;
};

/// One trace row. Inter-level entries are NaN (and flagged) where they do
/// not apply, e.g. the Hausdorff step on the first level.
struct RefinementLevelRow {
    int level = 0;
    int num_nodes = 0;
    double mesh_size = 0;
    double objective = 0;          ///< full objective at the level solution
    double shifted_objective = 0;  ///< objective - ||f~||_H^2
    double tv = 0;
    int active_count = 0;
    double cert_gap = 0;
    int iterations = 0;
    ConvergedBy converged_by = ConvergedBy::max_iters;
    double r_proxy_to_finest = 0;
    double hausdorff_prev = 0;
    double dist_to_levelset = 0;
    double dist_from_ref_support = 0;
    double kappa_ref = 0;
    double delta_noise = 0;
    double d_lambda_ref = 0;
    bool fncond3_ok = false;
    double fncond3_slack = 0;
    bool fncond2_ok = false;
    double fncond2_lo_slack = 0;
    double fncond2_hi_slack = 0;
    double wall_seconds = 0;
    std::vector<std::string> flags;
};

struct RefinementTrace {
    std::vector<RefinementLevelRow> rows;
    std::vector<DiscreteVectorMeasure> solutions;   ///< per level
    std::vector<CertificateReport> certificates;    ///< per level
    DiscreteVectorMeasure reference;  ///< finest-level clean-f solution
    LevelSetSample dual_sample;       ///< finest dual field on the sub-grid
    std::vector<Vec3> level_set_points;  ///< lambda/2 band from finest dual
    double lambda = 0;

    bool all_audits_pass() const;
};

/// The plan's nested node spaces: level 1 holds the base cell centers, each
/// further level the union of all coarser nodes with its own cell centers.
std::vector<DipoleGsmSpace> build_nested_spaces(const RefinementPlan& plan);

/// Upper bound on kappa(V, mu) evaluated at the projection of mu:
/// max(||A(mu - P mu)||_H, | ||mu||_TV - ||P mu||_TV |). Both measures are
/// applied by direct summation, so any model sharing the sensors works.
double kappa_upper_bound(const DiscreteVectorMeasure& mu,
                         const DipoleGsmSpace& space,
                         const ForwardModel& model);

/// delta(g, V) = max_k |(A* g)(node_k)|; exact for dipole GSM spaces, and
/// equal to lambda_max(model, g)/2 on the model's own space.
double delta(const VectorXd& g, const DipoleGsmSpace& space,
             const ForwardModel& model);

/// kappa (2 ||f~|| + 4 ||f|| + kappa + lambda).
double d_lambda(double kappa, double norm_f, double norm_f_tilde,
                double lambda);

/// Evaluates both sides of the two-objective inequalities for one level
/// against a reference (finest-level) solution, with kappa replaced by its
/// projection upper bound. Failures are reported, never thrown.
AuditOutcome inequality_audit(const ForwardModel& op,
                              const DipoleGsmSpace& level_space,
                              const VectorXd& f, const VectorXd& f_tilde,
                              double lambda,
                              const DiscreteVectorMeasure& level_solution,
                              const DiscreteVectorMeasure& reference);

struct SupportConvergenceRow {
    double dist_to_levelset = 0;
    double dist_from_ref_support = 0;
    bool flagged = false;
};

/// Per-level support diagnostics: sup distance from the level's active
/// atoms to the lambda/2 band, and sup distance from the reference support
/// to the level's active set. Empty reference support -> zeros by
/// convention; an empty level support against a nonempty reference ->
/// +infinity, flagged.
std::vector<SupportConvergenceRow> support_convergence(
    const std::vector<DiscreteVectorMeasure>& level_solutions,
    const DiscreteVectorMeasure& reference,
    const std::vector<Vec3>& level_set_points);

/// Solves every level (warm-starting from the projected previous solution),
/// fills the trace, and runs the audits. Deterministic for fixed inputs.
RefinementTrace run_refinement(const RefinementPlan& plan,
                               const RefinementData& data,
                               const SolveOptions& solve_opts = {});

}  // namespace magtv
