#pragma once

#include <optional>
#include <string>
#include <vector>

#include "magtv/certificate.hpp"
#include "magtv/forward.hpp"

namespace magtv {

struct SolveOptions {
    int max_iters = 20000;
    /// Certificate gap target, relative to lambda/2.
    double certificate_tol = 1e-7;
    /// Relative objective decrease treated as a stall.
    double objective_tol = 1e-12;
    /// Consecutive stalled iterations before stopping on the fallback.
    int stall_patience = 50;
    double backtrack_shrink = 0.5;
    int power_iterations = 30;
    bool restart = true;
    /// Initial stacked moments; zeros when absent.
    std::optional<VectorXd> warm_start;

    void validate() const;
};

enum class ConvergedBy { certificate, objective_stall, max_iters };

const char* to_string(ConvergedBy c);

struct SolveIterRecord {
    int iter = 0;
    double objective = 0;
    double cert_gap = 0;
    double step = 0;
    int active_nodes = 0;
};

struct SolveResult {
    DiscreteVectorMeasure measure;  ///< atoms at active nodes
    VectorXd moments;               ///< stacked, 3 per node
    double objective = 0;           ///< ||f - A mu||_H^2 + lambda ||mu||_TV
    int iterations = 0;
    CertificateReport certificate;
    ConvergedBy converged_by = ConvergedBy::max_iters;
    bool warning = false;  ///< set when max_iters was hit
    std::vector<SolveIterRecord> trace;
};

/// ||f - A mu||_H^2 + lambda ||mu||_TV for stacked moments.
double objective_value(const ForwardModel& model, const VectorXd& f,
                       double lambda, const VectorXd& m);

/// objective_value - ||f||_H^2; shares minimizers with objective_value.
double shifted_objective_value(const ForwardModel& model, const VectorXd& f,
                               double lambda, const VectorXd& m);

/// Proximal map of tau |.|: (1 - tau/|u|) u when |u| > tau, else 0.
Vec3 block_soft_threshold(const Vec3& u, double tau);

/// Sum of per-node moment norms of a stacked vector.
double group_tv(const VectorXd& m);

/// 2 max_k |(A* f)(node_k)|; the zero measure minimizes for lambda at or
/// above this value.
double lambda_max(const ForwardModel& model, const VectorXd& f);

/// Accelerated proximal gradient (monotone variant, gradient restart,
/// backtracking line search) for
///   min_m ||f - A m||_H^2 + lambda sum_k |m_k|.
/// Primary stop is the certificate gap of the minimizer conditions.
SolveResult solve(const ForwardModel& model, const VectorXd& f, double lambda,
                  const SolveOptions& opts = {});

/// Cyclic block-coordinate descent with exact per-block minimization, run to
/// per-sweep decrease below 1e-14 (1 + |objective|). Independent
/// verification oracle; refuses problems above 50 unknowns.
VectorXd oracle_solve(const ForwardModel& model, const VectorXd& f,
                      double lambda);

namespace detail {

/// Exact minimizer of m^T G m - 2 q.m + lambda |m| for symmetric PSD G.
Vec3 exact_group_prox(const Eigen::Matrix3d& G, const Vec3& q, double lambda);

/// Power-iteration estimate of the largest eigenvalue of (A^T W A).
double operator_norm_sq_estimate(const ForwardModel& model, int iterations);

}  // namespace detail

}  // namespace magtv
