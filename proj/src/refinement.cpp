#include "magtv/refinement.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

#include "magtv/io.hpp"
#include "magtv/rng.hpp"

namespace magtv {

void RefinementPlan::validate() const {
    if (levels < 1) throw std::invalid_argument("plan needs at least one level");
    if (levels > 1 && factor < 2) {
        throw std::invalid_argument("refinement factor must be >= 2");
    }
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    for (int r : base_resolution) {
        if (r <= 0) throw std::invalid_argument("base resolution must be positive");
    }
}

bool RefinementTrace::all_audits_pass() const {
    for (const auto& row : rows) {
        if (!row.fncond3_ok || !row.fncond2_ok) return false;
    }
    return true;
}

double kappa_upper_bound(const DiscreteVectorMeasure& mu,
                         const DipoleGsmSpace& space,
                         const ForwardModel& model) {
    const DiscreteVectorMeasure projected = project_onto_gsm(mu, space);
    const VectorXd a_mu = apply_measure(model.sensors(), mu, model.scale());
    const VectorXd a_proj =
        apply_measure(model.sensors(), projected, model.scale());
    const double image_term = model.norm(a_mu - a_proj);
    const double tv_term = std::abs(tv_norm(mu) - tv_norm(projected));
    return std::max(image_term, tv_term);
}

double delta(const VectorXd& g, const DipoleGsmSpace& space,
             const ForwardModel& model) {
    if (g.size() != model.num_sensors()) {
        throw std::invalid_argument("sensor vector size does not match model");
    }
    if (g.isZero(0.0)) return 0.0;
    return lambda_max_at_nodes(model.sensors(), space.nodes(), g,
                               model.scale()) /
           2.0;
}

double d_lambda(double kappa, double norm_f, double norm_f_tilde,
                double lambda) {
    if (kappa < 0 || norm_f < 0 || norm_f_tilde < 0) {
        throw std::invalid_argument("norms and kappa must be nonnegative");
    }
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    return kappa * (2.0 * norm_f_tilde + 4.0 * norm_f + kappa + lambda);
}

namespace {

double shifted_objective_measure(const ForwardModel& op, const VectorXd& f,
                                 double lambda,
                                 const DiscreteVectorMeasure& mu) {
    const VectorXd r = f - apply_measure(op.sensors(), mu, op.scale());
    return op.inner(r, r) - op.inner(f, f) + lambda * tv_norm(mu);
}

}  // namespace

AuditOutcome inequality_audit(const ForwardModel& op,
                              const DipoleGsmSpace& level_space,
                              const VectorXd& f, const VectorXd& f_tilde,
                              double lambda,
                              const DiscreteVectorMeasure& level_solution,
                              const DiscreteVectorMeasure& reference) {
    AuditOutcome out;
    out.kappa = kappa_upper_bound(reference, level_space, op);
    out.delta_value = delta(f_tilde - f, level_space, op);
    out.d_lambda_value =
        d_lambda(out.kappa, op.norm(f), op.norm(f_tilde), lambda);

    const double F_level = shifted_objective_measure(op, f_tilde, lambda, level_solution);
    const double F_ref_tilde = shifted_objective_measure(op, f_tilde, lambda, reference);
    const double F_ref = shifted_objective_measure(op, f, lambda, reference);

    out.fncond3_lhs = F_level;
    out.fncond3_rhs = F_ref_tilde + out.d_lambda_value;
    out.fncond3_ok =
        F_level <= out.fncond3_rhs + 1e-8 * (1.0 + std::abs(out.fncond3_rhs));

    out.fncond2_mid = F_level - F_ref;
    out.fncond2_lo = -2.0 * out.delta_value * tv_norm(level_solution);
    out.fncond2_hi =
        2.0 * out.delta_value * tv_norm(reference) + out.d_lambda_value;
    out.fncond2_ok =
        out.fncond2_mid >= out.fncond2_lo - 1e-8 * (1.0 + std::abs(out.fncond2_lo)) &&
        out.fncond2_mid <= out.fncond2_hi + 1e-8 * (1.0 + std::abs(out.fncond2_hi));
    return out;
}

std::vector<SupportConvergenceRow> support_convergence(
    const std::vector<DiscreteVectorMeasure>& level_solutions,
    const DiscreteVectorMeasure& reference,
    const std::vector<Vec3>& level_set_points) {
    const std::vector<Vec3> ref_pts = support_points(reference);
    std::vector<SupportConvergenceRow> rows;
    rows.reserve(level_solutions.size());
    for (const auto& mu : level_solutions) {
        SupportConvergenceRow row;
        if (ref_pts.empty()) {
            rows.push_back(row);  // zeros by convention
            continue;
        }
        const std::vector<Vec3> pts = support_points(mu);
        row.dist_to_levelset =
            pts.empty() ? std::numeric_limits<double>::infinity()
                        : directed_hausdorff(pts, level_set_points);
        row.dist_from_ref_support = directed_hausdorff(ref_pts, pts);
        row.flagged = !std::isfinite(row.dist_to_levelset) ||
                      !std::isfinite(row.dist_from_ref_support);
        rows.push_back(row);
    }
    return rows;
}

std::vector<DipoleGsmSpace> build_nested_spaces(const RefinementPlan& plan) {
    plan.validate();
    std::vector<DipoleGsmSpace> spaces;
    spaces.reserve(plan.levels);
    VoxelPartition partition(plan.region, plan.base_resolution);
    spaces.push_back(DipoleGsmSpace::cell_centers(partition));
    for (int level = 2; level <= plan.levels; ++level) {
        partition = partition.refined(plan.factor);
        // Union with all coarser nodes keeps the spaces nested; exact
        // coincidences (possible for odd factors) are dropped.
        std::vector<Vec3> nodes = spaces.back().nodes();
        std::map<std::tuple<double, double, double>, int> seen;
        for (const Vec3& p : nodes) {
            seen.emplace(std::make_tuple(p.x(), p.y(), p.z()), 1);
        }
        for (int c = 0; c < partition.num_cells(); ++c) {
            const Vec3 p = partition.cell_center(c);
            if (seen.emplace(std::make_tuple(p.x(), p.y(), p.z()), 1).second) {
                nodes.push_back(p);
            }
        }
        spaces.push_back(DipoleGsmSpace::with_nodes(partition, std::move(nodes)));
    }
    return spaces;
}

namespace {

ForwardModel assemble_cached(const DipoleGsmSpace& space,
                             const SensorGrid& sensors,
                             const AssembleOptions& opts,
                             const std::optional<std::string>& cache_dir) {
    if (!cache_dir) return assemble(space, sensors, opts);
    // The separation contract applies to cache hits too.
    const double gap = opts.separation_gap.value_or(space.mesh_size());
    for (const Vec3& p : sensors.points) {
        if (space.region().distance(p) < gap) {
            throw std::invalid_argument(
                "sensor closer to the source region than the separation gap");
        }
    }
    const std::string path =
        *cache_dir + "/" +
        io::hash_hex(io::model_content_hash(space, sensors, opts.scale)) +
        ".bin";
    if (auto cached = io::load_model_cache(path, space, sensors, opts.scale)) {
        return std::move(*cached);
    }
    ForwardModel model = assemble(space, sensors, opts);
    if (model.dense()) io::save_model_cache(path, model);
    return model;
}

}  // namespace

RefinementTrace run_refinement(const RefinementPlan& plan,
                               const RefinementData& data,
                               const SolveOptions& solve_opts) {
    plan.validate();
    data.sensors.validate();
    if (data.dual_sample_factor < 2) {
        throw std::invalid_argument("dual sample factor must be >= 2");
    }
    const double lambda = plan.lambda;

    RefinementTrace trace;
    trace.lambda = lambda;
    trace.rows.reserve(plan.levels);
    trace.solutions.reserve(plan.levels);

    std::vector<DipoleGsmSpace> spaces = build_nested_spaces(plan);
    std::vector<VectorXd> f_tildes;
    std::optional<ForwardModel> finest_model;

    for (int level = 1; level <= plan.levels; ++level) {
        const DipoleGsmSpace& space = spaces[level - 1];

        AssembleOptions aopts;
        aopts.scale = data.scale;
        aopts.separation_gap = data.separation_gap;
        aopts.dense_memory_cap = data.dense_memory_cap;
        ForwardModel model = assemble_cached(space, data.sensors, aopts,
                                             data.model_cache_dir);

        VectorXd f_tilde = data.f;
        if (data.noise_std > 0) {
            Rng rng(data.noise_seed + static_cast<std::uint64_t>(level));
            for (Eigen::Index i = 0; i < f_tilde.size(); ++i) {
                f_tilde[i] += data.noise_std * rng.gaussian();
            }
        }
        f_tildes.push_back(f_tilde);

        SolveOptions opts = solve_opts;
        if (level > 1) {
            opts.warm_start = stacked_from_measure(
                project_onto_gsm(trace.solutions.back(), space), space);
        }

        const auto t0 = std::chrono::steady_clock::now();
        SolveResult res = solve(model, f_tilde, lambda, opts);
        const auto t1 = std::chrono::steady_clock::now();

        RefinementLevelRow row;
        row.level = level;
        row.num_nodes = space.num_nodes();
        row.mesh_size = space.mesh_size();
        row.objective = res.objective;
        row.shifted_objective = res.objective - model.inner(f_tilde, f_tilde);
        row.tv = tv_norm(res.measure);
        row.active_count = static_cast<int>(res.certificate.active_set.size());
        row.cert_gap = res.certificate.gap();
        row.iterations = res.iterations;
        row.converged_by = res.converged_by;
        row.delta_noise = delta(f_tilde - data.f, space, model);
        row.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
        if (res.warning) row.flags.push_back("solver-max-iters");
        trace.rows.push_back(std::move(row));
        trace.solutions.push_back(res.measure);
        trace.certificates.push_back(res.certificate);

        if (level == plan.levels) {
            if (data.noise_std > 0) {
                SolveOptions ref_opts = solve_opts;
                ref_opts.warm_start =
                    stacked_from_measure(project_onto_gsm(res.measure, space), space);
                trace.reference = solve(model, data.f, lambda, ref_opts).measure;
            } else {
                trace.reference = res.measure;
            }
            finest_model.emplace(std::move(model));
        }
    }

    const ForwardModel& op = *finest_model;
    const auto& finest_res = spaces.back().partition().resolution();
    const std::array<int, 3> sample_res = {
        finest_res[0] * data.dual_sample_factor,
        finest_res[1] * data.dual_sample_factor,
        finest_res[2] * data.dual_sample_factor};
    trace.dual_sample = dual_field_sample(op, data.f, trace.reference, sample_res);
    trace.level_set_points = level_set_extract(
        trace.dual_sample, lambda / 2, data.level_set_band_rel * lambda / 2);

    const auto conv =
        support_convergence(trace.solutions, trace.reference, trace.level_set_points);
    const TestFunctionFamily phi(plan.region);
    const double nan = std::numeric_limits<double>::quiet_NaN();

    for (int level = 1; level <= plan.levels; ++level) {
        RefinementLevelRow& row = trace.rows[level - 1];
        const DiscreteVectorMeasure& mu = trace.solutions[level - 1];

        row.r_proxy_to_finest = r_distance_proxy(mu, trace.reference, phi);
        if (level >= 2) {
            row.hausdorff_prev =
                hausdorff_distance(support_points(mu),
                                   support_points(trace.solutions[level - 2]));
            if (!std::isfinite(row.hausdorff_prev)) {
                row.flags.push_back("hausdorff-prev-undefined");
            }
        } else {
            row.hausdorff_prev = nan;
            row.flags.push_back("no-previous-level");
        }
        row.dist_to_levelset = conv[level - 1].dist_to_levelset;
        row.dist_from_ref_support = conv[level - 1].dist_from_ref_support;
        if (conv[level - 1].flagged) row.flags.push_back("empty-support");

        const auto audit =
            inequality_audit(op, spaces[level - 1], data.f, f_tildes[level - 1],
                             lambda, mu, trace.reference);
        row.kappa_ref = audit.kappa;
        row.d_lambda_ref = audit.d_lambda_value;
        row.fncond3_ok = audit.fncond3_ok;
        row.fncond3_slack = audit.fncond3_rhs - audit.fncond3_lhs;
        row.fncond2_ok = audit.fncond2_ok;
        row.fncond2_lo_slack = audit.fncond2_mid - audit.fncond2_lo;
        row.fncond2_hi_slack = audit.fncond2_hi - audit.fncond2_mid;
        if (!audit.fncond3_ok) row.flags.push_back("audit-fncond3-failed");
        if (!audit.fncond2_ok) row.flags.push_back("audit-fncond2-failed");
    }
    return trace;
}

}  // namespace magtv
