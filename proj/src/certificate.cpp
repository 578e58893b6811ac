#include "magtv/certificate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace magtv {

double CertificateReport::gap() const {
    return std::max({bound_gap, alignment_gap, pairing_residual / (1.0 + tv)});
}

CertificateReport certificate_check_stacked(const ForwardModel& model,
                                            const VectorXd& f, double lambda,
                                            const VectorXd& m, double tol) {
    if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
    if (!(tol > 0)) throw std::invalid_argument("tolerance must be positive");
    if (m.size() != model.num_unknowns()) {
        throw std::invalid_argument("moment vector size does not match model");
    }

    const double half_lambda = lambda / 2;
    const VectorXd r = f - model.apply(m);
    const VectorXd c = model.adjoint_apply(r);

    CertificateReport rep;
    rep.lambda = lambda;
    rep.tol = tol;
    rep.duals.reserve(model.num_nodes());
    rep.moments.reserve(model.num_nodes());

    double max_dual = 0;
    double pairing = 0;
    for (int k = 0; k < model.num_nodes(); ++k) {
        const Vec3 ck = c.segment<3>(3 * k);
        const Vec3 mk = m.segment<3>(3 * k);
        rep.duals.push_back(ck);
        rep.moments.push_back(mk);
        max_dual = std::max(max_dual, ck.norm());
        const double mn = mk.norm();
        if (mn > 0) {
            rep.active_set.push_back(k);
            rep.alignment_gap =
                std::max(rep.alignment_gap, (ck - half_lambda * mk / mn).norm());
            pairing += mk.dot(ck);
            rep.tv += mn;
        }
    }
    rep.bound_margin = half_lambda - max_dual;
    rep.bound_gap = std::max(0.0, max_dual - half_lambda);
    rep.pairing_residual = std::abs(pairing - half_lambda * rep.tv);
    rep.pass = rep.bound_gap <= tol * half_lambda &&
               rep.alignment_gap <= tol * half_lambda &&
               rep.pairing_residual <= tol * half_lambda * (1.0 + rep.tv);
    return rep;
}

CertificateReport certificate_check(const ForwardModel& model,
                                    const VectorXd& f, double lambda,
                                    const DiscreteVectorMeasure& mu,
                                    double tol) {
    return certificate_check_stacked(
        model, f, lambda, stacked_from_measure(mu, model.space()), tol);
}

namespace {

double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

EquivalenceReport equivalence_check(const ForwardModel& model,
                                    const VectorXd& f, double lambda,
                                    const DiscreteVectorMeasure& mu,
                                    const DiscreteVectorMeasure& mu_prime,
                                    double tol, double angular_tol) {
    const CertificateReport base = certificate_check(model, f, lambda, mu, tol);
    if (!base.pass) {
        throw std::invalid_argument(
            "equivalence_check requires a certified first candidate");
    }
    const VectorXd m = stacked_from_measure(mu, model.space());
    const VectorXd mp = stacked_from_measure(mu_prime, model.space());

    EquivalenceReport rep;
    const VectorXd diff = model.apply(m - mp);
    rep.image_gap = model.norm(diff);
    rep.same_image = rep.image_gap <= tol * (1.0 + model.norm(model.apply(m)));

    const double half_lambda = lambda / 2;
    rep.condition_b = true;
    for (int k = 0; k < model.num_nodes(); ++k) {
        const Vec3 mpk = mp.segment<3>(3 * k);
        if (mpk.norm() == 0) continue;  // p_k = 0 is always admissible
        const Vec3 mk = m.segment<3>(3 * k);
        const Vec3 ck = base.duals[k];
        // Strictly interior duals force p_k = 0.
        if (ck.norm() < half_lambda * (1.0 - tol)) {
            rep.condition_b = false;
            continue;
        }
        const double ang =
            mk.norm() > 0 ? angle_between(mpk, mk) : angle_between(mpk, ck);
        rep.worst_angle = std::max(rep.worst_angle, ang);
        if (ang > angular_tol) rep.condition_b = false;
    }
    return rep;
}

LevelSetSample dual_field_sample(const ForwardModel& model, const VectorXd& f,
                                 const DiscreteVectorMeasure& mu,
                                 std::array<int, 3> resolution) {
    const auto& node_res = model.space().partition().resolution();
    for (int a = 0; a < 3; ++a) {
        if (resolution[a] < 2 * node_res[a]) {
            throw std::invalid_argument(
                "dual-field sample grid must be at least twice the node grid");
        }
    }
    const VectorXd m = stacked_from_measure(mu, model.space());
    const VectorXd r = f - model.apply(m);

    const VoxelPartition fine(model.space().region(), resolution);
    LevelSetSample sample;
    sample.resolution = resolution;
    sample.num_grid_points = fine.num_cells();
    sample.points.reserve(fine.num_cells() + model.num_nodes());
    for (int c = 0; c < fine.num_cells(); ++c) {
        sample.points.push_back(fine.cell_center(c));
    }
    for (const Vec3& node : model.space().nodes()) sample.points.push_back(node);

    sample.values.resize(static_cast<Eigen::Index>(sample.points.size()));
    for (std::size_t i = 0; i < sample.points.size(); ++i) {
        sample.values[static_cast<Eigen::Index>(i)] =
            model.adjoint_field_at(r, sample.points[i]).norm();
    }
    return sample;
}

std::vector<Vec3> level_set_extract(const LevelSetSample& sample, double alpha,
                                    double band) {
    if (!(band > 0)) throw std::invalid_argument("band must be positive");
    std::vector<Vec3> out;
    for (std::size_t i = 0; i < sample.points.size(); ++i) {
        if (std::abs(sample.values[static_cast<Eigen::Index>(i)] - alpha) <=
            band) {
            out.push_back(sample.points[i]);
        }
    }
    return out;
}

EliminationResult atom_elimination_check(const CertificateReport& report,
                                         const LevelSetSample& g_fine,
                                         const DipoleGsmSpace& space,
                                         double lambda, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
    const double threshold = lambda / 2 - eps;

    // Conservative per-voxel view of the fine dual field: a node is listed
    // only when the field stays below the threshold on its whole voxel.
    std::vector<double> cell_max(space.partition().num_cells(), 0.0);
    for (std::size_t i = 0; i < g_fine.points.size(); ++i) {
        const int cell = space.partition().cell_index(g_fine.points[i]);
        cell_max[cell] = std::max(
            cell_max[cell], g_fine.values[static_cast<Eigen::Index>(i)]);
    }

    EliminationResult out;
    for (int k = 0; k < space.num_nodes(); ++k) {
        const int cell = space.partition().cell_index(space.nodes()[k]);
        double value = cell_max[cell];
        if (k < static_cast<int>(report.duals.size())) {
            value = std::max(value, report.duals[k].norm());
        }
        if (value < threshold) out.inactive_nodes.push_back(k);
    }
    for (int k : out.inactive_nodes) {
        if (std::binary_search(report.active_set.begin(),
                               report.active_set.end(), k)) {
            out.active_overlap.push_back(k);
        }
    }
    return out;
}

}  // namespace magtv
