#include "magtv/forward.hpp"

#include <cmath>
#include <stdexcept>

namespace magtv {

void SensorGrid::validate() const {
    if (points.empty()) throw std::invalid_argument("sensor grid is empty");
    if (weights.size() != static_cast<Eigen::Index>(points.size())) {
        throw std::invalid_argument("sensor weight count does not match points");
    }
    if (std::abs(direction.norm() - 1.0) > 1e-12) {
        throw std::invalid_argument("sensing direction must be a unit vector");
    }
    double total = 0;
    for (Eigen::Index i = 0; i < weights.size(); ++i) {
        if (!(weights[i] > 0) || !std::isfinite(weights[i])) {
            throw std::invalid_argument("sensor weights must be positive and finite");
        }
        total += weights[i];
    }
    if (!std::isfinite(total)) {
        throw std::invalid_argument("sensor weights must sum to a finite value");
    }
    for (const Vec3& p : points) {
        if (!all_finite(p)) throw std::invalid_argument("non-finite sensor position");
    }
}

Vec3 kernel_Kv(const Vec3& x, const Vec3& v) {
    const double r2 = x.squaredNorm();
    const double r = std::sqrt(r2);
    if (r < 1e-12) {
        throw std::domain_error("kernel evaluated at a near-zero displacement");
    }
    const double r3 = r2 * r;
    const double r5 = r3 * r2;
    return v / r3 - 3.0 * (v.dot(x) / r5) * x;
}

double field_component(const DiscreteVectorMeasure& mu, const Vec3& x,
                       const Vec3& v, double scale) {
    double s = 0;
    for (const Atom& a : mu.atoms()) {
        s += kernel_Kv(x - a.position, v).dot(a.moment);
    }
    return -scale * s;
}

VectorXd apply_measure(const SensorGrid& sensors,
                       const DiscreteVectorMeasure& mu, double scale) {
    VectorXd out(sensors.size());
    for (int i = 0; i < sensors.size(); ++i) {
        out[i] = field_component(mu, sensors.points[i], sensors.direction, scale);
    }
    return out;
}

double lambda_max_at_nodes(const SensorGrid& sensors,
                           const std::vector<Vec3>& nodes, const VectorXd& f,
                           double scale) {
    double best = 0;
    for (const Vec3& node : nodes) {
        Vec3 c = Vec3::Zero();
        for (int i = 0; i < sensors.size(); ++i) {
            c += sensors.weights[i] * f[i] *
                 (-scale * kernel_Kv(sensors.points[i] - node, sensors.direction));
        }
        best = std::max(best, c.norm());
    }
    return 2.0 * best;
}

ForwardModel::ForwardModel(DipoleGsmSpace space, SensorGrid sensors,
                           double scale)
    : space_(std::move(space)), sensors_(std::move(sensors)), scale_(scale) {}

const MatrixXd& ForwardModel::matrix() const {
    if (!dense()) {
        throw std::logic_error("model assembled matrix-free; no dense matrix");
    }
    return matrix_;
}

ForwardModel ForwardModel::from_parts(DipoleGsmSpace space, SensorGrid sensors,
                                      double scale, MatrixXd matrix) {
    sensors.validate();
    if (matrix.rows() != sensors.size() ||
        matrix.cols() != 3 * space.num_nodes()) {
        throw std::invalid_argument("matrix shape does not match space/sensors");
    }
    ForwardModel model(std::move(space), std::move(sensors), scale);
    model.matrix_ = std::move(matrix);
    return model;
}

VectorXd ForwardModel::apply(const VectorXd& m) const {
    if (m.size() != num_unknowns()) {
        throw std::invalid_argument("moment vector size does not match model");
    }
    if (dense()) return matrix_ * m;
    VectorXd out = VectorXd::Zero(num_sensors());
    const Vec3 v = sensors_.direction;
    for (int i = 0; i < num_sensors(); ++i) {
        double s = 0;
        for (int k = 0; k < num_nodes(); ++k) {
            s += kernel_Kv(sensors_.points[i] - space_.nodes()[k], v)
                     .dot(m.segment<3>(3 * k));
        }
        out[i] = -scale_ * s;
    }
    return out;
}

VectorXd ForwardModel::adjoint_apply(const VectorXd& g) const {
    if (g.size() != num_sensors()) {
        throw std::invalid_argument("sensor vector size does not match model");
    }
    const VectorXd wg = sensors_.weights.cwiseProduct(g);
    if (dense()) return matrix_.transpose() * wg;
    VectorXd out = VectorXd::Zero(num_unknowns());
    const Vec3 v = sensors_.direction;
    for (int k = 0; k < num_nodes(); ++k) {
        Vec3 c = Vec3::Zero();
        for (int i = 0; i < num_sensors(); ++i) {
            c += wg[i] * (-scale_ * kernel_Kv(sensors_.points[i] - space_.nodes()[k], v));
        }
        out.segment<3>(3 * k) = c;
    }
    return out;
}

Vec3 ForwardModel::adjoint_field_at(const VectorXd& g, const Vec3& x) const {
    if (g.size() != num_sensors()) {
        throw std::invalid_argument("sensor vector size does not match model");
    }
    Vec3 c = Vec3::Zero();
    for (int i = 0; i < num_sensors(); ++i) {
        c += sensors_.weights[i] * g[i] *
             (-scale_ * kernel_Kv(sensors_.points[i] - x, sensors_.direction));
    }
    return c;
}

double ForwardModel::inner(const VectorXd& g, const VectorXd& h) const {
    if (g.size() != num_sensors() || h.size() != num_sensors()) {
        throw std::invalid_argument("sensor vector size does not match model");
    }
    return (sensors_.weights.array() * g.array() * h.array()).sum();
}

ForwardModel assemble(const DipoleGsmSpace& space, const SensorGrid& sensors,
                      const AssembleOptions& opts) {
    sensors.validate();
    const double gap = opts.separation_gap.value_or(space.mesh_size());
    if (!(gap > 0)) throw std::invalid_argument("separation gap must be positive");
    for (const Vec3& p : sensors.points) {
        if (space.region().distance(p) < gap) {
            throw std::invalid_argument(
                "sensor closer to the source region than the separation gap");
        }
    }

    ForwardModel model(space, sensors, opts.scale);
    const std::size_t bytes = std::size_t(sensors.size()) *
                              std::size_t(3 * space.num_nodes()) * sizeof(double);
    if (bytes > opts.dense_memory_cap) return model;  // matrix-free fallback

    MatrixXd B(sensors.size(), 3 * space.num_nodes());
    const Vec3 v = sensors.direction;
    for (int k = 0; k < space.num_nodes(); ++k) {
        const Vec3& node = space.nodes()[k];
        for (int i = 0; i < sensors.size(); ++i) {
            B.block<1, 3>(i, 3 * k) =
                (-opts.scale * kernel_Kv(sensors.points[i] - node, v)).transpose();
        }
    }
    model.matrix_ = std::move(B);
    return model;
}

}  // namespace magtv
