#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "magtv/geometry.hpp"
#include "magtv/grid.hpp"
#include "magtv/measure.hpp"

namespace magtv {

/// mu0/(4 pi) in SI units. Unit tests usually run with scale = 1.
inline constexpr double kMu0Over4Pi = 1e-7;

/// Sensor set realizing the data-space inner product
/// <g,h> = sum_i w_i g_i h_i, together with the sensing direction v.
struct SensorGrid {
    std::vector<Vec3> points;
    VectorXd weights;
    Vec3 direction{0, 0, 1};

    int size() const { return static_cast<int>(points.size()); }

    /// Checks |v| = 1 (1e-12), positive finite weights, finite positions.
    void validate() const;
};

/// K_v(x) = v/|x|^3 - 3 x (v.x)/|x|^5, the gradient of x -> v.x/|x|^3.
/// Homogeneous of degree -3. Throws std::domain_error when |x| < 1e-12.
Vec3 kernel_Kv(const Vec3& x, const Vec3& v);

/// Directional field component of mu at x:
///   b_v(mu)(x) = -scale * sum_k K_v(x - x_k) . m_k
double field_component(const DiscreteVectorMeasure& mu, const Vec3& x,
                       const Vec3& v, double scale);

/// A(mu) evaluated at every sensor by direct summation over atoms. Valid for
/// any measure (node-supported or not); the independent route next to the
/// assembled matrix.
VectorXd apply_measure(const SensorGrid& sensors,
                       const DiscreteVectorMeasure& mu, double scale);

/// 2 max_k |(A* f)(node_k)| computed matrix-free over an arbitrary node set.
double lambda_max_at_nodes(const SensorGrid& sensors,
                           const std::vector<Vec3>& nodes, const VectorXd& f,
                           double scale);

struct AssembleOptions {
    double scale = kMu0Over4Pi;
    /// Required sensor-to-region distance; defaults to one voxel diagonal.
    std::optional<double> separation_gap;
    /// Dense matrices above this many bytes fall back to on-the-fly kernel
    /// evaluation.
    std::size_t dense_memory_cap = std::size_t{2} << 30;
};

/// A restricted to a dipole GSM space. Row i, column block 3k..3k+2 holds
/// -scale * K_v(sensor_i - node_k)^T; applying it to stacked moments gives
/// the field component at every sensor. Immutable after assembly.
class ForwardModel {
public:
    const SensorGrid& sensors() const { return sensors_; }
    const DipoleGsmSpace& space() const { return space_; }
    double scale() const { return scale_; }
    int num_sensors() const { return sensors_.size(); }
    int num_nodes() const { return space_.num_nodes(); }
    int num_unknowns() const { return 3 * space_.num_nodes(); }
    bool dense() const { return matrix_.size() > 0; }
    const MatrixXd& matrix() const;

    /// A mu for stacked moments (3 per node).
    VectorXd apply(const VectorXd& m) const;

    /// (A* g) sampled at the nodes, stacked 3 per node.
    VectorXd adjoint_apply(const VectorXd& g) const;

    /// A* g at an arbitrary point (must not coincide with a sensor).
    Vec3 adjoint_field_at(const VectorXd& g, const Vec3& x) const;

    /// Weighted data-space inner product and norm.
    double inner(const VectorXd& g, const VectorXd& h) const;
    double norm(const VectorXd& g) const { return std::sqrt(inner(g, g)); }

    /// Model from raw parts; the matrix must match the space/sensor layout.
    /// Used by the binary cache and by tests that craft degenerate columns.
    static ForwardModel from_parts(DipoleGsmSpace space, SensorGrid sensors,
                                   double scale, MatrixXd matrix);

private:
    ForwardModel(DipoleGsmSpace space, SensorGrid sensors, double scale);

    friend ForwardModel assemble(const DipoleGsmSpace&, const SensorGrid&,
                                 const AssembleOptions&);

    DipoleGsmSpace space_;
    SensorGrid sensors_;
    double scale_ = 1.0;
    MatrixXd matrix_;  // empty when operating matrix-free
};

/// Builds the matrix representation of A on the space (or a matrix-free
/// model above the memory cap). Throws std::invalid_argument when the
/// sensor/region separation gap is violated.
ForwardModel assemble(const DipoleGsmSpace& space, const SensorGrid& sensors,
                      const AssembleOptions& opts = {});

}  // namespace magtv
