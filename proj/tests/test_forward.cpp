#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "magtv/forward.hpp"

using namespace magtv;
using namespace magtv::testing;

namespace {

// Potential v.x/|x|^3 whose gradient the kernel must match.
double kernel_potential(const Vec3& x, const Vec3& v) {
    const double r = x.norm();
    return v.dot(x) / (r * r * r);
}

}  // namespace

TEST_CASE("kernel closed-form values") {
    const Vec3 ez(0, 0, 1);
    CHECK((kernel_Kv(Vec3(0, 0, 1), ez) - Vec3(0, 0, -2)).norm() < 1e-15);
    CHECK((kernel_Kv(Vec3(1, 0, 0), ez) - Vec3(0, 0, 1)).norm() < 1e-15);
    CHECK((kernel_Kv(Vec3(0, 0, 2), ez) - Vec3(0, 0, -0.25)).norm() < 1e-15);
    CHECK_THROWS_AS(kernel_Kv(Vec3(0, 0, 1e-13), ez), std::domain_error);
}

TEST_CASE("kernel equals the gradient of v.x/|x|^3") {
    Rng rng(1001);
    const double step = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        const Vec3 v = random_unit(rng);
        Vec3 x = random_unit(rng) * rng.uniform(0.5, 5.0);
        const Vec3 k = kernel_Kv(x, v);
        Vec3 fd;
        for (int a = 0; a < 3; ++a) {
            Vec3 hi = x, lo = x;
            hi[a] += step;
            lo[a] -= step;
            fd[a] = (kernel_potential(hi, v) - kernel_potential(lo, v)) / (2 * step);
        }
        CHECK((k - fd).norm() <= 1e-6 * k.norm());
    }
}

TEST_CASE("kernel homogeneity of degree -3") {
    Rng rng(1002);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 v = random_unit(rng);
        const Vec3 x = random_unit(rng) * rng.uniform(0.3, 3.0);
        const double t = rng.uniform(0.1, 10.0);
        const Vec3 lhs = kernel_Kv(t * x, v);
        const Vec3 rhs = kernel_Kv(x, v) / (t * t * t);
        CHECK((lhs - rhs).norm() <= 1e-12 * rhs.norm());
    }
}

TEST_CASE("field_component basics") {
    const Vec3 ez(0, 0, 1);
    CHECK(field_component(DiscreteVectorMeasure{}, Vec3(0, 0, 1), ez, 1.0) == 0.0);

    const DiscreteVectorMeasure dipole({{Vec3(0, 0, 0), Vec3(0, 0, 1)}});
    CHECK(field_component(dipole, Vec3(0, 0, 1), ez, 1.0) == doctest::Approx(2.0));

    Rng rng(1003);
    const Box3 box = unit_slab();
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu1 = random_measure(rng, box, 3);
        const auto mu2 = random_measure(rng, box, 4);
        std::vector<Atom> both = mu1.atoms();
        both.insert(both.end(), mu2.atoms().begin(), mu2.atoms().end());
        const auto sum = DiscreteVectorMeasure::merged(both);
        const Vec3 x(0.3, 0.4, 1.5);
        const double lhs = field_component(sum, x, ez, 1.0);
        const double rhs =
            field_component(mu1, x, ez, 1.0) + field_component(mu2, x, ez, 1.0);
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("assemble reproduces direct field summation") {
    Rng rng(1004);
    const Box3 box = unit_slab();

    SUBCASE("one sensor, one node") {
        const auto space = centers_space(box, {1, 1, 1});
        SensorGrid sensors;
        sensors.direction = Vec3(0, 0, 1);
        sensors.points = {Vec3(0.2, 0.3, 1.4)};
        sensors.weights = VectorXd::Constant(1, 1.0);
        const auto model = assemble(space, sensors, unit_options());
        REQUIRE(model.dense());
        const Vec3 expected =
            -1.0 * kernel_Kv(sensors.points[0] - space.nodes()[0], sensors.direction);
        CHECK((model.matrix().row(0).transpose() - expected).norm() < 1e-15);
    }

    SUBCASE("matrix-vector equals per-sensor sums on a 5-node/7-sensor case") {
        const auto space = centers_space(box, {5, 1, 1});
        const SensorGrid sensors = random_sensors(rng, 7, box);
        const auto model = assemble(space, sensors, unit_options());
        const VectorXd m = random_vector(rng, model.num_unknowns());
        const VectorXd via_matrix = model.apply(m);
        const VectorXd direct =
            apply_measure(sensors, measure_from_stacked(m, space), 1.0);
        CHECK((via_matrix - direct).norm() <= 1e-12 * (1.0 + direct.norm()));

        CHECK(model.apply(VectorXd::Zero(model.num_unknowns())).norm() == 0.0);
    }

    SUBCASE("matrix-free path agrees with the dense one") {
        const auto space = centers_space(box, {2, 2, 1});
        const SensorGrid sensors = random_sensors(rng, 6, box);
        const auto dense_model = assemble(space, sensors, unit_options());
        AssembleOptions tiny = unit_options();
        tiny.dense_memory_cap = 16;  // force the fallback
        const auto free_model = assemble(space, sensors, tiny);
        CHECK(!free_model.dense());
        const VectorXd m = random_vector(rng, dense_model.num_unknowns());
        CHECK((dense_model.apply(m) - free_model.apply(m)).norm() <=
              1e-13 * (1.0 + dense_model.apply(m).norm()));
        const VectorXd g = random_vector(rng, sensors.size());
        CHECK((dense_model.adjoint_apply(g) - free_model.adjoint_apply(g)).norm() <=
              1e-13 * (1.0 + dense_model.adjoint_apply(g).norm()));
    }
}

TEST_CASE("separation gap enforcement") {
    const Box3 box = unit_slab();
    const auto space = centers_space(box, {2, 2, 1});
    SensorGrid sensors = plane_sensors(box, 3, 3, 0.05);
    // default gap is one voxel diagonal (~0.61), sensors sit 0.05 above
    CHECK_THROWS_AS(assemble(space, sensors), std::invalid_argument);
    CHECK_NOTHROW(assemble(space, sensors, unit_options(0.04)));
}

TEST_CASE("adjoint identity <Am,g>_H = sum_k m_k . (A*g)_k") {
    Rng rng(1005);
    const Box3 box = unit_slab();
    for (int trial = 0; trial < 25; ++trial) {
        const auto space = centers_space(box, {int(1 + rng.next_u64() % 3),
                                               int(1 + rng.next_u64() % 3),
                                               int(1 + rng.next_u64() % 2)});
        const SensorGrid sensors =
            random_sensors(rng, int(2 + rng.next_u64() % 8), box);
        const auto model = assemble(space, sensors, unit_options());
        const VectorXd m = random_vector(rng, model.num_unknowns());
        const VectorXd g = random_vector(rng, sensors.size());

        // left side by direct summation, right side via adjoint_apply
        const VectorXd am =
            apply_measure(sensors, measure_from_stacked(m, space), 1.0);
        const double lhs = model.inner(am, g);
        const double rhs = m.dot(model.adjoint_apply(g));
        CHECK(std::abs(lhs - rhs) <= 1e-10 * (model.norm(am) * g.norm() + 1.0));
    }
}

TEST_CASE("adjoint field at nodes and continuity") {
    Rng rng(1006);
    const Box3 box = unit_slab();
    const auto space = centers_space(box, {3, 2, 2});
    const SensorGrid sensors = random_sensors(rng, 9, box);
    const auto model = assemble(space, sensors, unit_options());
    const VectorXd g = random_vector(rng, sensors.size());

    CHECK(model.adjoint_apply(VectorXd::Zero(sensors.size())).norm() == 0.0);
    CHECK(model.adjoint_field_at(VectorXd::Zero(sensors.size()), Vec3(0.5, 0.5, 0.2))
              .norm() == 0.0);

    const VectorXd at_nodes = model.adjoint_apply(g);
    for (int k = 0; k < model.num_nodes(); ++k) {
        const Vec3 via_field = model.adjoint_field_at(g, space.nodes()[k]);
        CHECK((via_field - Vec3(at_nodes.segment<3>(3 * k))).norm() <=
              1e-14 * (1.0 + via_field.norm()));
    }

    // single sensor, single node: hand multiplication
    {
        const auto one_space = centers_space(box, {1, 1, 1});
        SensorGrid one;
        one.direction = Vec3(0, 0, 1);
        one.points = {Vec3(0.4, 0.6, 1.2)};
        one.weights = VectorXd::Constant(1, 0.7);
        const auto m1 = assemble(one_space, one, unit_options());
        VectorXd g1(1);
        g1 << 2.5;
        const Vec3 expected =
            0.7 * 2.5 *
            (-1.0 * kernel_Kv(one.points[0] - one_space.nodes()[0], one.direction));
        CHECK((m1.adjoint_apply(g1) - VectorXd(expected)).norm() < 1e-15);
    }

    // finite-difference Lipschitz estimate at a fixed interior point
    const Vec3 x0(0.51, 0.43, 0.22);
    const double h = 1e-6;
    const Vec3 dx(h, 0, 0);
    const double df =
        (model.adjoint_field_at(g, x0 + dx) - model.adjoint_field_at(g, x0)).norm();
    // crude Lipschitz bound from two coarser evaluations
    const Vec3 DX(1e-2, 0, 0);
    const double coarse =
        (model.adjoint_field_at(g, x0 + DX) - model.adjoint_field_at(g, x0)).norm() /
        1e-2;
    CHECK(df <= 10.0 * (coarse + 1.0) * h);
}

TEST_CASE("adjoint_apply is linear") {
    Rng rng(1007);
    const Box3 box = unit_slab();
    const auto space = centers_space(box, {2, 2, 1});
    const SensorGrid sensors = random_sensors(rng, 5, box);
    const auto model = assemble(space, sensors, unit_options());
    const VectorXd g1 = random_vector(rng, 5), g2 = random_vector(rng, 5);
    const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    const VectorXd lhs = model.adjoint_apply(a * g1 + b * g2);
    const VectorXd rhs = a * model.adjoint_apply(g1) + b * model.adjoint_apply(g2);
    CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
}
