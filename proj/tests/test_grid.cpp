#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "magtv/grid.hpp"
#include "magtv/test_functions.hpp"

using namespace magtv;
using magtv::testing::centers_space;
using magtv::testing::random_measure;
using magtv::testing::unit_slab;

TEST_CASE("voxel partition membership is total and half-open") {
    const VoxelPartition part(unit_slab(), {4, 4, 2});
    CHECK(part.num_cells() == 32);
    CHECK(part.mesh_size() == doctest::Approx(std::sqrt(3 * 0.25 * 0.25)));

    // interior facet points go to the high-side cell
    CHECK(part.cell_index(Vec3(0.25, 0.1, 0.1)) ==
          part.cell_index(Vec3(0.26, 0.1, 0.1)));
    // region max faces stay inside the last cell
    CHECK(part.cell_index(Vec3(1.0, 1.0, 0.5)) == part.num_cells() - 1);
    CHECK_THROWS_AS(part.cell_index(Vec3(1.1, 0.5, 0.2)), std::domain_error);

    // every cell center maps back to its own cell
    for (int c = 0; c < part.num_cells(); ++c) {
        CHECK(part.cell_index(part.cell_center(c)) == c);
    }
}

TEST_CASE("projection collapses atoms to owning nodes") {
    const auto space = centers_space(unit_slab(), {2, 2, 1});
    const Vec3 interior(0.1, 0.2, 0.3);  // cell 0, center (0.25, 0.25, 0.25)
    const Vec3 node0 = space.nodes()[space.owning_node(interior)];

    SUBCASE("single atom moves to the node") {
        const Vec3 m(0.3, -0.2, 1.0);
        const auto proj =
            project_onto_gsm(DiscreteVectorMeasure({{interior, m}}), space);
        REQUIRE(proj.size() == 1);
        CHECK(proj.atoms()[0].position == node0);
        CHECK((proj.atoms()[0].moment - m).norm() == 0.0);
    }

    SUBCASE("cancelling atoms vanish") {
        const Vec3 other(0.2, 0.1, 0.2);
        const Vec3 m(1, 2, 3);
        const auto proj = project_onto_gsm(
            DiscreteVectorMeasure({{interior, m}, {other, -m}}), space);
        CHECK(proj.empty());
    }

    SUBCASE("orthogonal moments shrink TV strictly") {
        const Vec3 other(0.2, 0.1, 0.2);
        const auto mu = DiscreteVectorMeasure(
            {{interior, Vec3(1, 0, 0)}, {other, Vec3(0, 1, 0)}});
        const auto proj = project_onto_gsm(mu, space);
        CHECK(tv_norm(proj) == doctest::Approx(std::sqrt(2.0)));
        CHECK(tv_norm(mu) == doctest::Approx(2.0));
    }

    SUBCASE("atom outside the region is named") {
        CHECK_THROWS_WITH_AS(
            project_onto_gsm(
                DiscreteVectorMeasure({{Vec3(2, 2, 2), Vec3(1, 0, 0)}}), space),
            doctest::Contains("outside"), std::domain_error);
    }
}

TEST_CASE("projection properties over random measures") {
    Rng rng(42);
    const Box3 box = unit_slab();
    const auto space = centers_space(box, {3, 3, 2});
    for (int trial = 0; trial < 200; ++trial) {
        const auto mu = random_measure(rng, box, 1 + int(rng.next_u64() % 8));
        const auto proj = project_onto_gsm(mu, space);
        // TV non-expansiveness
        CHECK(tv_norm(proj) <= tv_norm(mu) + 1e-12);
        // Hausdorff bound by the mesh size
        CHECK(hausdorff_distance(support_points(proj), support_points(mu)) <=
              space.mesh_size() + 1e-12);
        // idempotence
        const auto twice = project_onto_gsm(proj, space);
        CHECK(twice.size() == proj.size());
        CHECK(tv_norm(twice) == doctest::Approx(tv_norm(proj)).epsilon(1e-15));
        for (std::size_t i = 0; i < proj.size(); ++i) {
            CHECK(twice.atoms()[i].position == proj.atoms()[i].position);
            CHECK((twice.atoms()[i].moment - proj.atoms()[i].moment).norm() ==
                  0.0);
        }
    }
}

TEST_CASE("r-proxy of projections decreases under refinement") {
    Rng rng(5);
    const Box3 box = unit_slab();
    const TestFunctionFamily phi(box);
    const auto mu = random_measure(rng, box, 4);

    double prev = std::numeric_limits<double>::infinity();
    double last = prev;
    VoxelPartition part(box, {2, 2, 1});
    for (int level = 0; level < 5; ++level) {
        const auto space = DipoleGsmSpace::cell_centers(part);
        last = r_distance_proxy(project_onto_gsm(mu, space), mu, phi);
        if (level >= 2) CHECK(last <= prev + 1e-9);  // eventually decreasing
        prev = last;
        part = part.refined(2);
    }
    CHECK(last < 0.05);
}

TEST_CASE("stacked moment round trip and node lookup") {
    const auto space = centers_space(unit_slab(), {2, 2, 1});
    VectorXd m = VectorXd::Zero(3 * space.num_nodes());
    m.segment<3>(0) = Vec3(1, -2, 0.5);
    m.segment<3>(9) = Vec3(0, 0.25, 0);
    const auto mu = measure_from_stacked(m, space);
    CHECK(mu.size() == 2);
    CHECK(space.supported_on_nodes(mu));
    const VectorXd back = stacked_from_measure(mu, space);
    CHECK((back - m).norm() == 0.0);

    const DiscreteVectorMeasure off({{Vec3(0.1, 0.1, 0.1), Vec3(1, 0, 0)}});
    CHECK(!space.supported_on_nodes(off));
    CHECK_THROWS_AS(stacked_from_measure(off, space), std::domain_error);
}

TEST_CASE("nodes sharing a voxel split it by nearest distance") {
    const VoxelPartition part(unit_slab(), {1, 1, 1});
    const Vec3 a(0.25, 0.5, 0.25), b(0.75, 0.5, 0.25);
    const auto space = DipoleGsmSpace::with_nodes(part, {a, b});
    CHECK(space.owning_node(Vec3(0.1, 0.5, 0.25)) == 0);
    CHECK(space.owning_node(Vec3(0.9, 0.5, 0.25)) == 1);
    // every voxel needs a node
    CHECK_THROWS_AS(DipoleGsmSpace::with_nodes(VoxelPartition(unit_slab(), {2, 1, 1}),
                                               {a}),
                    std::invalid_argument);
}
