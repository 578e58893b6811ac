#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "magtv/certificate.hpp"
#include "magtv/solver.hpp"

using namespace magtv;
using namespace magtv::testing;

namespace {

struct Setup {
    DipoleGsmSpace space;
    SensorGrid sensors;
    ForwardModel model;
    VectorXd f;
};

Setup make_setup(Rng& rng, std::array<int, 3> res, int num_sensors) {
    const Box3 box = unit_slab();
    auto space = centers_space(box, res);
    auto sensors = random_sensors(rng, num_sensors, box);
    auto model = assemble(space, sensors, unit_options());
    VectorXd m0 = random_vector(rng, model.num_unknowns(), 0.5);
    VectorXd f = model.apply(m0) + random_vector(rng, num_sensors, 0.05);
    return Setup{std::move(space), std::move(sensors), std::move(model),
                 std::move(f)};
}

}  // namespace

TEST_CASE("zero measure certifies above lambda_max") {
    Rng rng(41);
    const auto s = make_setup(rng, {2, 2, 1}, 8);
    const double lmax = lambda_max(s.model, s.f);
    const auto rep = certificate_check(s.model, s.f, 1.5 * lmax,
                                       DiscreteVectorMeasure{}, 1e-8);
    CHECK(rep.pass);
    CHECK(rep.bound_gap == 0.0);
    CHECK(rep.bound_margin > 0.0);  // strict margin reported
    CHECK(rep.alignment_gap == 0.0);
    CHECK(rep.active_set.empty());

    // below lambda_max the zero measure fails
    const auto bad = certificate_check(s.model, s.f, 0.5 * lmax,
                                       DiscreteVectorMeasure{}, 1e-8);
    CHECK(!bad.pass);
    CHECK(bad.bound_gap > 0.0);
}

TEST_CASE("solver output certifies; corrupted moments fail") {
    Rng rng(42);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = make_setup(rng, {2, 2, 1}, 10);
        const double lambda = 0.3 * lambda_max(s.model, s.f);
        const auto res = solve(s.model, s.f, lambda);
        REQUIRE(!res.certificate.active_set.empty());

        const auto rep = certificate_check(s.model, s.f, lambda, res.measure, 1e-6);
        CHECK(rep.pass);

        // doubling one active moment breaks alignment and the objective
        VectorXd corrupted = res.moments;
        const int k = res.certificate.active_set.front();
        corrupted.segment<3>(3 * k) *= 2.0;
        const auto bad =
            certificate_check_stacked(s.model, s.f, lambda, corrupted, 1e-6);
        CHECK(!bad.pass);
        CHECK(bad.alignment_gap > 1e-6 * lambda / 2);
        CHECK(objective_value(s.model, s.f, lambda, corrupted) >
              objective_value(s.model, s.f, lambda, res.moments));
    }
}

TEST_CASE("off-node atoms are rejected") {
    Rng rng(43);
    const auto s = make_setup(rng, {2, 2, 1}, 6);
    const DiscreteVectorMeasure off({{Vec3(0.11, 0.22, 0.05), Vec3(1, 0, 0)}});
    CHECK_THROWS_AS(certificate_check(s.model, s.f, 0.5, off, 1e-6),
                    std::domain_error);
}

TEST_CASE("certificate soundness and necessity against the oracle") {
    Rng rng(44);
    for (int trial = 0; trial < 8; ++trial) {
        const auto s = make_setup(rng, {2, 2, 1}, 8);
        const double lambda =
            rng.uniform(0.15, 0.6) * lambda_max(s.model, s.f);
        const VectorXd opt = oracle_solve(s.model, s.f, lambda);
        const auto rep = certificate_check_stacked(s.model, s.f, lambda, opt, 1e-6);
        CHECK(rep.pass);  // soundness

        const double best = objective_value(s.model, s.f, lambda, opt);
        for (int probe = 0; probe < 5; ++probe) {
            VectorXd worse = opt + random_vector(rng, opt.size(), 0.05);
            const double obj = objective_value(s.model, s.f, lambda, worse);
            if (obj <= best + 1e-6 * (1.0 + best)) continue;  // too close to call
            const auto bad =
                certificate_check_stacked(s.model, s.f, lambda, worse, 1e-7);
            CHECK(!bad.pass);  // necessity
        }
    }
}

TEST_CASE("active duals sit on the lambda/2 sphere for passing certificates") {
    Rng rng(45);
    const auto s = make_setup(rng, {2, 2, 1}, 12);
    const double lambda = 0.25 * lambda_max(s.model, s.f);
    SolveOptions opts;
    opts.certificate_tol = 1e-8;
    const auto res = solve(s.model, s.f, lambda, opts);
    const auto rep = certificate_check_stacked(s.model, s.f, lambda, res.moments, 1e-6);
    REQUIRE(rep.pass);
    for (int k : rep.active_set) {
        CHECK(std::abs(rep.duals[k].norm() - lambda / 2) <= 1e-6 * lambda / 2);
    }
}

TEST_CASE("certificate scaling covariance") {
    Rng rng(46);
    const auto s = make_setup(rng, {2, 2, 1}, 9);
    const double lambda = 0.3 * lambda_max(s.model, s.f);
    const auto res = solve(s.model, s.f, lambda);
    const auto rep = certificate_check_stacked(s.model, s.f, lambda, res.moments, 1e-6);

    const double t = 7.5;
    const auto scaled = certificate_check_stacked(s.model, t * s.f, t * lambda,
                                                  t * res.moments, 1e-6);
    CHECK(scaled.pass == rep.pass);
    for (int k = 0; k < s.model.num_nodes(); ++k) {
        CHECK((scaled.duals[k] - t * rep.duals[k]).norm() <=
              1e-9 * (1.0 + t * rep.duals[k].norm()));
    }
    CHECK(scaled.bound_gap == doctest::Approx(t * rep.bound_gap).epsilon(1e-9));
}

TEST_CASE("equivalence_check identities") {
    Rng rng(47);
    const auto s = make_setup(rng, {2, 2, 1}, 10);
    const double lambda = 0.3 * lambda_max(s.model, s.f);
    SolveOptions opts;
    opts.certificate_tol = 1e-9;
    const auto res = solve(s.model, s.f, lambda, opts);
    REQUIRE(!res.measure.empty());

    SUBCASE("a measure is equivalent to itself") {
        const auto rep =
            equivalence_check(s.model, s.f, lambda, res.measure, res.measure, 1e-6);
        CHECK(rep.same_image);
        CHECK(rep.condition_b);
    }

    SUBCASE("doubling keeps moments parallel but changes the image") {
        std::vector<Atom> doubled;
        for (const Atom& a : res.measure.atoms()) {
            doubled.push_back({a.position, 2.0 * a.moment});
        }
        const auto rep = equivalence_check(s.model, s.f, lambda, res.measure,
                                           DiscreteVectorMeasure(doubled), 1e-6);
        CHECK(rep.condition_b);
        CHECK(!rep.same_image);
    }

    SUBCASE("an uncertified first candidate is a precondition error") {
        CHECK_THROWS_AS(equivalence_check(s.model, s.f, 123.0,
                                          DiscreteVectorMeasure{},
                                          res.measure, 1e-12),
                        std::invalid_argument);
    }
}

TEST_CASE("equivalence on a deliberately rank-deficient model") {
    Rng rng(48);
    const Box3 box = unit_slab();
    const auto space = centers_space(box, {2, 2, 1});
    const SensorGrid sensors = random_sensors(rng, 8, box);
    auto base = assemble(space, sensors, unit_options());

    // duplicate node 0's columns into node 3: two generating measures with
    // identical images
    MatrixXd B = base.matrix();
    B.middleCols<3>(9) = B.middleCols<3>(0);
    const auto model = ForwardModel::from_parts(space, sensors, 1.0, std::move(B));

    VectorXd m0 = VectorXd::Zero(model.num_unknowns());
    m0.segment<3>(0) = Vec3(0.9, 0.2, -0.4);
    const VectorXd f = model.apply(m0);
    const double lambda = 0.4 * lambda_max(model, f);

    SolveOptions opts;
    opts.certificate_tol = 1e-9;
    const auto res = solve(model, f, lambda, opts);
    const VectorXd oracle = oracle_solve(model, f, lambda);

    const auto mu = res.measure;
    const auto mu_prime = measure_from_stacked(oracle, space);
    REQUIRE(certificate_check(model, f, lambda, mu, 1e-6).pass);
    REQUIRE(certificate_check(model, f, lambda, mu_prime, 1e-6).pass);

    const auto rep = equivalence_check(model, f, lambda, mu, mu_prime, 1e-6, 1e-5);
    CHECK(rep.same_image);
    CHECK(rep.condition_b);
}

TEST_CASE("dual field sampling and level sets") {
    Rng rng(49);
    const auto s = make_setup(rng, {2, 2, 1}, 8);
    const std::array<int, 3> fine_res = {4, 4, 2};

    SUBCASE("zero data gives a zero field") {
        const auto sample = dual_field_sample(
            s.model, VectorXd::Zero(s.f.size()), DiscreteVectorMeasure{}, fine_res);
        CHECK(sample.values.maxCoeff() == 0.0);
        CHECK(level_set_extract(sample, 1.0, 1e-3).empty());
        CHECK(level_set_extract(sample, 0.0, 1e-12).size() ==
              sample.points.size());
    }

    SUBCASE("node values match the report and samples dominate nodes") {
        const double lambda = 0.3 * lambda_max(s.model, s.f);
        const auto res = solve(s.model, s.f, lambda);
        const auto rep =
            certificate_check(s.model, s.f, lambda, res.measure, 1e-6);
        const auto sample = dual_field_sample(s.model, s.f, res.measure, fine_res);

        double node_max = 0;
        for (int k = 0; k < s.model.num_nodes(); ++k) {
            node_max = std::max(node_max, rep.duals[k].norm());
            // node points ride at the tail of the sample list
            const Eigen::Index idx = sample.num_grid_points + k;
            CHECK(std::abs(sample.values[idx] - rep.duals[k].norm()) <=
                  1e-12 * (1.0 + node_max));
        }
        CHECK(sample.values.maxCoeff() >= node_max - 1e-15);
    }

    SUBCASE("active atoms hug the lambda/2 level set") {
        const double lambda = 0.3 * lambda_max(s.model, s.f);
        SolveOptions opts;
        opts.certificate_tol = 1e-8;
        const auto res = solve(s.model, s.f, lambda, opts);
        REQUIRE(!res.measure.empty());
        const auto sample = dual_field_sample(s.model, s.f, res.measure, fine_res);
        const auto band =
            level_set_extract(sample, lambda / 2, 1e-3 * lambda / 2);
        REQUIRE(!band.empty());
        const VoxelPartition fine(s.space.region(), fine_res);
        for (const Vec3& p : support_points(res.measure)) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : band) best = std::min(best, (p - q).norm());
            CHECK(best <= fine.mesh_size() + 1e-12);
        }
    }

    SUBCASE("sample grid must be strictly finer") {
        CHECK_THROWS_AS(
            dual_field_sample(s.model, s.f, DiscreteVectorMeasure{}, {2, 2, 1}),
            std::invalid_argument);
    }
}

TEST_CASE("atom elimination lists provably inactive nodes") {
    Rng rng(50);
    const auto s = make_setup(rng, {2, 2, 1}, 8);
    const std::array<int, 3> fine_res = {4, 4, 2};

    SUBCASE("all nodes inactive above lambda_max with a wide margin") {
        const double lmax = lambda_max(s.model, s.f);
        const double lambda = 4.0 * lmax;
        const auto rep = certificate_check(s.model, s.f, lambda,
                                           DiscreteVectorMeasure{}, 1e-8);
        const auto sample =
            dual_field_sample(s.model, s.f, DiscreteVectorMeasure{}, fine_res);
        const auto elim =
            atom_elimination_check(rep, sample, s.space, lambda, 0.5 * lmax);
        CHECK(elim.inactive_nodes.size() == std::size_t(s.model.num_nodes()));
        CHECK(elim.active_overlap.empty());
    }

    SUBCASE("solver active set avoids the eliminated list") {
        const double lambda = 0.3 * lambda_max(s.model, s.f);
        const auto res = solve(s.model, s.f, lambda);
        const auto rep = certificate_check(s.model, s.f, lambda, res.measure, 1e-6);
        const auto sample = dual_field_sample(s.model, s.f, res.measure, fine_res);
        const auto elim = atom_elimination_check(rep, sample, s.space, lambda,
                                                 1e-3 * lambda / 2);
        CHECK(elim.active_overlap.empty());
    }

    SUBCASE("oversized eps gives an empty list") {
        const double lambda = 0.3 * lambda_max(s.model, s.f);
        const auto rep = certificate_check(s.model, s.f, lambda,
                                           DiscreteVectorMeasure{}, 1e-6);
        const auto sample =
            dual_field_sample(s.model, s.f, DiscreteVectorMeasure{}, fine_res);
        const auto elim =
            atom_elimination_check(rep, sample, s.space, lambda, lambda);
        CHECK(elim.inactive_nodes.empty());
    }
}
