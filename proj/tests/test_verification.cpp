#include <catch2/catch_amalgamated.hpp>

#include "sbn/verification.hpp"
#include "support.hpp"

using namespace sbn;
using namespace sbn::test;

namespace {

struct SetupBundle {
    std::unique_ptr<TriangleMesh> mesh;
    std::unique_ptr<ProblemSetup> setup;
    std::unique_ptr<Assembler> assembler;
};

SetupBundle make_bundle(int nx, double dt) {
    SetupBundle b;
    b.mesh = std::make_unique<TriangleMesh>(build_channel_mesh(unit_channel(nx, nx)));
    b.setup = std::make_unique<ProblemSetup>(
        ProblemSetup::make(*b.mesh, Pairing::p2_p1, table2_params(), plain_nitsche(),
                           boundary_set_test1(), Sources{}, dt));
    b.assembler = std::make_unique<Assembler>(*b.setup);
    return b;
}

std::vector<SolutionState> two_level_trajectory(const FieldDofs& dofs, double dt) {
    std::vector<SolutionState> traj(2, SolutionState::zero(dofs));
    traj[1].n = 1;
    traj[1].t = dt;
    return traj;
}

}  // namespace

TEST_CASE("convergence rates", "[verification]") {
    CHECK(convergence_rate({0.4, 0.1})[0] == Catch::Approx(2.0).epsilon(1e-14));
    // the published indicator pairs
    CHECK(convergence_rate({6.7e-4, 2.7e-4})[0] == Catch::Approx(1.31).margin(0.005));
    CHECK(convergence_rate({4.6e-7, 2.5e-7})[0] == Catch::Approx(0.88).margin(0.005));
    CHECK_THROWS_AS(convergence_rate({1.0, 0.0}), UsageError);
    CHECK_THROWS_AS(convergence_rate({1.0, -2.0}), UsageError);
}

TEST_CASE("convergence rate invariances", "[verification]") {
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> unif(0.1, 10.0);
    // power-of-two rescaling leaves rates exactly unchanged
    const std::vector<double> errors = {unif(rng), unif(rng), unif(rng), unif(rng)};
    const auto base = convergence_rate(errors);
    for (int k : {-3, 2, 7}) {
        std::vector<double> scaled = errors;
        for (double& e : scaled) e = std::ldexp(e, k);
        const auto rates = convergence_rate(scaled);
        for (size_t i = 0; i < rates.size(); ++i) CHECK(rates[i] == base[i]);
    }
    // general positive scaling to near machine accuracy
    std::vector<double> scaled = errors;
    for (double& e : scaled) e *= 3.7;
    const auto rates = convergence_rate(scaled);
    for (size_t i = 0; i < rates.size(); ++i)
        CHECK_THAT(rates[i], Catch::Matchers::WithinAbs(base[i], 1e-12));

    // manufactured sequence e_i = C (h/2^i)^p recovers p
    for (double p : {0.5, 1.0, 1.97, 3.0}) {
        std::vector<double> seq;
        for (int i = 0; i < 5; ++i) seq.push_back(2.3 * std::pow(0.27 / (1 << i), p));
        for (double r : convergence_rate(seq))
            CHECK_THAT(r, Catch::Matchers::WithinAbs(p, 1e-12));
    }
}

TEST_CASE("error norms of identical trajectories vanish", "[verification]") {
    const SetupBundle b = make_bundle(2, 1e-3);
    auto traj = two_level_trajectory(b.setup->dofs, 1e-3);
    // make the state nontrivial
    for (size_t i = 0; i < traj[1].v.size(); ++i) traj[1].v[i] = std::sin(0.3 * i);
    for (size_t i = 0; i < traj[1].xi.size(); ++i) traj[1].xi[i] = std::cos(0.2 * i);
    traj[1].refresh_pressure_cache(b.setup->coeffs);
    const ErrorIndicators e = error_norms(traj, *b.assembler, traj, *b.assembler);
    CHECK(e.eps_f <= 1e-14);
    CHECK(e.eps_p <= 1e-14);
    CHECK(e.eps_fp <= 1e-14);
    CHECK(e.eps_pp <= 1e-14);
}

TEST_CASE("error norms are symmetric on a shared mesh", "[verification]") {
    const SetupBundle b = make_bundle(2, 1e-3);
    auto ta = two_level_trajectory(b.setup->dofs, 1e-3);
    auto tb = two_level_trajectory(b.setup->dofs, 1e-3);
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (auto* traj : {&ta, &tb}) {
        for (double& x : traj->at(1).v) x = unif(rng);
        for (double& x : traj->at(1).U) x = unif(rng);
        for (double& x : traj->at(1).pf) x = unif(rng);
        for (double& x : traj->at(1).xi) x = unif(rng);
        for (double& x : traj->at(1).eta) x = unif(rng);
        traj->at(1).refresh_pressure_cache(b.setup->coeffs);
    }
    const ErrorIndicators ab = error_norms(ta, *b.assembler, tb, *b.assembler);
    const ErrorIndicators ba = error_norms(tb, *b.assembler, ta, *b.assembler);
    CHECK_THAT(ab.eps_f, Catch::Matchers::WithinRel(ba.eps_f, 1e-14));
    CHECK_THAT(ab.eps_p, Catch::Matchers::WithinRel(ba.eps_p, 1e-14));
    CHECK_THAT(ab.eps_fp, Catch::Matchers::WithinRel(ba.eps_fp, 1e-14));
    CHECK_THAT(ab.eps_pp, Catch::Matchers::WithinRel(ba.eps_pp, 1e-14));
}

TEST_CASE("hand-computed error norms", "[verification]") {
    const double dt = 1e-3;
    const SetupBundle b = make_bundle(2, dt);

    SECTION("constant velocity difference of (1,0)") {
        auto ref = two_level_trajectory(b.setup->dofs, dt);
        auto coarse = two_level_trajectory(b.setup->dofs, dt);
        coarse[1].v = constant_vector_field(b.setup->dofs.v, {1.0, 0.0});
        const ErrorIndicators e = error_norms(coarse, *b.assembler, ref, *b.assembler);
        // H1 seminorm of a constant is 0; the fluid half has area 1
        CHECK_THAT(e.eps_f, Catch::Matchers::WithinRel(std::sqrt(dt), 1e-12));
        CHECK(e.eps_fp == 0.0);
        CHECK(e.eps_pp == 0.0);
    }

    SECTION("porous pressure difference p_p = x") {
        auto ref = two_level_trajectory(b.setup->dofs, dt);
        auto coarse = two_level_trajectory(b.setup->dofs, dt);
        // p_p = k1 xi with xi = x / k1 (eta = 0), exactly linear in P1
        const auto& dm = b.setup->dofs.xi;
        for (int s = 0; s < dm.n_scalar; ++s)
            coarse[1].xi[s] = dm.scalar_position[s].x / b.setup->coeffs.k1;
        coarse[1].refresh_pressure_cache(b.setup->coeffs);
        const ErrorIndicators e = error_norms(coarse, *b.assembler, ref, *b.assembler);
        // integral of x^2 over [0,1] x [-1,0] is 1/3
        CHECK_THAT(e.eps_pp, Catch::Matchers::WithinRel(std::sqrt(dt / 3.0), 1e-12));
    }

    SECTION("mismatched grids are rejected") {
        auto a = two_level_trajectory(b.setup->dofs, dt);
        auto c = two_level_trajectory(b.setup->dofs, dt);
        c[1].t = 2 * dt;
        CHECK_THROWS_AS(error_norms(a, *b.assembler, c, *b.assembler), UsageError);
    }
}

TEST_CASE("structured point location agrees with the walk", "[verification]") {
    const TriangleMesh grid = build_channel_mesh(unit_channel(4, 4));
    TriangleMesh walked = grid;
    walked.grid.reset();  // force the fallback path
    const GeometryCache geom(grid);
    const PointLocator fast(grid, geom);
    const PointLocator slow(walked, geom);
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> ux(0.0, 1.0), uy(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const Vec2 x{ux(rng), uy(rng)};
        const Region r = x.y >= 0.0 ? Region::fluid : Region::porous;
        const auto a = fast.locate(x, r);
        const auto c = slow.locate(x, r);
        // both must reproduce the point from their barycentric coordinates
        for (const auto& hit : {a, c}) {
            const Vec2 back = geom.physical_point(hit.tri, hit.bary);
            CHECK_THAT(back.x, Catch::Matchers::WithinAbs(x.x, 1e-12));
            CHECK_THAT(back.y, Catch::Matchers::WithinAbs(x.y, 1e-12));
        }
    }
}

TEST_CASE("oracle comparison on zero data", "[verification]") {
    const TriangleMesh mesh = build_channel_mesh(unit_channel(2, 2));
    const OracleReport rep =
        oracle_compare(mesh, Pairing::p2_p1, table2_params(), plain_nitsche(),
                       boundary_set_test1(), Sources{}, 4e-3, {2e-3, 1e-3});
    REQUIRE(rep.discrepancy.size() == 2);
    CHECK(rep.discrepancy[0] <= 1e-12);
    CHECK(rep.discrepancy[1] <= 1e-12);
    CHECK_FALSE(rep.fitted_order.has_value());  // no positive discrepancies to fit
}

TEST_CASE("oracle comparison validates the sweep", "[verification]") {
    const TriangleMesh mesh = build_channel_mesh(unit_channel(2, 2));
    CHECK_THROWS_AS(oracle_compare(mesh, Pairing::p2_p1, table2_params(),
                                   plain_nitsche(), boundary_set_test1(), Sources{},
                                   4e-3, {1e-3, 2e-3}),
                    UsageError);
}

TEST_CASE("study rejects a reference coarser than the levels", "[verification]") {
    StudyProtocol proto;
    proto.level_nx = {5, 10};
    proto.reference_nx = 8;  // coarser than the finest level
    StudyPhysics phys;
    phys.params = table2_params();
    phys.nitsche = plain_nitsche();
    phys.bcs = boundary_set_test1();
    phys.sources = make_test1_sources(phys.params);
    CHECK_THROWS_AS(run_convergence_study(proto, phys), UsageError);
}

TEST_CASE("tiny convergence study produces a well-formed report", "[verification]") {
    StudyProtocol proto;
    proto.level_nx = {2, 4};
    proto.reference_nx = 8;
    proto.dt = 1e-4;
    proto.T = 2e-4;
    StudyPhysics phys;
    phys.params = table2_params();
    NitscheParameters nits = plain_nitsche();
    nits.gamma_stab = 1.0;
    phys.nitsche = nits;
    phys.bcs = boundary_set_test1();
    phys.sources = make_test1_sources(phys.params);
    const ConvergenceReport rep = run_convergence_study(proto, phys);
    REQUIRE(rep.h.size() == 2);
    REQUIRE(rep.errors.size() == 2);
    REQUIRE(rep.rates.size() == 1);
    CHECK(rep.h[1] == rep.h[0] / 2.0);
    for (const ErrorIndicators& e : rep.errors) {
        CHECK(std::isfinite(e.eps_f));
        CHECK(e.eps_f > 0.0);
        CHECK(std::isfinite(e.eps_p));
        CHECK(std::isfinite(e.eps_fp));
        CHECK(std::isfinite(e.eps_pp));
    }
}
