#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

#include "statflow/mc.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

using namespace statflow;

TEST_CASE("uniform variables: law close to U[-1,1] (Kolmogorov-Smirnov)") {
    const int n = 10000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) draws[i] = uniform_variable(42, i, 3);
    std::sort(draws.begin(), draws.end());
    double ks = 0.0;
    for (int i = 0; i < n; ++i) {
        const double cdf = (draws[i] + 1.0) / 2.0;
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i + 1) / n));
        ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
        CHECK(draws[i] >= -1.0);
        CHECK(draws[i] <= 1.0);
    }
    CHECK(ks <= 0.02);
}

TEST_CASE("uniform variables: samples are uncorrelated across the sample index") {
    const int n = 10000;
    double sum_xy = 0.0, sum_x = 0.0, sum_y = 0.0, sum_xx = 0.0, sum_yy = 0.0;
    for (int m = 0; m < n; ++m) {
        const double x = uniform_variable(7, m, 0);
        const double y = uniform_variable(7, m + 1, 0);
        sum_xy += x * y;
        sum_x += x;
        sum_y += y;
        sum_xx += x * x;
        sum_yy += y * y;
    }
    const double cov = sum_xy / n - (sum_x / n) * (sum_y / n);
    const double var_x = sum_xx / n - (sum_x / n) * (sum_x / n);
    const double var_y = sum_yy / n - (sum_y / n) * (sum_y / n);
    CHECK(std::abs(cov / std::sqrt(var_x * var_y)) <= 0.05);
}

TEST_CASE("uniform variables: pure function of (seed, sample, index)") {
    CHECK(uniform_variable(1, 2, 3) == uniform_variable(1, 2, 3));
    CHECK(uniform_variable(1, 2, 3) != uniform_variable(1, 2, 4));
    CHECK(uniform_variable(1, 2, 3) != uniform_variable(2, 2, 3));
    CHECK(sample_seed(5, 0) != sample_seed(5, 1));
}

TEST_CASE("cavity law: zero perturbation gives the rigid rotation and unit lid") {
    RandomFieldSpec spec = RandomFieldSpec::cavity(11);
    spec.gamma1 = 0.0;
    spec.gamma2 = 0.0;
    const SampleFields s = draw_sample_lid_driven(spec, 0);
    for (const Vec2 x : {Vec2{0.3, 0.7}, Vec2{0.9, 0.1}}) {
        const Vec2 v = s.initial_velocity(x);
        CHECK(v.x == doctest::Approx(x.y - 0.5).epsilon(1e-14));
        CHECK(v.y == doctest::Approx(-(x.x - 0.5)).epsilon(1e-14));
    }
    const Vec2 lid = s.boundary_data({0.5, 1.0});
    CHECK(lid.x == doctest::Approx(1.0));
    CHECK(lid.y == 0.0);
    CHECK(s.boundary_data({0.5, 0.0}).norm() == 0.0);
}

TEST_CASE("cavity law: forced zero variables make the perturbation the identity") {
    const RandomFieldSpec spec = RandomFieldSpec::cavity(11);
    const std::vector<double> zeros(spec.n_variables(), 0.0);
    const SampleFields s = cavity_sample_from_variables(spec, zeros);
    for (const Vec2 x : {Vec2{0.25, 0.5}, Vec2{0.8, 0.35}}) {
        const Vec2 v = s.initial_velocity(x);
        CHECK(v.x == doctest::Approx(x.y - 0.5).epsilon(1e-14));
        CHECK(v.y == doctest::Approx(-(x.x - 0.5)).epsilon(1e-14));
    }
    CHECK(s.boundary_data({0.5, 1.0}).x == doctest::Approx(1.0));
}

TEST_CASE("cavity law: default parameters bound the lid speed by gamma2") {
    const RandomFieldSpec spec = RandomFieldSpec::cavity(1234);
    CHECK(spec.gamma1 == doctest::Approx(0.025));
    CHECK(spec.gamma2 == doctest::Approx(0.01));
    CHECK(spec.mode_count == 11);
    for (int m = 0; m < 50; ++m) {
        const SampleFields s = draw_sample_lid_driven(spec, m);
        const double lid = s.boundary_data({0.5, 1.0}).x;
        CHECK(lid >= 1.0 - 0.01);
        CHECK(lid <= 1.0 + 0.01);
    }
}

TEST_CASE("cavity law rejects an even mode count") {
    RandomFieldSpec spec = RandomFieldSpec::cavity(1);
    spec.mode_count = 10;
    CHECK_THROWS_AS(draw_sample_lid_driven(spec, 0), std::invalid_argument);
}

TEST_CASE("channel law: unperturbed profile is the parabola with peak u_max") {
    RandomFieldSpec spec = RandomFieldSpec::channel(5);
    spec.gamma1 = 0.0;
    spec.gamma2 = 0.0;
    const SampleFields s = draw_sample_channel(spec, 0);
    const double L = spec.channel_height;
    const Vec2 peak = s.initial_velocity({0.7, L / 2});
    CHECK(peak.x == doctest::Approx(spec.u_max).epsilon(1e-14));
    CHECK(peak.y == 0.0);
    const Vec2 quarter = s.initial_velocity({0.7, L / 4});
    CHECK(quarter.x == doctest::Approx(4.0 * spec.u_max * (1.0 / 4) * (3.0 / 4) ).epsilon(1e-14));
}

TEST_CASE("channel law: no-penetration at the walls for any draw") {
    const RandomFieldSpec spec = RandomFieldSpec::channel(99);
    const double L = spec.channel_height;
    for (int m = 0; m < 20; ++m) {
        const SampleFields s = draw_sample_channel(spec, m);
        for (double x1 : {0.1, 0.75, 1.4}) {
            CHECK(std::abs(s.initial_velocity({x1, 0.0}).y) < 1e-15);
            CHECK(std::abs(s.initial_velocity({x1, L}).y) < 1e-15);
        }
    }
}

TEST_CASE("channel law: perturbation bound by the triangle inequality over modes") {
    const RandomFieldSpec spec = RandomFieldSpec::channel(77);
    const double L = spec.channel_height;
    const double bound = spec.gamma1 * (spec.mode_count / 2 + 1) * 4.0 * spec.u_max / 4.0;
    for (int m = 0; m < 20; ++m) {
        const SampleFields s = draw_sample_channel(spec, m);
        for (double y : {0.1 * L, 0.45 * L, 0.8 * L}) {
            const double parabola = 4.0 * spec.u_max * y * (L - y) / (L * L);
            const double diff = std::abs(s.initial_velocity({0.5, y}).x - parabola);
            CHECK(diff <= bound * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("channel law rejects an odd mode count; inflow equals the initial field") {
    RandomFieldSpec spec = RandomFieldSpec::channel(1);
    spec.mode_count = 9;
    CHECK_THROWS_AS(draw_sample_channel(spec, 0), std::invalid_argument);

    const RandomFieldSpec good = RandomFieldSpec::channel(31);
    const SampleFields s = draw_sample_channel(good, 4);
    for (double y : {0.1, 0.3, 0.4}) {
        const Vec2 inflow = s.boundary_data({0.0, y});
        const Vec2 init = s.initial_velocity({0.0, y});
        CHECK(inflow.x == doctest::Approx(init.x).epsilon(1e-14));
        CHECK(inflow.y == doctest::Approx(init.y).epsilon(1e-14));
    }
    CHECK(s.boundary_data({0.7, 0.0}).norm() == 0.0); // walls fixed
}

namespace {

struct McProblem {
    Mesh2D mesh;
    FaceSets sets;
    std::unique_ptr<VelocitySpace> vspace;
    std::unique_ptr<PressureSpace> pspace;
    FormContext ctx;
    std::unique_ptr<DiscreteOperators> ops;
    SolverConfig cfg;
};

McProblem small_cavity_mc() {
    McProblem p;
    p.mesh = generate_uniform_quad_mesh(4, 4, Rect::unit_square());
    p.sets = classify_faces(p.mesh, BoundarySpec::all_dirichlet(Rect::unit_square()));
    p.vspace = std::make_unique<VelocitySpace>(p.mesh, 1, p.sets);
    p.pspace = std::make_unique<PressureSpace>(p.mesh, 1, true);
    p.ctx.viscosity = 1.0 / 3200.0;
    p.ops = std::make_unique<DiscreteOperators>(*p.vspace, *p.pspace, p.ctx);
    p.cfg.dt = 0.05;
    p.cfg.steps = 3;
    p.cfg.zero_mean_pressure = true;
    return p;
}

} // namespace

TEST_CASE("run_monte_carlo: M = 1 equals the direct deterministic solve") {
    McProblem p = small_cavity_mc();
    const RandomFieldSpec spec = RandomFieldSpec::cavity(2024);
    const Ensemble ens = run_monte_carlo(spec, *p.ops, p.ctx, p.cfg, 1, 1);
    REQUIRE(ens.size() == 1);
    CHECK(ens.time == doctest::Approx(p.cfg.dt * p.cfg.steps));

    const SampleFields fields = draw_sample(spec, 0);
    FormContext ctx = p.ctx;
    ctx.dirichlet_data = [&fields](Vec2 x, double) { return fields.boundary_data(x); };
    // Same deterministic pipeline as the driver, including the shared
    // frozen Schur factorization.
    const auto schur = monte_carlo_shared_schur(spec, *p.ops, p.ctx, p.cfg);
    TimeStepper stepper(*p.ops, ctx, p.cfg, schur.get());
    const FieldCoefficients u0 = l2_project_velocity(fields.initial_velocity, *p.vspace,
                                                     stepper.essential_values(0.0));
    const TrajectoryState direct = stepper.evolve(u0);
    CHECK(std::memcmp(direct.velocity.values.data(), ens.members[0].field.values.data(),
                      direct.velocity.size() * sizeof(double)) == 0);
}

TEST_CASE("run_monte_carlo: ensembles are identical across worker counts") {
    McProblem p = small_cavity_mc();
    const RandomFieldSpec spec = RandomFieldSpec::cavity(5150);
    const Ensemble serial = run_monte_carlo(spec, *p.ops, p.ctx, p.cfg, 6, 1);
    const Ensemble threaded = run_monte_carlo(spec, *p.ops, p.ctx, p.cfg, 6, 3);
    REQUIRE(serial.size() == threaded.size());
    for (int m = 0; m < serial.size(); ++m) {
        CHECK(serial.members[m].index == m);
        CHECK(serial.members[m].seed == threaded.members[m].seed);
        CHECK(std::memcmp(serial.members[m].field.values.data(),
                          threaded.members[m].field.values.data(),
                          serial.members[m].field.size() * sizeof(double)) == 0);
    }
    // member seeds pairwise distinct
    for (int a = 0; a < serial.size(); ++a)
        for (int b = a + 1; b < serial.size(); ++b)
            CHECK(serial.members[a].seed != serial.members[b].seed);
}

TEST_CASE("run_monte_carlo: a failing sample aborts and names the sample") {
    McProblem p = small_cavity_mc();
    p.cfg.gmres_maxiter = 1;
    p.cfg.gmres_rtol = 1e-15;
    p.cfg.use_preconditioner = false;
    const RandomFieldSpec spec = RandomFieldSpec::cavity(7);
    CHECK_THROWS_WITH_AS(run_monte_carlo(spec, *p.ops, p.ctx, p.cfg, 3, 1),
                         doctest::Contains("sample 0"), std::runtime_error);
}

TEST_CASE("parallel_for_dynamic: covers the range and rethrows the first failure") {
    std::vector<int> hits(100, 0);
    parallel_for_dynamic(100, 4, [&](int i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);

    CHECK_THROWS_WITH_AS(
        parallel_for_dynamic(50, 4,
                             [](int i) {
                                 if (i % 7 == 3) throw std::runtime_error("boom " + std::to_string(i));
                             }),
        doctest::Contains("boom 3"), std::runtime_error);
}
