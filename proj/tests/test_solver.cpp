#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

#include "statflow/solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <sstream>

using namespace statflow;
using statflow::test::Rng;

namespace {

struct Problem {
    Mesh2D mesh;
    FaceSets sets;
    std::unique_ptr<VelocitySpace> vspace;
    std::unique_ptr<PressureSpace> pspace;
    FormContext ctx;
    std::unique_ptr<DiscreteOperators> ops;
};

Problem cavity_problem(int n, int degree, double viscosity) {
    Problem p;
    p.mesh = generate_uniform_quad_mesh(n, n, Rect::unit_square());
    p.sets = classify_faces(p.mesh, BoundarySpec::all_dirichlet(Rect::unit_square()));
    p.vspace = std::make_unique<VelocitySpace>(p.mesh, degree, p.sets);
    p.pspace = std::make_unique<PressureSpace>(p.mesh, degree, /*zero_mean=*/true);
    p.ctx.viscosity = viscosity;
    p.ops = std::make_unique<DiscreteOperators>(*p.vspace, *p.pspace, p.ctx);
    return p;
}

Problem channel_problem(int nx, int ny, int degree, double viscosity) {
    Problem p;
    const Rect domain{{0.0, 0.0}, {1.5, 0.5}};
    p.mesh = generate_uniform_quad_mesh(nx, ny, domain);
    p.sets = classify_faces(p.mesh, BoundarySpec::with_outflow_side(domain, Side::right));
    p.vspace = std::make_unique<VelocitySpace>(p.mesh, degree, p.sets);
    p.pspace = std::make_unique<PressureSpace>(p.mesh, degree, /*zero_mean=*/false);
    p.ctx.viscosity = viscosity;
    p.ops = std::make_unique<DiscreteOperators>(*p.vspace, *p.pspace, p.ctx);
    return p;
}

/// Exactly divergence-free random field: canonical interpolant of
/// rot[x(1-x)y(1-y)(a + b x + c y)], whose moments integrate exactly on
/// rectangle meshes.
FieldCoefficients random_divfree(const VelocitySpace& space, Rng& rng) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-1.0, 1.0);
    const double c = rng.uniform(-1.0, 1.0);
    const VectorField rot_psi = [a, b, c](Vec2 p) {
        const double x = p.x, y = p.y;
        const double bub_x = x * (1.0 - x);
        const double bub_y = y * (1.0 - y);
        const double poly = a + b * x + c * y;
        const double dpsi_dx = (1.0 - 2.0 * x) * bub_y * poly + bub_x * bub_y * b;
        const double dpsi_dy = bub_x * (1.0 - 2.0 * y) * poly + bub_x * bub_y * c;
        return Vec2{dpsi_dy, -dpsi_dx};
    };
    return rt_interpolate_velocity(rot_psi, space);
}

} // namespace

TEST_CASE("saddle system: shapes, dt -> 0 limit, C(0) = 0 structure") {
    Problem p = cavity_problem(3, 1, 0.01);
    SolverConfig cfg;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;

    Rng rng(3);
    FieldCoefficients u0 = random_divfree(*p.vspace, rng);

    cfg.dt = 1e-12;
    TimeStepper tiny(*p.ops, p.ctx, cfg);
    const SaddleSystem sys0 = tiny.build_saddle_system(tiny.initial_state(u0));
    CHECK(sys0.n_velocity == p.vspace->n_free_dofs());
    CHECK(sys0.n_pressure == p.pspace->n_dofs());
    CHECK(static_cast<int>(sys0.rhs.size()) == sys0.size());
    const SparseMatrix m_ff = p.ops->mass.select(p.vspace->free_dofs(), p.vspace->free_dofs());
    double worst = 0.0;
    sys0.velocity_block.for_each(
        [&](int r, int c, double v) { worst = std::max(worst, std::abs(v - m_ff.entry(r, c))); });
    CHECK(worst < 1e-9);

    cfg.dt = 0.37;
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const FieldCoefficients zero = make_velocity_field(*p.vspace);
    const SaddleSystem sys1 = stepper.build_saddle_system(stepper.initial_state(zero));
    const SparseMatrix expected = SparseMatrix::combine(1.0, p.ops->mass, cfg.dt * p.ctx.viscosity,
                                                        p.ops->diffusion)
                                      .select(p.vspace->free_dofs(), p.vspace->free_dofs());
    worst = 0.0;
    sys1.velocity_block.for_each(
        [&](int r, int c, double v) { worst = std::max(worst, std::abs(v - expected.entry(r, c))); });
    CHECK(worst < 1e-14);

    double bt_err = 0.0;
    sys1.div_block->for_each([&](int r, int c, double v) {
        bt_err = std::max(bt_err, std::abs(sys1.div_block_t->entry(c, r) - v));
    });
    CHECK(bt_err == 0.0);
}

TEST_CASE("gmres: identity system converges in one iteration") {
    const int n = 40;
    const LinearOperator identity = [](std::span<const double> x, std::span<double> y) {
        std::copy(x.begin(), x.end(), y.begin());
    };
    Rng rng(5);
    const auto rhs = test::random_vector(rng, n);
    SolverConfig cfg;
    const GmresResult res = gmres_solve(identity, rhs, nullptr, cfg);
    CHECK(res.converged);
    CHECK(res.iterations == 1);
    for (int i = 0; i < n; ++i) CHECK(res.solution[i] == doctest::Approx(rhs[i]).epsilon(1e-12));
}

TEST_CASE("gmres: zero right-hand side returns zero immediately") {
    const LinearOperator identity = [](std::span<const double> x, std::span<double> y) {
        std::copy(x.begin(), x.end(), y.begin());
    };
    std::vector<double> rhs(10, 0.0);
    SolverConfig cfg;
    const GmresResult res = gmres_solve(identity, rhs, nullptr, cfg);
    CHECK(res.converged);
    CHECK(res.iterations == 0);
    CHECK(norm2(res.solution) == 0.0);
}

TEST_CASE("gmres matches a dense LU oracle on a small saddle system") {
    Problem p = channel_problem(3, 1, 1, 0.05);
    SolverConfig cfg;
    cfg.dt = 0.1;
    cfg.steps = 1;
    cfg.gmres_rtol = 1e-12;
    p.ctx.dirichlet_data = [](Vec2 x, double) {
        return std::abs(x.x) < 1e-12 ? Vec2{x.y * (0.5 - x.y) * 8.0, 0.0} : Vec2{0.0, 0.0};
    };
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const FieldCoefficients zero = make_velocity_field(*p.vspace);
    const SaddleSystem sys = stepper.build_saddle_system(stepper.initial_state(zero));
    REQUIRE(sys.size() <= 60);

    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(sys.size(), sys.size());
    sys.velocity_block.for_each([&](int r, int c, double v) { dense(r, c) = v; });
    sys.div_block_t->for_each(
        [&](int r, int c, double v) { dense(r, sys.n_velocity + c) = v; });
    sys.div_block->for_each([&](int r, int c, double v) { dense(sys.n_velocity + r, c) = v; });
    Eigen::VectorXd rhs(sys.size());
    for (int i = 0; i < sys.size(); ++i) rhs(i) = sys.rhs[i];
    const Eigen::VectorXd direct = dense.fullPivLu().solve(rhs);

    const auto precond = block_triangular_preconditioner(sys, *p.ops, cfg, cfg.dt, p.ctx.viscosity);
    const GmresResult res = gmres_solve(sys.op(), sys.rhs, precond.get(), cfg);
    REQUIRE(res.converged);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < sys.size(); ++i) {
        num += (res.solution[i] - direct(i)) * (res.solution[i] - direct(i));
        den += direct(i) * direct(i);
    }
    CHECK(std::sqrt(num / den) < 1e-6);
}

TEST_CASE("gmres residual history is nonincreasing within a cycle") {
    Problem p = cavity_problem(3, 1, 0.01);
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    cfg.gmres_restart = 500;
    Rng rng(7);
    const FieldCoefficients u0 = random_divfree(*p.vspace, rng);
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const SaddleSystem sys = stepper.build_saddle_system(stepper.initial_state(u0));
    const GmresResult res = gmres_solve(sys.op(), sys.rhs, nullptr, cfg);
    REQUIRE(res.residual_history.size() > 2);
    for (std::size_t i = 1; i < res.residual_history.size(); ++i)
        CHECK(res.residual_history[i] <= res.residual_history[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("pressure mean projector: constants to zero, fixed points, idempotence") {
    const Mesh2D mesh = generate_uniform_quad_mesh(3, 3, Rect::unit_square());
    const PressureSpace pspace(mesh, 1, /*zero_mean=*/true);
    const PressureMeanProjector proj = pressure_mean_projector(pspace);

    std::vector<double> q(pspace.n_dofs(), 0.0);
    for (int e = 0; e < mesh.n_elements(); ++e) q[pspace.global_dof(e, 0)] = 3.25;
    proj.apply_in_place(q);
    CHECK(norm2(q) < 1e-12);

    Rng rng(9);
    std::vector<double> r = test::random_vector(rng, pspace.n_dofs());
    proj.apply_in_place(r);
    CHECK(std::abs(proj.integral(r)) < 1e-10);
    std::vector<double> r2 = r;
    proj.apply_in_place(r2);
    for (int i = 0; i < pspace.n_dofs(); ++i) CHECK(r2[i] == doctest::Approx(r[i]).epsilon(1e-12));

    const PressureSpace pinned(mesh, 1, /*zero_mean=*/false);
    CHECK_THROWS_AS(pressure_mean_projector(pinned), std::invalid_argument);
}

TEST_CASE("block preconditioner with exact blocks solves a step-1 system in <= 3 iterations") {
    Problem p = cavity_problem(4, 1, 1.0 / 3200.0);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    cfg.schur = SolverConfig::SchurMode::exact;
    cfg.gmres_rtol = 1e-10;

    const VectorField rotation = [](Vec2 x) { return Vec2{x.y - 0.5, -(x.x - 0.5)}; };
    const FieldCoefficients u0 = l2_project_velocity(rotation, *p.vspace);
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const SaddleSystem sys = stepper.build_saddle_system(stepper.initial_state(u0));
    const PressureMeanProjector proj = pressure_mean_projector(*p.pspace);
    const auto precond =
        block_triangular_preconditioner(sys, *p.ops, cfg, cfg.dt, p.ctx.viscosity, &proj);
    const GmresResult res = gmres_solve(sys.op(), sys.rhs, precond.get(), cfg);
    CHECK(res.converged);
    CHECK(res.iterations <= 3);

    Rng rng(21);
    const auto x = test::random_vector(rng, sys.size());
    std::vector<double> px(sys.size()), pax(sys.size());
    precond->apply(x, px);
    std::vector<double> ax(x);
    scale(2.75, ax);
    precond->apply(ax, pax);
    for (int i = 0; i < sys.size(); ++i)
        CHECK(pax[i] == doctest::Approx(2.75 * px[i]).epsilon(1e-13));
}

TEST_CASE("preconditioned iteration count beats unpreconditioned") {
    Problem p = cavity_problem(4, 1, 1.0 / 3200.0);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    cfg.gmres_rtol = 1e-8;
    cfg.gmres_maxiter = 2000;

    const VectorField rotation = [](Vec2 x) { return Vec2{x.y - 0.5, -(x.x - 0.5)}; };
    const FieldCoefficients u0 = l2_project_velocity(rotation, *p.vspace);
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const SaddleSystem sys = stepper.build_saddle_system(stepper.initial_state(u0));

    const GmresResult plain = gmres_solve(sys.op(), sys.rhs, nullptr, cfg);
    const PressureMeanProjector proj = pressure_mean_projector(*p.pspace);
    for (auto mode : {SolverConfig::SchurMode::simple, SolverConfig::SchurMode::mass_scaled}) {
        SolverConfig pc_cfg = cfg;
        pc_cfg.schur = mode;
        const auto precond =
            block_triangular_preconditioner(sys, *p.ops, pc_cfg, cfg.dt, p.ctx.viscosity, &proj);
        const GmresResult res = gmres_solve(sys.op(), sys.rhs, precond.get(), pc_cfg);
        CHECK(res.converged);
        CHECK(res.iterations < plain.iterations);
    }
}

TEST_CASE("step: zero state with zero data is a fixed point") {
    Problem p = cavity_problem(4, 1, 0.01);
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const FieldCoefficients zero = make_velocity_field(*p.vspace);
    const TrajectoryState next = stepper.step_implicit_euler(stepper.initial_state(zero));
    CHECK(norm2(next.velocity.values) == 0.0);
    CHECK(norm2(next.pressure_rescaled.values) == 0.0);
}

TEST_CASE("L2 stability: no forcing, homogeneous walls, norm nonincreasing over 20 steps") {
    Problem p = cavity_problem(8, 1, 1.0 / 3200.0);
    SolverConfig cfg;
    cfg.dt = 0.02;
    cfg.steps = 20;
    cfg.zero_mean_pressure = true;
    cfg.gmres_rtol = 1e-12;

    Rng rng(13);
    const FieldCoefficients u0 = random_divfree(*p.vspace, rng);
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    double prev = l2_norm_velocity(u0);
    TrajectoryState state = stepper.initial_state(u0);
    for (int n = 0; n < cfg.steps; ++n) {
        state = stepper.step_implicit_euler(state);
        const double now = l2_norm_velocity(state.velocity);
        CHECK(now <= prev * (1.0 + 1e-10));
        prev = now;
    }
}

TEST_CASE("divergence constraint holds pointwise after every step") {
    Problem p = cavity_problem(6, 1, 1.0 / 1000.0);
    SolverConfig cfg;
    cfg.dt = 0.02;
    cfg.steps = 5;
    cfg.zero_mean_pressure = true;
    cfg.gmres_rtol = 1e-12;
    p.ctx.dirichlet_data = [](Vec2 x, double) {
        return std::abs(x.y - 1.0) < 1e-12 ? Vec2{1.0, 0.0} : Vec2{0.0, 0.0};
    };
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    const FieldCoefficients u0 = make_velocity_field(*p.vspace);
    TrajectoryState state = stepper.initial_state(u0);
    for (int n = 0; n < cfg.steps; ++n) {
        state = stepper.step_implicit_euler(state);
        const double norm = l2_norm_velocity(state.velocity);
        CHECK(max_pointwise_divergence(state.velocity) <= 1e-8 * std::max(norm, 1e-30));
    }
}

TEST_CASE("pressure rescaling: rescaled solve equals the unrescaled system's pressure") {
    Problem p = channel_problem(4, 2, 1, 0.05);
    SolverConfig cfg;
    cfg.dt = 0.07;
    cfg.steps = 1;
    cfg.gmres_rtol = 1e-13;
    p.ctx.dirichlet_data = [](Vec2 x, double) {
        return std::abs(x.x) < 1e-12 ? Vec2{x.y * (0.5 - x.y) * 8.0, 0.0} : Vec2{0.0, 0.0};
    };
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    FieldCoefficients u0 = make_velocity_field(*p.vspace);
    const auto essential = stepper.essential_values(0.0);
    for (int dof : p.vspace->dirichlet_dofs()) u0.values[dof] = essential[dof];

    const TrajectoryState prev = stepper.initial_state(u0);
    const SaddleSystem sys = stepper.build_saddle_system(prev);
    REQUIRE(sys.size() <= 200);

    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(sys.size(), sys.size());
    sys.velocity_block.for_each([&](int r, int c, double v) { dense(r, c) = v; });
    sys.div_block_t->for_each(
        [&](int r, int c, double v) { dense(r, sys.n_velocity + c) = cfg.dt * v; });
    sys.div_block->for_each([&](int r, int c, double v) { dense(sys.n_velocity + r, c) = v; });
    Eigen::VectorXd rhs(sys.size());
    for (int i = 0; i < sys.size(); ++i) rhs(i) = sys.rhs[i];
    const Eigen::VectorXd direct = dense.fullPivLu().solve(rhs);

    const TrajectoryState next = stepper.step_implicit_euler(prev);
    double num = 0.0, den = 0.0;
    for (int i = 0; i < sys.n_pressure; ++i) {
        const double p_rescaled = next.pressure_rescaled.values[i] / cfg.dt;
        num += (p_rescaled - direct(sys.n_velocity + i)) * (p_rescaled - direct(sys.n_velocity + i));
        den += direct(sys.n_velocity + i) * direct(sys.n_velocity + i);
    }
    CHECK(std::sqrt(num / den) < 1e-8);
}

TEST_CASE("evolve: N = 1 equals a single implicit Euler step; bit determinism") {
    Problem p = cavity_problem(4, 1, 0.01);
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    Rng rng(19);
    const FieldCoefficients u0 = random_divfree(*p.vspace, rng);

    const TrajectoryState via_evolve = stepper.evolve(u0);
    const TrajectoryState via_step = stepper.step_implicit_euler(stepper.initial_state(u0));
    REQUIRE(via_evolve.velocity.size() == via_step.velocity.size());
    CHECK(std::memcmp(via_evolve.velocity.values.data(), via_step.velocity.values.data(),
                      via_evolve.velocity.size() * sizeof(double)) == 0);

    SolverConfig cfg5 = cfg;
    cfg5.steps = 5;
    TimeStepper stepper5(*p.ops, p.ctx, cfg5);
    const TrajectoryState a = stepper5.evolve(u0);
    const TrajectoryState b = stepper5.evolve(u0);
    CHECK(std::memcmp(a.velocity.values.data(), b.velocity.values.data(),
                      a.velocity.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.pressure_rescaled.values.data(), b.pressure_rescaled.values.data(),
                      a.pressure_rescaled.size() * sizeof(double)) == 0);
}

TEST_CASE("nonconvergence carries the residual and the failing step index") {
    Problem p = cavity_problem(4, 1, 0.01);
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 3;
    cfg.zero_mean_pressure = true;
    cfg.gmres_maxiter = 1;
    cfg.gmres_rtol = 1e-14;
    cfg.use_preconditioner = false;
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    Rng rng(23);
    const FieldCoefficients u0 = random_divfree(*p.vspace, rng);
    try {
        stepper.evolve(u0);
        FAIL("expected NonconvergenceError");
    } catch (const NonconvergenceError& err) {
        CHECK(err.residual() > 0.0);
        CHECK(std::string(err.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("config validation rejects bad values") {
    SolverConfig cfg;
    cfg.dt = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.gmres_rtol = 2.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = SolverConfig{};
    cfg.gmres_restart = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);

    Problem p = channel_problem(3, 1, 1, 0.05);
    SolverConfig bad;
    bad.zero_mean_pressure = true;
    CHECK_THROWS_AS(TimeStepper(*p.ops, p.ctx, bad), std::invalid_argument);
}

TEST_CASE("diagnostics callback writes one parseable row per step") {
    Problem p = cavity_problem(4, 1, 0.01);
    SolverConfig cfg;
    cfg.dt = 0.05;
    cfg.steps = 3;
    cfg.zero_mean_pressure = true;
    TimeStepper stepper(*p.ops, p.ctx, cfg);
    Rng rng(29);
    const FieldCoefficients u0 = random_divfree(*p.vspace, rng);

    std::ostringstream out;
    stepper.evolve(u0, TimeStepper::diagnostics_callback(out));
    std::istringstream in(out.str());
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "step,time,velocity_l2,max_div,gmres_iterations");
    int rows = 0;
    while (std::getline(in, line)) {
        std::istringstream row(line);
        std::string field;
        std::getline(row, field, ',');
        CHECK(std::stoi(field) == rows + 1);
        std::getline(row, field, ',');
        CHECK(std::stod(field) == doctest::Approx((rows + 1) * cfg.dt));
        std::getline(row, field, ',');
        CHECK(std::stod(field) > 0.0); // velocity norm
        std::getline(row, field, ',');
        CHECK(std::stod(field) < 1e-8); // pointwise divergence
        std::getline(row, field, ',');
        CHECK(std::stoi(field) > 0); // per-step GMRES iterations
        ++rows;
    }
    CHECK(rows == cfg.steps);
}
