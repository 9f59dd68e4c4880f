// Microbenchmarks for the hot paths: form assembly, one solver step, the
// grid-hashed structure function, and the exact transport solve by atom
// count.

#include "statflow/observables.hpp"
#include "statflow/solver.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>

using namespace statflow;

namespace {

struct BenchSetup {
    Mesh2D mesh;
    FaceSets sets;
    std::unique_ptr<VelocitySpace> vspace;
    std::unique_ptr<PressureSpace> pspace;
    FormContext ctx;

    explicit BenchSetup(int n) {
        mesh = generate_uniform_quad_mesh(n, n, Rect::unit_square());
        sets = classify_faces(mesh, BoundarySpec::all_dirichlet(Rect::unit_square()));
        vspace = std::make_unique<VelocitySpace>(mesh, 1, sets);
        pspace = std::make_unique<PressureSpace>(mesh, 1, true);
        ctx.viscosity = 1.0 / 3200.0;
    }
};

FieldCoefficients rotation_field(const VelocitySpace& space) {
    return l2_project_velocity([](Vec2 x) { return Vec2{x.y - 0.5, -(x.x - 0.5)}; }, space);
}

void bm_assemble_mass(benchmark::State& state) {
    BenchSetup s(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(assemble_mass(*s.vspace));
}
BENCHMARK(bm_assemble_mass)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void bm_assemble_diffusion(benchmark::State& state) {
    BenchSetup s(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(assemble_diffusion_sip(*s.vspace, s.ctx));
}
BENCHMARK(bm_assemble_diffusion)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void bm_assemble_convection(benchmark::State& state) {
    BenchSetup s(static_cast<int>(state.range(0)));
    const FieldCoefficients w = rotation_field(*s.vspace);
    for (auto _ : state) benchmark::DoNotOptimize(assemble_convection_upwind(*s.vspace, w));
}
BENCHMARK(bm_assemble_convection)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void bm_implicit_euler_step(benchmark::State& state) {
    BenchSetup s(static_cast<int>(state.range(0)));
    DiscreteOperators ops(*s.vspace, *s.pspace, s.ctx);
    SolverConfig cfg;
    cfg.dt = 0.01;
    cfg.steps = 1;
    cfg.zero_mean_pressure = true;
    const auto schur = stokes_schur_factorization(ops, cfg, s.ctx.viscosity);
    TimeStepper stepper(ops, s.ctx, cfg, schur.get());
    TrajectoryState st = stepper.initial_state(rotation_field(*s.vspace));
    for (auto _ : state) {
        st = stepper.step_implicit_euler(st);
        benchmark::DoNotOptimize(st.gmres_total_iterations);
    }
}
BENCHMARK(bm_implicit_euler_step)->Arg(8)->Arg(16)->Unit(benchmark::kMillisecond);

void bm_structure_function_grid(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Mesh2D mesh = generate_uniform_quad_mesh(n, n, Rect::unit_square());
    ElementAverages avg;
    avg.mesh = &mesh;
    avg.values.resize(mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const Vec2 c = mesh.centroid(e);
        avg.values[e] = {std::sin(6.28 * c.y), std::cos(6.28 * c.x)};
    }
    const double r = 4.0 * mesh.mesh_size;
    const int cells = choose_grid_size(1.0, r);
    HashGrid grid = make_hash_table(Rect::unit_square(), mesh, cells, cells);
    update_hash_table(grid, avg);
    for (auto _ : state)
        benchmark::DoNotOptimize(structure_function_of_sample(grid, r, 2));
}
BENCHMARK(bm_structure_function_grid)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void bm_emd(benchmark::State& state) {
    const int m = static_cast<int>(state.range(0));
    WeightedAtoms a, b;
    a.dim = b.dim = 2;
    a.weights.assign(m, 1.0 / m);
    b.weights.assign(m, 1.0 / m);
    std::uint64_t seed = 42;
    auto next = [&seed]() {
        seed ^= seed << 13;
        seed ^= seed >> 7;
        seed ^= seed << 17;
        return 2.0 * (static_cast<double>(seed >> 11) * 0x1.0p-53) - 1.0;
    };
    for (int i = 0; i < 2 * m; ++i) {
        a.coords.push_back(next());
        b.coords.push_back(next());
    }
    for (auto _ : state) benchmark::DoNotOptimize(emd_atoms(a, b, 1));
}
BENCHMARK(bm_emd)->Arg(8)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

} // namespace

BENCHMARK_MAIN();
