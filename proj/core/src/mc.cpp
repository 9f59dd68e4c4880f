#include "statflow/mc.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace statflow {

int RandomFieldSpec::n_variables() const {
    // Cavity: Y_0..Y_K (the lid variable Y_K is shared with the perturbation);
    // channel: Y_0..Y_{K+1}.
    return kind == Kind::lid_driven_cavity ? mode_count + 1 : mode_count + 2;
}

void RandomFieldSpec::validate() const {
    if (mode_count < 1) throw std::invalid_argument("RandomFieldSpec: mode_count must be >= 1");
    if (kind == Kind::lid_driven_cavity && mode_count % 2 == 0)
        throw std::invalid_argument("RandomFieldSpec: cavity mode count K must be odd");
    if (kind == Kind::channel_flow && mode_count % 2 != 0)
        throw std::invalid_argument("RandomFieldSpec: channel mode count K must be even");
    if (kind == Kind::channel_flow && !(channel_height > 0.0))
        throw std::invalid_argument("RandomFieldSpec: channel height must be positive");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

double uniform_variable(std::uint64_t base_seed, std::uint64_t sample, std::uint64_t variable) {
    std::uint64_t h = splitmix64(base_seed);
    h = splitmix64(h ^ (sample + 0x517cc1b727220a95ULL));
    h = splitmix64(h ^ (variable + 0x2545f4914f6cdd1dULL));
    const double u01 = static_cast<double>(h >> 11) * 0x1.0p-53; // [0,1)
    return 2.0 * u01 - 1.0;
}

std::uint64_t sample_seed(std::uint64_t base_seed, int sample) {
    return splitmix64(splitmix64(base_seed) ^ (static_cast<std::uint64_t>(sample) + 1));
}

SampleFields cavity_sample_from_variables(const RandomFieldSpec& spec, std::span<const double> y) {
    spec.validate();
    if (spec.kind != RandomFieldSpec::Kind::lid_driven_cavity)
        throw std::invalid_argument("cavity_sample_from_variables: wrong spec kind");
    if (static_cast<int>(y.size()) != spec.n_variables())
        throw std::invalid_argument("cavity_sample_from_variables: need K+1 variables");

    const int half = (spec.mode_count - 1) / 2;
    const double g1 = spec.gamma1;
    std::vector<double> vars(y.begin(), y.end());

    SampleFields out;
    out.variables = vars;
    out.initial_velocity = [vars, half, g1](Vec2 x) {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        double fx = x.x, fy = x.y;
        for (int k = 0; k <= half; ++k) {
            fx += g1 * vars[2 * k] * std::sin(two_pi * k * (x.x - 0.5 + vars[2 * k + 1]));
            fy += g1 * vars[2 * k + 1] * std::sin(two_pi * k * (x.y - 0.5 + vars[2 * k]));
        }
        return Vec2{fy - 0.5, -(fx - 0.5)};
    };
    const double lid_speed = 1.0 + spec.gamma2 * std::sin(2.0 * std::numbers::pi * vars.back());
    out.boundary_data = [lid_speed](Vec2 x) {
        return std::abs(x.y - 1.0) < 1e-12 ? Vec2{lid_speed, 0.0} : Vec2{0.0, 0.0};
    };
    return out;
}

SampleFields channel_sample_from_variables(const RandomFieldSpec& spec, std::span<const double> y) {
    spec.validate();
    if (spec.kind != RandomFieldSpec::Kind::channel_flow)
        throw std::invalid_argument("channel_sample_from_variables: wrong spec kind");
    if (static_cast<int>(y.size()) != spec.n_variables())
        throw std::invalid_argument("channel_sample_from_variables: need K+2 variables");

    const int half = spec.mode_count / 2;
    const double g1 = spec.gamma1, g2 = spec.gamma2;
    const double umax = spec.u_max, L = spec.channel_height;
    std::vector<double> vars(y.begin(), y.end());

    auto perturbation = [vars, half](double x2) {
        constexpr double two_pi = 2.0 * std::numbers::pi;
        double f = 0.0;
        for (int k = 0; k <= half; ++k)
            f += vars[2 * k] * std::sin(two_pi * k * (x2 + vars[2 * k + 1]));
        return f;
    };
    auto velocity = [perturbation, g1, g2, umax, L](Vec2 x) {
        const double profile = x.y * (L - x.y) / (L * L);
        const double f = perturbation(x.y);
        return Vec2{(1.0 + g1 * f) * 4.0 * umax * profile, g2 * f * profile};
    };

    SampleFields out;
    out.variables = vars;
    out.initial_velocity = velocity;
    // Inflow on the left boundary equals the initial velocity; fixed walls
    // elsewhere (the profile vanishes there anyway).
    out.boundary_data = [velocity](Vec2 x) {
        return std::abs(x.x) < 1e-12 ? velocity(x) : Vec2{0.0, 0.0};
    };
    return out;
}

namespace {

std::vector<double> draw_variables(const RandomFieldSpec& spec, int sample) {
    std::vector<double> y(spec.n_variables());
    for (int j = 0; j < spec.n_variables(); ++j)
        y[j] = uniform_variable(spec.base_seed, static_cast<std::uint64_t>(sample),
                                static_cast<std::uint64_t>(j));
    return y;
}

} // namespace

SampleFields draw_sample_lid_driven(const RandomFieldSpec& spec, int sample) {
    return cavity_sample_from_variables(spec, draw_variables(spec, sample));
}

SampleFields draw_sample_channel(const RandomFieldSpec& spec, int sample) {
    return channel_sample_from_variables(spec, draw_variables(spec, sample));
}

SampleFields draw_sample(const RandomFieldSpec& spec, int sample) {
    return spec.kind == RandomFieldSpec::Kind::lid_driven_cavity
               ? draw_sample_lid_driven(spec, sample)
               : draw_sample_channel(spec, sample);
}

std::unique_ptr<SparseFactorization> monte_carlo_shared_schur(const RandomFieldSpec& spec,
                                                              const DiscreteOperators& ops,
                                                              const FormContext& base_ctx,
                                                              const SolverConfig& cfg) {
    spec.validate();
    const std::vector<double> zeros(spec.n_variables(), 0.0);
    const SampleFields base = spec.kind == RandomFieldSpec::Kind::lid_driven_cavity
                                  ? cavity_sample_from_variables(spec, zeros)
                                  : channel_sample_from_variables(spec, zeros);
    FormContext ctx = base_ctx;
    ctx.dirichlet_data = [g = base.boundary_data](Vec2 x, double) { return g(x); };
    const TimeStepper reference(ops, ctx, cfg, nullptr);
    const FieldCoefficients u_ref = l2_project_velocity(base.initial_velocity,
                                                        *ops.velocity_space,
                                                        reference.essential_values(0.0));
    const SaddleSystem sys = reference.build_saddle_system(reference.initial_state(u_ref));
    return exact_schur_factorization(sys, ops, cfg.zero_mean_pressure);
}

void parallel_for_dynamic(int count, int workers, const std::function<void(int)>& body) {
    if (count <= 0) return;
    workers = std::max(1, std::min(workers, count));
    if (workers == 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex error_mutex;
    int first_error_index = count;
    std::exception_ptr first_error;

    auto run = [&]() {
        while (true) {
            const int i = next.fetch_add(1);
            if (i >= count) return;
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < first_error_index) {
                    first_error_index = i;
                    first_error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

Ensemble run_monte_carlo(const RandomFieldSpec& spec, const DiscreteOperators& ops,
                         const FormContext& base_ctx, const SolverConfig& cfg, int samples,
                         int workers, const DiagnosticsFactory& diagnostics) {
    spec.validate();
    if (samples < 1) throw std::invalid_argument("run_monte_carlo: need at least one sample");

    Ensemble ensemble;
    ensemble.mesh = &ops.velocity_space->mesh();
    ensemble.space = ops.velocity_space;
    ensemble.time = cfg.dt * cfg.steps;
    ensemble.members.resize(samples);

    // One frozen Schur factorization serves all samples (read-only solves).
    std::unique_ptr<SparseFactorization> shared_schur;
    if (cfg.use_preconditioner && cfg.schur == SolverConfig::SchurMode::frozen_exact)
        shared_schur = monte_carlo_shared_schur(spec, ops, base_ctx, cfg);

    parallel_for_dynamic(samples, workers, [&](int m) {
        try {
            const SampleFields fields = draw_sample(spec, m);
            FormContext ctx = base_ctx;
            ctx.dirichlet_data = [g = fields.boundary_data](Vec2 x, double) { return g(x); };

            TimeStepper stepper(ops, ctx, cfg, shared_schur.get());
            const std::vector<double> essential = stepper.essential_values(0.0);
            const FieldCoefficients u0 =
                l2_project_velocity(fields.initial_velocity, *ops.velocity_space, essential);
            const TimeStepper::StepCallback callback =
                diagnostics ? diagnostics(m) : TimeStepper::StepCallback{};
            const TrajectoryState final_state = stepper.evolve(u0, callback);

            EnsembleMember member;
            member.index = m;
            member.seed = sample_seed(spec.base_seed, m);
            member.field = final_state.velocity;
            ensemble.members[m] = std::move(member);
        } catch (const std::exception& err) {
            throw std::runtime_error("Monte Carlo sample " + std::to_string(m) +
                                     " failed: " + err.what());
        }
    });
    return ensemble;
}

} // namespace statflow
