#pragma once

#include "statflow/solver.hpp"

#include <cstdint>
#include <span>

namespace statflow {

/// Law of the random initial data (and random boundary data) for the two
/// experiment families.
struct RandomFieldSpec {
    enum class Kind { lid_driven_cavity, channel_flow };
    Kind kind = Kind::lid_driven_cavity;
    double gamma1 = 0.025;
    double gamma2 = 0.01;
    int mode_count = 11; ///< K: odd for the cavity, even for the channel
    std::uint64_t base_seed = 0;
    double u_max = 1.5;          ///< channel only
    double channel_height = 0.5; ///< L, channel only

    /// Number of uniform variables one sample consumes.
    int n_variables() const;
    void validate() const;

    static RandomFieldSpec cavity(std::uint64_t seed) {
        return {Kind::lid_driven_cavity, 0.025, 0.01, 11, seed, 1.5, 0.5};
    }
    static RandomFieldSpec channel(std::uint64_t seed) {
        return {Kind::channel_flow, 0.025, 0.025, 10, seed, 1.5, 0.5};
    }
};

/// Y_j(omega_m) ~ U[-1,1] as a pure function of (base seed, sample, variable);
/// reproducible regardless of evaluation order.
double uniform_variable(std::uint64_t base_seed, std::uint64_t sample, std::uint64_t variable);

/// Stream id recorded per member so stored ensembles can be audited.
std::uint64_t sample_seed(std::uint64_t base_seed, int sample);

/// One sample's data: initial velocity on D and Dirichlet boundary data.
struct SampleFields {
    VectorField initial_velocity;
    VectorField boundary_data;
    std::vector<double> variables; ///< the Y_j actually drawn
};

/// Cavity law: rigid-rotation base field composed with the sinusoidal
/// coordinate perturbation; lid velocity (1 + gamma2 sin(2 pi Y_K), 0).
SampleFields draw_sample_lid_driven(const RandomFieldSpec& spec, int sample);
/// Channel law: perturbed parabolic profile; inflow data equals the sampled
/// initial velocity (time-independent).
SampleFields draw_sample_channel(const RandomFieldSpec& spec, int sample);

/// Deterministic versions taking the variables directly (test hooks and the
/// building blocks of the draw_* operations).
SampleFields cavity_sample_from_variables(const RandomFieldSpec& spec, std::span<const double> y);
SampleFields channel_sample_from_variables(const RandomFieldSpec& spec, std::span<const double> y);
SampleFields draw_sample(const RandomFieldSpec& spec, int sample);

struct EnsembleMember {
    int index = 0;
    std::uint64_t seed = 0;
    FieldCoefficients field;
};

/// M velocity fields at a common time on a common mesh.
struct Ensemble {
    const Mesh2D* mesh = nullptr;
    const VelocitySpace* space = nullptr;
    double time = 0.0;
    std::vector<EnsembleMember> members;

    int size() const { return static_cast<int>(members.size()); }
};

/// Optional per-sample diagnostics hook: invoked once per sample (from the
/// worker that owns it) to obtain a per-step callback.
using DiagnosticsFactory = std::function<TimeStepper::StepCallback(int sample)>;

/// The frozen Schur factorization the Monte Carlo driver shares across
/// samples: the exact Schur complement of the step-1 system at the
/// unperturbed (zero-variable) draw, which every sample stays close to.
std::unique_ptr<SparseFactorization> monte_carlo_shared_schur(const RandomFieldSpec& spec,
                                                              const DiscreteOperators& ops,
                                                              const FormContext& base_ctx,
                                                              const SolverConfig& cfg);

/// Monte Carlo driver: draws M independent samples, evolves each with the
/// deterministic solver, and assembles the empirical ensemble ordered by
/// sample index. Samples run in parallel on `workers` threads; the result is
/// bit-identical for any worker count. A solver failure aborts the run,
/// reporting the failing sample.
Ensemble run_monte_carlo(const RandomFieldSpec& spec, const DiscreteOperators& ops,
                         const FormContext& base_ctx, const SolverConfig& cfg, int samples,
                         int workers = 1, const DiagnosticsFactory& diagnostics = {});

/// Dynamic work queue over [0, count): bodies run on `workers` threads; the
/// first failure (by index) is rethrown after all threads join.
void parallel_for_dynamic(int count, int workers, const std::function<void(int)>& body);

} // namespace statflow
