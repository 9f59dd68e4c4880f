#pragma once

#include "statflow/assembly.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>

namespace statflow {

/// Time-stepping and linear-solver configuration.
struct SolverConfig {
    double dt = 0.01;
    int steps = 1; ///< N, with N * dt = T
    double gmres_rtol = 1e-12;
    int gmres_restart = 50;
    int gmres_maxiter = 5000;
    /// Pin the pressure mean through the preconditioner (pure-Dirichlet runs).
    bool zero_mean_pressure = false;
    bool use_preconditioner = true;

    /// Schur-complement approximation in the block preconditioner.
    enum class SchurMode {
        mass_scaled,  ///< S ~ scaling * pressure mass
        simple,       ///< S ~ B diag(velocity block)^{-1} B^T
        exact,        ///< S = B A^{-1} B^T rebuilt per system
        frozen_exact, ///< S = B A^{-1} B^T of the first step, reused afterwards
    };
    SchurMode schur = SchurMode::frozen_exact;
    double schur_scaling = 0.0; ///< mass_scaled: 0 selects 1/(dt nu + h^2)

    void validate() const;
};

class NonconvergenceError : public std::runtime_error {
public:
    NonconvergenceError(double residual, int iterations, const std::string& what)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
    double residual() const { return residual_; }
    int iterations() const { return iterations_; }

private:
    double residual_;
    int iterations_;
};

/// One sample's state at a discrete time: u_h^n and the rescaled pressure
/// p~ = dt * p.
struct TrajectoryState {
    int step = 0;
    FieldCoefficients velocity;
    FieldCoefficients pressure_rescaled;
    long gmres_total_iterations = 0;
};

class Preconditioner {
public:
    virtual ~Preconditioner() = default;
    virtual void apply(std::span<const double> r, std::span<double> z) const = 0;
    virtual int size() const = 0;
};

class IdentityPreconditioner final : public Preconditioner {
public:
    explicit IdentityPreconditioner(int n) : n_(n) {}
    void apply(std::span<const double> r, std::span<double> z) const override;
    int size() const override { return n_; }

private:
    int n_;
};

/// Projector I - (1/|D|) M_p^{-1} b b^T removing the mean of a pressure
/// coefficient vector; idempotent. Requires a zero-mean pressure space.
class PressureMeanProjector {
public:
    explicit PressureMeanProjector(const PressureSpace& space);
    void apply_in_place(std::span<double> pressure) const;
    /// integral of the represented pressure over the domain.
    double integral(std::span<const double> pressure) const;
    int size() const { return static_cast<int>(load_.size()); }

private:
    std::vector<double> load_;       // b, b_i = integral of q_i
    std::vector<double> one_coeffs_; // M_p^{-1} b: coefficients of the constant 1
    double domain_area_;
};

PressureMeanProjector pressure_mean_projector(const PressureSpace& space);

struct GmresResult {
    std::vector<double> solution;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
    std::vector<double> residual_history; ///< one entry per inner iteration
};

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

/// Restarted GMRES with right preconditioning; deterministic for fixed
/// inputs. Residuals are true-residual estimates from the Arnoldi process.
/// `initial_guess` (optional) warm-starts the iteration; convergence is
/// still measured against the right-hand-side norm.
GmresResult gmres_solve(const LinearOperator& op, std::span<const double> rhs,
                        const Preconditioner* precond, const SolverConfig& cfg,
                        std::span<const double> initial_guess = {});

/// Matrices assembled once per (space, sigma): M_h, A_h (unit viscosity),
/// B_h, the free/constrained splits of B, and the pressure mass/load.
struct DiscreteOperators {
    DiscreteOperators(const VelocitySpace& vspace, const PressureSpace& pspace,
                      const FormContext& ctx);

    const VelocitySpace* velocity_space;
    const PressureSpace* pressure_space;
    SparseMatrix mass;       ///< M_h, full size
    SparseMatrix diffusion;  ///< A_h without the viscosity factor, full size
    SparseMatrix divergence; ///< B_h, full size
    SparseMatrix div_free;   ///< B restricted to free velocity columns
    SparseMatrix div_free_t;
    SparseMatrix div_constrained; ///< B columns at Dirichlet DOFs
    SparseMatrix pressure_mass;
    std::vector<double> pressure_load;
    double mesh_h;
};

/// The rescaled block system of one implicit-Euler step, on free velocity
/// DOFs: [ M + dt (C + nu A) , B^T ; B , 0 ] [u; p~] = [M u_prev + dt f ; 0]
/// with constrained-DOF contributions folded into the right-hand side.
struct SaddleSystem {
    SparseMatrix velocity_block; ///< reduced, free x free
    const SparseMatrix* div_block;   ///< B (pressure x free)
    const SparseMatrix* div_block_t; ///< B^T (free x pressure)
    std::vector<double> rhs;         ///< [rhs_u ; rhs_p]
    int n_velocity = 0;
    int n_pressure = 0;

    int size() const { return n_velocity + n_pressure; }
    void apply(std::span<const double> x, std::span<double> y) const;
    LinearOperator op() const;
};

/// Factorization of B A^{-1} B^T built column by column from the system's
/// own blocks (regularized on its constant nullspace when `regularize`).
std::unique_ptr<SparseFactorization> exact_schur_factorization(const SaddleSystem& system,
                                                               const DiscreteOperators& ops,
                                                               bool regularize);

/// Sample-independent frozen Schur complement built from the convection-free
/// block M + dt nu A. One factorization serves every sample and step of a
/// Monte Carlo run (concurrent read-only solves are safe).
std::unique_ptr<SparseFactorization> stokes_schur_factorization(const DiscreteOperators& ops,
                                                                const SolverConfig& cfg,
                                                                double viscosity);

/// Upper block-triangular preconditioner [A^, B^T; 0, -S^]: exact velocity
/// factorization and the configured Schur approximation, with the optional
/// vanishing-mean projector composed on the pressure component. For
/// SchurMode::frozen_exact, pass the factorization to reuse.
std::unique_ptr<Preconditioner> block_triangular_preconditioner(
    const SaddleSystem& system, const DiscreteOperators& ops, const SolverConfig& cfg,
    double dt, double viscosity, const PressureMeanProjector* projector = nullptr,
    const SparseFactorization* frozen_schur = nullptr);

/// Deterministic solution operator: advances one sample by implicit Euler,
/// reassembling the convection matrix and solving the rescaled saddle system
/// with preconditioned GMRES each step.
class TimeStepper {
public:
    /// `shared_schur` (optional) is used by SchurMode::frozen_exact instead
    /// of building a per-sample factorization on the first step.
    TimeStepper(const DiscreteOperators& ops, FormContext ctx, SolverConfig cfg,
                const SparseFactorization* shared_schur = nullptr);

    SaddleSystem build_saddle_system(const TrajectoryState& prev) const;
    TrajectoryState step_implicit_euler(const TrajectoryState& prev) const;

    using StepCallback = std::function<void(const TrajectoryState&)>;
    TrajectoryState evolve(const FieldCoefficients& u0, const StepCallback& callback = {}) const;

    TrajectoryState initial_state(const FieldCoefficients& u0) const;
    /// Essential (Dirichlet normal-moment) values of g at the given time.
    std::vector<double> essential_values(double time) const;

    /// Step callback appending one diagnostics row per step to `out`:
    /// step,time,velocity_l2,max_div,gmres_iterations (header written first).
    static StepCallback diagnostics_callback(std::ostream& out);
    static StepCallback diagnostics_callback(const std::filesystem::path& csv_path);

    const DiscreteOperators& operators() const { return *ops_; }
    const SolverConfig& config() const { return cfg_; }
    const FormContext& context() const { return ctx_; }

private:
    const DiscreteOperators* ops_;
    FormContext ctx_;
    SolverConfig cfg_;
    std::unique_ptr<PressureMeanProjector> projector_;
    const SparseFactorization* shared_schur_ = nullptr;
    /// frozen_exact Schur factorization, built on the first step when no
    /// shared one was supplied.
    mutable std::unique_ptr<SparseFactorization> schur_cache_;
};

} // namespace statflow
