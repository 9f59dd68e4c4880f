#include "statflow/solver.hpp"

#include "statflow/field_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

namespace statflow {

void SolverConfig::validate() const {
    if (!(dt > 0.0)) throw std::invalid_argument("SolverConfig: dt must be positive");
    if (steps < 1) throw std::invalid_argument("SolverConfig: steps must be >= 1");
    if (!(gmres_rtol > 0.0 && gmres_rtol < 1.0))
        throw std::invalid_argument("SolverConfig: gmres_rtol must be in (0,1)");
    if (gmres_restart < 1) throw std::invalid_argument("SolverConfig: gmres_restart must be >= 1");
    if (gmres_maxiter < 1) throw std::invalid_argument("SolverConfig: gmres_maxiter must be >= 1");
}

void IdentityPreconditioner::apply(std::span<const double> r, std::span<double> z) const {
    std::copy(r.begin(), r.end(), z.begin());
}

PressureMeanProjector::PressureMeanProjector(const PressureSpace& space) {
    if (!space.zero_mean())
        throw std::invalid_argument(
            "pressure_mean_projector: requires a zero-mean pressure space "
            "(contract violation: pressure is pinned by an outflow boundary otherwise)");
    load_ = assemble_pressure_load(space);
    domain_area_ = space.mesh().total_area();
    SparseFactorization mp(assemble_pressure_mass(space));
    one_coeffs_ = mp.solve(load_);
}

double PressureMeanProjector::integral(std::span<const double> pressure) const {
    return dot(load_, pressure);
}

void PressureMeanProjector::apply_in_place(std::span<double> pressure) const {
    const double mean = integral(pressure) / domain_area_;
    axpy(-mean, one_coeffs_, pressure);
}

PressureMeanProjector pressure_mean_projector(const PressureSpace& space) {
    return PressureMeanProjector(space);
}

GmresResult gmres_solve(const LinearOperator& op, std::span<const double> rhs,
                        const Preconditioner* precond, const SolverConfig& cfg,
                        std::span<const double> initial_guess) {
    cfg.validate();
    const int n = static_cast<int>(rhs.size());
    if (precond && precond->size() != n)
        throw std::invalid_argument("gmres_solve: preconditioner size mismatch");
    if (!initial_guess.empty() && static_cast<int>(initial_guess.size()) != n)
        throw std::invalid_argument("gmres_solve: initial guess size mismatch");

    GmresResult result;
    if (initial_guess.empty()) result.solution.assign(n, 0.0);
    else result.solution.assign(initial_guess.begin(), initial_guess.end());
    const double bnorm = norm2(rhs);
    if (bnorm == 0.0) {
        result.solution.assign(n, 0.0);
        result.converged = true;
        return result;
    }
    const double tol = cfg.gmres_rtol * bnorm;
    const int m = cfg.gmres_restart;

    std::vector<std::vector<double>> V(m + 1, std::vector<double>(n));
    std::vector<double> H((m + 1) * m, 0.0); // column-major: H[i + j*(m+1)]
    std::vector<double> cs(m), sn(m), g(m + 1);
    std::vector<double> w(n), z(n);

    auto precondition = [&](std::span<const double> in, std::span<double> out) {
        if (precond) precond->apply(in, out);
        else std::copy(in.begin(), in.end(), out.begin());
    };

    while (result.iterations < cfg.gmres_maxiter) {
        // r = rhs - A x
        op(result.solution, w);
        for (int i = 0; i < n; ++i) w[i] = rhs[i] - w[i];
        const double beta = norm2(w);
        result.residual = beta;
        if (beta <= tol) {
            result.converged = true;
            return result;
        }
        for (int i = 0; i < n; ++i) V[0][i] = w[i] / beta;
        std::fill(g.begin(), g.end(), 0.0);
        g[0] = beta;
        std::fill(H.begin(), H.end(), 0.0);

        int j_end = 0;
        bool breakdown = false;
        for (int j = 0; j < m && result.iterations < cfg.gmres_maxiter; ++j) {
            precondition(V[j], z);
            op(z, w);
            for (int i = 0; i <= j; ++i) {
                const double h = dot(w, V[i]);
                H[i + j * (m + 1)] = h;
                axpy(-h, V[i], w);
            }
            const double hnext = norm2(w);
            H[j + 1 + j * (m + 1)] = hnext;
            if (hnext > 0.0)
                for (int i = 0; i < n; ++i) V[j + 1][i] = w[i] / hnext;

            // Givens rotations keep H upper triangular.
            for (int i = 0; i < j; ++i) {
                const double h0 = H[i + j * (m + 1)];
                const double h1 = H[i + 1 + j * (m + 1)];
                H[i + j * (m + 1)] = cs[i] * h0 + sn[i] * h1;
                H[i + 1 + j * (m + 1)] = -sn[i] * h0 + cs[i] * h1;
            }
            const double h0 = H[j + j * (m + 1)];
            const double h1 = H[j + 1 + j * (m + 1)];
            const double denom = std::hypot(h0, h1);
            cs[j] = denom > 0.0 ? h0 / denom : 1.0;
            sn[j] = denom > 0.0 ? h1 / denom : 0.0;
            H[j + j * (m + 1)] = denom;
            H[j + 1 + j * (m + 1)] = 0.0;
            const double gj = g[j];
            g[j] = cs[j] * gj;
            g[j + 1] = -sn[j] * gj;

            ++result.iterations;
            j_end = j + 1;
            const double res = std::abs(g[j + 1]);
            result.residual_history.push_back(res);
            result.residual = res;
            if (res <= tol || hnext == 0.0) {
                breakdown = (hnext == 0.0);
                break;
            }
        }

        // y = H^{-1} g by back substitution, x += P (V y)
        std::vector<double> y(j_end, 0.0);
        for (int i = j_end - 1; i >= 0; --i) {
            double s = g[i];
            for (int k = i + 1; k < j_end; ++k) s -= H[i + k * (m + 1)] * y[k];
            y[i] = s / H[i + i * (m + 1)];
        }
        std::fill(w.begin(), w.end(), 0.0);
        for (int i = 0; i < j_end; ++i) axpy(y[i], V[i], w);
        precondition(w, z);
        axpy(1.0, z, result.solution);

        if (result.residual <= tol || breakdown) {
            // Confirm with the true residual before reporting convergence.
            op(result.solution, w);
            for (int i = 0; i < n; ++i) w[i] = rhs[i] - w[i];
            result.residual = norm2(w);
            if (result.residual <= tol * (1.0 + 1e-8) || breakdown) {
                result.converged = true;
                return result;
            }
        }
    }
    return result;
}

DiscreteOperators::DiscreteOperators(const VelocitySpace& vspace, const PressureSpace& pspace,
                                     const FormContext& ctx)
    : velocity_space(&vspace),
      pressure_space(&pspace),
      mass(assemble_mass(vspace)),
      diffusion(assemble_diffusion_sip(vspace, ctx)),
      divergence(assemble_divergence(vspace, pspace)),
      pressure_mass(assemble_pressure_mass(pspace)),
      pressure_load(assemble_pressure_load(pspace)),
      mesh_h(vspace.mesh().mesh_size) {
    std::vector<int> all_pressure(pspace.n_dofs());
    std::iota(all_pressure.begin(), all_pressure.end(), 0);
    div_free = divergence.select(all_pressure, vspace.free_dofs());
    div_free_t = div_free.transposed();
    div_constrained = divergence.select(all_pressure, vspace.dirichlet_dofs());
}

void SaddleSystem::apply(std::span<const double> x, std::span<double> y) const {
    const auto xu = x.subspan(0, n_velocity);
    const auto xp = x.subspan(n_velocity, n_pressure);
    auto yu = y.subspan(0, n_velocity);
    auto yp = y.subspan(n_velocity, n_pressure);
    velocity_block.apply(xu, yu);
    std::vector<double> tmp(n_velocity);
    div_block_t->apply(xp, tmp);
    axpy(1.0, tmp, yu);
    div_block->apply(xu, yp);
}

LinearOperator SaddleSystem::op() const {
    return [this](std::span<const double> x, std::span<double> y) { apply(x, y); };
}

namespace {

/// S = B A^{-1} B^T assembled column by column.
SparseMatrix build_exact_schur(const SparseFactorization& a_hat, const SaddleSystem& system) {
    const int nf = system.n_velocity;
    const int np = system.n_pressure;
    SparseMatrix s(np, np);
    std::vector<double> col(nf), sol(nf), out(np);
    for (int j = 0; j < np; ++j) {
        std::fill(col.begin(), col.end(), 0.0);
        const auto& rp = system.div_block->row_ptr();
        for (int k = rp[j]; k < rp[j + 1]; ++k)
            col[system.div_block->col_idx()[k]] = system.div_block->values()[k];
        a_hat.solve(col, sol);
        system.div_block->apply(sol, out);
        for (int i = 0; i < np; ++i)
            if (out[i] != 0.0) s.add(i, j, out[i]);
    }
    s.compress();
    return s;
}

/// Pure-Dirichlet Schur complements annihilate constants; shift that
/// direction so the factorization exists. The mean projector removes any
/// constant component afterwards.
void regularize_schur(SparseMatrix& s, const DiscreteOperators& ops) {
    const double beta = std::max(s.max_abs(), 1.0);
    const auto& b = ops.pressure_load;
    const double bnorm2 = dot(b, b);
    for (int i = 0; i < s.rows(); ++i)
        for (int j = 0; j < s.cols(); ++j)
            if (b[i] != 0.0 && b[j] != 0.0) s.add(i, j, beta * b[i] * b[j] / bnorm2);
    s.compress();
}

class BlockTriangularPreconditioner final : public Preconditioner {
public:
    BlockTriangularPreconditioner(const SaddleSystem& system, const DiscreteOperators& ops,
                                  const SolverConfig& cfg, double dt, double viscosity,
                                  const PressureMeanProjector* projector,
                                  const SparseFactorization* frozen_schur)
        : a_hat_(system.velocity_block),
          bt_(system.div_block_t),
          projector_(projector),
          nf_(system.n_velocity),
          np_(system.n_pressure) {
        switch (cfg.schur) {
            case SolverConfig::SchurMode::mass_scaled: {
                const double s = cfg.schur_scaling > 0.0
                                     ? cfg.schur_scaling
                                     : 1.0 / (dt * viscosity + ops.mesh_h * ops.mesh_h);
                mass_scale_ = s;
                pmass_lu_ = std::make_unique<SparseFactorization>(ops.pressure_mass);
                break;
            }
            case SolverConfig::SchurMode::simple: {
                // S^ = B diag(V)^{-1} B^T
                std::vector<double> dinv(nf_, 0.0);
                for (int i = 0; i < nf_; ++i) {
                    const double d = system.velocity_block.entry(i, i);
                    dinv[i] = d != 0.0 ? 1.0 / d : 0.0;
                }
                SparseMatrix s(np_, np_);
                const SparseMatrix& bt = *system.div_block_t;
                for (int u = 0; u < nf_; ++u) {
                    const auto& rp = bt.row_ptr();
                    for (int k1 = rp[u]; k1 < rp[u + 1]; ++k1)
                        for (int k2 = rp[u]; k2 < rp[u + 1]; ++k2)
                            s.add(bt.col_idx()[k1], bt.col_idx()[k2],
                                  bt.values()[k1] * bt.values()[k2] * dinv[u]);
                }
                s.compress();
                if (projector != nullptr) regularize_schur(s, ops);
                schur_lu_ = std::make_unique<SparseFactorization>(s);
                break;
            }
            case SolverConfig::SchurMode::frozen_exact:
                if (frozen_schur != nullptr) {
                    schur_external_ = frozen_schur;
                    break;
                }
                [[fallthrough]];
            case SolverConfig::SchurMode::exact: {
                SparseMatrix s = build_exact_schur(a_hat_, system);
                if (projector != nullptr) regularize_schur(s, ops);
                schur_lu_ = std::make_unique<SparseFactorization>(s);
                break;
            }
        }
    }

    void apply(std::span<const double> r, std::span<double> z) const override {
        const auto ru = r.subspan(0, nf_);
        const auto rp = r.subspan(nf_, np_);
        auto zu = z.subspan(0, nf_);
        auto zp = z.subspan(nf_, np_);
        // z_p = -S^{-1} r_p
        if (pmass_lu_) {
            pmass_lu_->solve(rp, zp);
            scale(-1.0 / mass_scale_, zp);
        } else {
            const SparseFactorization* schur = schur_external_ ? schur_external_ : schur_lu_.get();
            schur->solve(rp, zp);
            scale(-1.0, zp);
        }
        if (projector_) projector_->apply_in_place(zp);
        // z_u = A^{-1} (r_u - B^T z_p)
        std::vector<double> tmp(nf_);
        bt_->apply(zp, tmp);
        for (int i = 0; i < nf_; ++i) tmp[i] = ru[i] - tmp[i];
        a_hat_.solve(tmp, zu);
    }

    int size() const override { return nf_ + np_; }

private:
    SparseFactorization a_hat_;
    std::unique_ptr<SparseFactorization> schur_lu_;
    const SparseFactorization* schur_external_ = nullptr;
    std::unique_ptr<SparseFactorization> pmass_lu_;
    double mass_scale_ = 1.0;
    const SparseMatrix* bt_;
    const PressureMeanProjector* projector_;
    int nf_, np_;
};

} // namespace

std::unique_ptr<SparseFactorization> exact_schur_factorization(const SaddleSystem& system,
                                                               const DiscreteOperators& ops,
                                                               bool regularize) {
    SparseFactorization a_hat(system.velocity_block);
    SparseMatrix s = build_exact_schur(a_hat, system);
    if (regularize) regularize_schur(s, ops);
    return std::make_unique<SparseFactorization>(s);
}

std::unique_ptr<Preconditioner> block_triangular_preconditioner(
    const SaddleSystem& system, const DiscreteOperators& ops, const SolverConfig& cfg,
    double dt, double viscosity, const PressureMeanProjector* projector,
    const SparseFactorization* frozen_schur) {
    return std::make_unique<BlockTriangularPreconditioner>(system, ops, cfg, dt, viscosity,
                                                           projector, frozen_schur);
}

std::unique_ptr<SparseFactorization> stokes_schur_factorization(const DiscreteOperators& ops,
                                                                const SolverConfig& cfg,
                                                                double viscosity) {
    const VelocitySpace& sp = *ops.velocity_space;
    SaddleSystem stokes;
    stokes.velocity_block = SparseMatrix::combine(1.0, ops.mass, cfg.dt * viscosity, ops.diffusion)
                                .select(sp.free_dofs(), sp.free_dofs());
    stokes.div_block = &ops.div_free;
    stokes.div_block_t = &ops.div_free_t;
    stokes.n_velocity = sp.n_free_dofs();
    stokes.n_pressure = ops.pressure_space->n_dofs();
    return exact_schur_factorization(stokes, ops, cfg.zero_mean_pressure);
}

TimeStepper::TimeStepper(const DiscreteOperators& ops, FormContext ctx, SolverConfig cfg,
                         const SparseFactorization* shared_schur)
    : ops_(&ops), ctx_(std::move(ctx)), cfg_(cfg), shared_schur_(shared_schur) {
    cfg_.validate();
    const auto& sets = ops.velocity_space->face_sets();
    if (cfg_.zero_mean_pressure && !sets.outflow.empty())
        throw std::invalid_argument(
            "TimeStepper: zero_mean_pressure with an outflow boundary (pressure already pinned)");
    if (cfg_.zero_mean_pressure)
        projector_ = std::make_unique<PressureMeanProjector>(*ops.pressure_space);
}

std::vector<double> TimeStepper::essential_values(double time) const {
    const VelocitySpace& sp = *ops_->velocity_space;
    if (!ctx_.dirichlet_data) return std::vector<double>(sp.n_dofs(), 0.0);
    const auto& g = ctx_.dirichlet_data;
    return essential_dof_values(sp, [&g, time](Vec2 x) { return g(x, time); });
}

TrajectoryState TimeStepper::initial_state(const FieldCoefficients& u0) const {
    if (u0.velocity_space != ops_->velocity_space)
        throw std::invalid_argument("TimeStepper: u0 built on a different space");
    TrajectoryState state;
    state.step = 0;
    state.velocity = u0;
    state.velocity.time = 0.0;
    state.pressure_rescaled = make_pressure_field(*ops_->pressure_space, 0.0);
    return state;
}

SaddleSystem TimeStepper::build_saddle_system(const TrajectoryState& prev) const {
    const VelocitySpace& sp = *ops_->velocity_space;
    const double dt = cfg_.dt;
    const double time = (prev.step + 1) * dt;

    const SparseMatrix convection = assemble_convection_upwind(sp, prev.velocity);
    SparseMatrix full(sp.n_dofs(), sp.n_dofs());
    full.add_scaled(ops_->mass, 1.0);
    full.add_scaled(convection, dt);
    full.add_scaled(ops_->diffusion, dt * ctx_.viscosity);
    full.compress();

    const auto& free = sp.free_dofs();
    const auto& constrained = sp.dirichlet_dofs();
    SaddleSystem sys;
    sys.velocity_block = full.select(free, free);
    sys.div_block = &ops_->div_free;
    sys.div_block_t = &ops_->div_free_t;
    sys.n_velocity = static_cast<int>(free.size());
    sys.n_pressure = ops_->pressure_space->n_dofs();

    // rhs_u = (M u_prev + dt f)_free - V_fc u_c ; rhs_p = -B_c u_c
    const std::vector<double> essential = essential_values(time);
    std::vector<double> uc(constrained.size());
    for (std::size_t i = 0; i < constrained.size(); ++i) uc[i] = essential[constrained[i]];

    std::vector<double> rhs_full = ops_->mass.apply(prev.velocity.values);
    const std::vector<double> f_h = assemble_rhs(sp, ctx_, time);
    axpy(dt, f_h, rhs_full);

    sys.rhs.assign(sys.size(), 0.0);
    const bool uc_nonzero =
        std::any_of(uc.begin(), uc.end(), [](double v) { return v != 0.0; });
    if (uc_nonzero) {
        const SparseMatrix v_fc = full.select(free, constrained);
        std::vector<double> corr = v_fc.apply(uc);
        for (int i = 0; i < sys.n_velocity; ++i) sys.rhs[i] = rhs_full[free[i]] - corr[i];
        std::vector<double> corr_p = ops_->div_constrained.apply(uc);
        for (int i = 0; i < sys.n_pressure; ++i) sys.rhs[sys.n_velocity + i] = -corr_p[i];
    } else {
        for (int i = 0; i < sys.n_velocity; ++i) sys.rhs[i] = rhs_full[free[i]];
    }
    return sys;
}

TrajectoryState TimeStepper::step_implicit_euler(const TrajectoryState& prev) const {
    const VelocitySpace& sp = *ops_->velocity_space;
    const double time = (prev.step + 1) * cfg_.dt;
    const SaddleSystem sys = build_saddle_system(prev);

    std::unique_ptr<Preconditioner> precond;
    if (cfg_.use_preconditioner) {
        const SparseFactorization* frozen = shared_schur_;
        if (frozen == nullptr && cfg_.schur == SolverConfig::SchurMode::frozen_exact) {
            if (!schur_cache_)
                schur_cache_ = exact_schur_factorization(sys, *ops_, projector_ != nullptr);
            frozen = schur_cache_.get();
        }
        precond = block_triangular_preconditioner(sys, *ops_, cfg_, cfg_.dt, ctx_.viscosity,
                                                  projector_.get(), frozen);
    }
    // Warm start from the previous state (free velocity DOFs + pressure).
    std::vector<double> guess(sys.size(), 0.0);
    const auto& free_dofs = sp.free_dofs();
    for (std::size_t i = 0; i < free_dofs.size(); ++i)
        guess[i] = prev.velocity.values[free_dofs[i]];
    if (prev.pressure_rescaled.size() == sys.n_pressure)
        for (int i = 0; i < sys.n_pressure; ++i)
            guess[sys.n_velocity + i] = prev.pressure_rescaled.values[i];
    const GmresResult result = gmres_solve(sys.op(), sys.rhs, precond.get(), cfg_, guess);
    if (!result.converged)
        throw NonconvergenceError(result.residual, result.iterations,
                                  "GMRES did not converge within " +
                                      std::to_string(cfg_.gmres_maxiter) +
                                      " iterations (residual " + std::to_string(result.residual) +
                                      ")");

    TrajectoryState next;
    next.step = prev.step + 1;
    next.gmres_total_iterations = prev.gmres_total_iterations + result.iterations;
    next.velocity = make_velocity_field(sp, time);
    const std::vector<double> essential = essential_values(time);
    for (int dof : sp.dirichlet_dofs()) next.velocity.values[dof] = essential[dof];
    const auto& free = sp.free_dofs();
    for (std::size_t i = 0; i < free.size(); ++i)
        next.velocity.values[free[i]] = result.solution[i];

    next.pressure_rescaled = make_pressure_field(*ops_->pressure_space, time);
    for (int i = 0; i < sys.n_pressure; ++i)
        next.pressure_rescaled.values[i] = result.solution[sys.n_velocity + i];
    if (projector_) projector_->apply_in_place(next.pressure_rescaled.values);
    return next;
}

TimeStepper::StepCallback TimeStepper::diagnostics_callback(std::ostream& out) {
    out << "step,time,velocity_l2,max_div,gmres_iterations\n";
    long previous_total = 0;
    return [&out, previous_total](const TrajectoryState& state) mutable {
        out << state.step << ',' << format_double(state.velocity.time) << ','
            << format_double(l2_norm_velocity(state.velocity)) << ','
            << format_double(max_pointwise_divergence(state.velocity)) << ','
            << (state.gmres_total_iterations - previous_total) << '\n';
        previous_total = state.gmres_total_iterations;
    };
}

TimeStepper::StepCallback TimeStepper::diagnostics_callback(
    const std::filesystem::path& csv_path) {
    auto out = std::make_shared<std::ofstream>(csv_path);
    if (!*out) throw std::runtime_error("cannot write diagnostics CSV: " + csv_path.string());
    auto inner = diagnostics_callback(*out);
    return [out, inner = std::move(inner)](const TrajectoryState& state) { inner(state); };
}

TrajectoryState TimeStepper::evolve(const FieldCoefficients& u0,
                                    const StepCallback& callback) const {
    TrajectoryState state = initial_state(u0);
    for (int n = 1; n <= cfg_.steps; ++n) {
        try {
            state = step_implicit_euler(state);
        } catch (const NonconvergenceError& err) {
            throw NonconvergenceError(err.residual(), err.iterations(),
                                      "step " + std::to_string(n) + ": " + err.what());
        }
        if (callback) callback(state);
    }
    return state;
}

} // namespace statflow
