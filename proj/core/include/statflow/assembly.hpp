#pragma once

#include "statflow/sparse.hpp"
#include "statflow/spaces.hpp"

#include <functional>

namespace statflow {

/// Problem data shared by the bilinear/linear forms. Callables receive the
/// physical point and the time; null callables mean identically zero.
struct FormContext {
    double viscosity = 1.0;
    /// Jump penalization parameter; 0 selects the default 10(k+1)^2.
    double sigma = 0.0;
    std::function<Vec2(Vec2, double)> dirichlet_data;
    std::function<Vec2(Vec2, double)> body_force;

    double penalty(int degree) const {
        return sigma > 0.0 ? sigma : 10.0 * (degree + 1) * (degree + 1);
    }
};

/// Term selection for assemble_diffusion_sip (tests isolate terms with it).
enum SipTerm : unsigned {
    kSipVolume = 1u,
    kSipConsistency = 2u,
    kSipPenalty = 4u,
    kSipAll = kSipVolume | kSipConsistency | kSipPenalty,
};

/// Mass matrix: (i,j) = integral of phi_j . phi_i. Symmetric positive
/// definite on the free DOFs.
SparseMatrix assemble_mass(const VelocitySpace& space);

/// Convection with upwind flux: the element term sum_K (w . grad u) . v, the
/// interior-face central term -(w.n) [[u]] . {v} and the interior-face
/// penalty +|w.n| [[u]] . [[v]]. Linear in w; w must live in `space`.
SparseMatrix assemble_convection_upwind(const VelocitySpace& space, const FieldCoefficients& w);

/// Symmetric interior penalty diffusion: element gradient product, the two
/// consistency terms and the sigma/h_F penalty over interior and Dirichlet
/// faces. The viscosity factor is NOT included (the solver scales by nu).
SparseMatrix assemble_diffusion_sip(const VelocitySpace& space, const FormContext& ctx,
                                    unsigned terms = kSipAll, bool include_interior = true,
                                    bool include_dirichlet = true);

/// Divergence form: rows are pressure DOFs, columns velocity DOFs,
/// (q,u) = sum_K integral of q div(u).
SparseMatrix assemble_divergence(const VelocitySpace& vspace, const PressureSpace& pspace);

/// Source linear form: integral of f . v, minus the nu-weighted Dirichlet
/// consistency term with g (x) n, plus the nu sigma / h_F Dirichlet penalty.
std::vector<double> assemble_rhs(const VelocitySpace& space, const FormContext& ctx,
                                 double time = 0.0);

/// Pressure mass matrix (block diagonal across elements).
SparseMatrix assemble_pressure_mass(const PressureSpace& space);

/// Pressure load vector b, b_i = integral of q_i.
std::vector<double> assemble_pressure_load(const PressureSpace& space);

} // namespace statflow
