#pragma once

#include "statflow/mesh.hpp"
#include "statflow/quadrature.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace statflow {

using VectorField = std::function<Vec2(Vec2)>;

/// Contravariant Piola transform of a reference vector value at a reference
/// point: v = J v_ref / det J. Preserves normal fluxes across faces. Throws
/// on nonpositive Jacobian determinant.
Vec2 piola_transform(const ElementMap& map, Vec2 ref_point, Vec2 ref_value);

/// H(div)-conforming Raviart-Thomas velocity space of degree k in {0,1} on
/// triangles, tensor-product Raviart-Thomas on quadrilaterals.
///
/// Global DOFs are face moments of v.n against Legendre polynomials in the
/// face's global arc-length parameter (vmin -> vmax), plus interior moments.
/// Face DOFs are shared with consistent sign by both adjacent elements since
/// both sides realize the same global functional. DOFs on Dirichlet faces are
/// flagged; constraining them to zero realizes the strongly-constrained
/// subspace with v.n = 0 on the Dirichlet boundary.
class VelocitySpace {
public:
    VelocitySpace(const Mesh2D& mesh, int degree, const FaceSets& face_sets);

    const Mesh2D& mesh() const { return *mesh_; }
    const FaceSets& face_sets() const { return face_sets_; }
    int degree() const { return degree_; }

    int n_dofs() const { return n_dofs_; }
    int n_free_dofs() const { return static_cast<int>(free_dofs_.size()); }
    const std::vector<int>& free_dofs() const { return free_dofs_; }
    const std::vector<int>& dirichlet_dofs() const { return dirichlet_dofs_; }
    /// global dof -> index into free_dofs(), or -1 if constrained.
    const std::vector<int>& free_index() const { return free_index_; }
    bool is_dirichlet_dof(int dof) const { return free_index_[dof] < 0; }

    int face_dofs_per_face() const { return degree_ + 1; }
    int face_dof(int face, int moment) const { return face * (degree_ + 1) + moment; }
    int n_local_dofs(int element) const;
    int n_interior_dofs(int element) const;
    std::span<const int> element_dofs(int element) const;

    /// Physical basis values at a reference point (via Piola).
    void eval_basis(int element, Vec2 ref, std::span<Vec2> values) const;
    /// Values, physical gradients (rows = components, cols = d/dx_j) and
    /// divergences.
    void eval_basis_full(int element, Vec2 ref, std::span<Vec2> values,
                         std::span<Mat2> gradients, std::span<double> divergences) const;

    /// Quadrature rules matched to the space (exact for all bilinear forms;
    /// the |w.n| upwind factor is the only non-polynomial integrand).
    const QuadratureRule& volume_rule(int element) const;
    const QuadratureRule& face_rule() const { return face_rule_; }
    /// Shifted Legendre value L_q(s), s in [0,1], q <= degree.
    static double face_moment_weight(int moment, double s);

private:
    void build_element(int element);

    const Mesh2D* mesh_;
    FaceSets face_sets_;
    int degree_;
    int n_dofs_ = 0;
    std::vector<int> free_dofs_, dirichlet_dofs_, free_index_;
    std::vector<int> dof_offset_;      // per element into dof_ids_
    std::vector<int> dof_ids_;         // flattened per-element global dof ids
    std::vector<int> coeff_offset_;    // per element into coeffs_
    std::vector<double> coeffs_;       // per element: ld x ld, nodal_j = sum_i C[i*ld+j] modal_i
    QuadratureRule tri_rule_, quad_rule_, face_rule_;
};

/// Discontinuous pressure space: total-degree P_k per triangle, tensor-product
/// Q_{k,k} per quadrilateral (the image of the divergence of the matching
/// velocity space). No DOF is shared between elements.
class PressureSpace {
public:
    PressureSpace(const Mesh2D& mesh, int degree, bool zero_mean = false);

    const Mesh2D& mesh() const { return *mesh_; }
    int degree() const { return degree_; }
    bool zero_mean() const { return zero_mean_; }

    int n_dofs() const { return n_dofs_; }
    int n_local_dofs(int element) const;
    int global_dof(int element, int local) const { return dof_offset_[element] + local; }

    void eval_basis(int element, Vec2 ref, std::span<double> values) const;

private:
    const Mesh2D* mesh_;
    int degree_;
    bool zero_mean_;
    int n_dofs_ = 0;
    std::vector<int> dof_offset_;
};

/// Coefficient vector of a discrete velocity or pressure field at one time.
/// Exactly one of the space pointers is set; the referenced space must
/// outlive the field.
struct FieldCoefficients {
    const VelocitySpace* velocity_space = nullptr;
    const PressureSpace* pressure_space = nullptr;
    std::vector<double> values;
    double time = 0.0;

    int size() const { return static_cast<int>(values.size()); }
};

FieldCoefficients make_velocity_field(const VelocitySpace& space, double time = 0.0);
FieldCoefficients make_pressure_field(const PressureSpace& space, double time = 0.0);

Vec2 eval_velocity(const FieldCoefficients& field, int element, Vec2 ref);
Mat2 eval_velocity_gradient(const FieldCoefficients& field, int element, Vec2 ref);
double eval_velocity_divergence(const FieldCoefficients& field, int element, Vec2 ref);
double eval_pressure(const FieldCoefficients& field, int element, Vec2 ref);

/// Values of the Dirichlet-face DOF functionals applied to g (face moments of
/// g.n); full-length vector, zero at free DOFs. These are the essential
/// values the solver pins constrained DOFs to.
std::vector<double> essential_dof_values(const VelocitySpace& space, const VectorField& g);

/// L2-orthogonal projection of u0 onto the velocity space with constrained
/// DOFs pinned to `essential` (pass empty for the homogeneous space V_k).
FieldCoefficients l2_project_velocity(const VectorField& u0, const VelocitySpace& space,
                                      std::span<const double> essential = {});

/// Canonical (commuting-diagram) interpolant: every DOF is set to its
/// functional value on v. The elementwise divergence of the interpolant is
/// the pressure-space projection of div v, so exactly divergence-free inputs
/// interpolate to exactly divergence-free discrete fields.
FieldCoefficients rt_interpolate_velocity(const VectorField& v, const VelocitySpace& space);

/// Maps physical points to (element, reference coords) via a uniform bin grid
/// over element bounding boxes.
class PointLocator {
public:
    explicit PointLocator(const Mesh2D& mesh);

    struct Location {
        int element;
        Vec2 ref;
    };
    Location locate(Vec2 x) const;
    std::optional<Location> try_locate(Vec2 x) const;

private:
    const Mesh2D* mesh_;
    Rect bbox_;
    int nx_, ny_;
    std::vector<std::vector<int>> bins_;
};

Vec2 eval_velocity_at(const FieldCoefficients& field, const PointLocator& locator, Vec2 x);

/// max over all element quadrature points of |div u_h|.
double max_pointwise_divergence(const FieldCoefficients& velocity);
/// L2(D) norm by quadrature.
double l2_norm_velocity(const FieldCoefficients& velocity);
/// L2(D) error against a callable reference field.
double l2_error_velocity(const FieldCoefficients& velocity, const VectorField& exact);

} // namespace statflow
