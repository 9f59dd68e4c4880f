#include "statflow/spaces.hpp"

#include "statflow/assembly.hpp"
#include "statflow/sparse.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace statflow {

namespace {

struct ModalTerm {
    double c;
    int ax, ay;
    int comp;
};
using ModalFn = std::vector<ModalTerm>;

double pow_int(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

std::vector<ModalFn> rt_modal_basis_build(bool triangle, int k) {
    std::vector<ModalFn> basis;
    if (triangle) {
        for (int comp = 0; comp < 2; ++comp)
            for (int a = 0; a <= k; ++a)
                for (int b = 0; b + a <= k; ++b)
                    basis.push_back({{1.0, a, b, comp}});
        for (int a = k; a >= 0; --a) {
            const int b = k - a;
            basis.push_back({{1.0, a + 1, b, 0}, {1.0, a, b + 1, 1}});
        }
    } else {
        for (int a = 0; a <= k + 1; ++a)
            for (int b = 0; b <= k; ++b)
                basis.push_back({{1.0, a, b, 0}});
        for (int a = 0; a <= k; ++a)
            for (int b = 0; b <= k + 1; ++b)
                basis.push_back({{1.0, a, b, 1}});
    }
    return basis;
}

const std::vector<ModalFn>& rt_modal_basis(bool triangle, int k) {
    static const std::vector<ModalFn> tables[4] = {
        rt_modal_basis_build(false, 0), rt_modal_basis_build(false, 1),
        rt_modal_basis_build(true, 0), rt_modal_basis_build(true, 1)};
    return tables[(triangle ? 2 : 0) + k];
}

std::vector<ModalFn> rt_interior_weights(bool triangle, int k) {
    std::vector<ModalFn> weights;
    if (k == 0) return weights;
    if (triangle) {
        // moments against P_{k-1}(K)^2
        for (int comp = 0; comp < 2; ++comp)
            for (int a = 0; a + 0 <= k - 1; ++a)
                for (int b = 0; a + b <= k - 1; ++b)
                    weights.push_back({{1.0, a, b, comp}});
    } else {
        // moments against Q_{k-1,k} x Q_{k,k-1}
        for (int a = 0; a <= k - 1; ++a)
            for (int b = 0; b <= k; ++b)
                weights.push_back({{1.0, a, b, 0}});
        for (int a = 0; a <= k; ++a)
            for (int b = 0; b <= k - 1; ++b)
                weights.push_back({{1.0, a, b, 1}});
    }
    return weights;
}

Vec2 modal_value(const ModalFn& fn, Vec2 r) {
    Vec2 v{0.0, 0.0};
    for (const auto& t : fn) {
        const double m = t.c * pow_int(r.x, t.ax) * pow_int(r.y, t.ay);
        (t.comp == 0 ? v.x : v.y) += m;
    }
    return v;
}

Mat2 modal_gradient(const ModalFn& fn, Vec2 r) {
    Mat2 g;
    for (const auto& t : fn) {
        const double dx = t.ax > 0 ? t.c * t.ax * pow_int(r.x, t.ax - 1) * pow_int(r.y, t.ay) : 0.0;
        const double dy = t.ay > 0 ? t.c * t.ay * pow_int(r.x, t.ax) * pow_int(r.y, t.ay - 1) : 0.0;
        g.m[t.comp][0] += dx;
        g.m[t.comp][1] += dy;
    }
    return g;
}

double modal_divergence(const ModalFn& fn, Vec2 r) {
    double d = 0.0;
    for (const auto& t : fn) {
        if (t.comp == 0 && t.ax > 0)
            d += t.c * t.ax * pow_int(r.x, t.ax - 1) * pow_int(r.y, t.ay);
        if (t.comp == 1 && t.ay > 0)
            d += t.c * t.ay * pow_int(r.x, t.ax) * pow_int(r.y, t.ay - 1);
    }
    return d;
}

int rt_local_dim(bool triangle, int k) {
    return triangle ? (k + 1) * (k + 3) : 2 * (k + 1) * (k + 2);
}

int pressure_local_dim(bool triangle, int k) {
    return triangle ? (k + 1) * (k + 2) / 2 : (k + 1) * (k + 1);
}

std::vector<ModalFn> pressure_modal_basis_build(bool triangle, int k) {
    std::vector<ModalFn> basis;
    if (triangle) {
        for (int total = 0; total <= k; ++total)
            for (int a = total; a >= 0; --a)
                basis.push_back({{1.0, a, total - a, 0}});
    } else {
        for (int a = 0; a <= k; ++a)
            for (int b = 0; b <= k; ++b)
                basis.push_back({{1.0, a, b, 0}});
    }
    return basis;
}

const std::vector<ModalFn>& pressure_modal_basis(bool triangle, int k) {
    static const std::vector<ModalFn> tables[4] = {
        pressure_modal_basis_build(false, 0), pressure_modal_basis_build(false, 1),
        pressure_modal_basis_build(true, 0), pressure_modal_basis_build(true, 1)};
    return tables[(triangle ? 2 : 0) + k];
}

} // namespace

Vec2 piola_transform(const ElementMap& map, Vec2 ref_point, Vec2 ref_value) {
    const Mat2 J = map.jacobian(ref_point);
    const double det = J.det();
    if (!(det > 0.0))
        throw std::invalid_argument("piola_transform: degenerate element (det J <= 0)");
    return (J * ref_value) / det;
}

double VelocitySpace::face_moment_weight(int moment, double s) {
    switch (moment) {
        case 0: return 1.0;
        case 1: return 2.0 * s - 1.0;
        default: throw std::invalid_argument("face_moment_weight: moment > 1 unsupported");
    }
}

VelocitySpace::VelocitySpace(const Mesh2D& mesh, int degree, const FaceSets& face_sets)
    : mesh_(&mesh), face_sets_(face_sets), degree_(degree) {
    if (degree != 0 && degree != 1)
        throw std::invalid_argument("VelocitySpace: degree must be 0 or 1");
    if (static_cast<int>(face_sets.face_class.size()) != mesh.n_faces())
        throw std::invalid_argument("VelocitySpace: face sets do not match mesh");

    const int k = degree_;
    tri_rule_ = triangle_rule(std::max(2 * k + 2, 3 * k + 2));
    quad_rule_ = ::statflow::quad_rule(2 * k + 3);
    face_rule_ = interval_rule(k + 2);

    const int nf = mesh.n_faces();
    const int face_dofs = nf * (k + 1);
    dof_offset_.assign(mesh.n_elements() + 1, 0);
    coeff_offset_.assign(mesh.n_elements() + 1, 0);
    int interior_base = face_dofs;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const bool tri = mesh.is_triangle(e);
        const int ld = rt_local_dim(tri, k);
        dof_offset_[e + 1] = dof_offset_[e] + ld;
        coeff_offset_[e + 1] = coeff_offset_[e] + ld * ld;
    }
    dof_ids_.resize(dof_offset_.back());
    coeffs_.resize(coeff_offset_.back());

    for (int e = 0; e < mesh.n_elements(); ++e) {
        const bool tri = mesh.is_triangle(e);
        const int nedges = tri ? 3 : 4;
        const int n_int = rt_local_dim(tri, k) - nedges * (k + 1);
        int* ids = dof_ids_.data() + dof_offset_[e];
        int local = 0;
        for (int le = 0; le < nedges; ++le) {
            const int f = mesh.element_faces[e][le];
            for (int q = 0; q <= k; ++q) ids[local++] = face_dof(f, q);
        }
        for (int i = 0; i < n_int; ++i) ids[local++] = interior_base + i;
        interior_base += n_int;
    }
    n_dofs_ = interior_base;

    free_index_.assign(n_dofs_, 0);
    for (int f : face_sets_.dirichlet)
        for (int q = 0; q <= k; ++q) {
            free_index_[face_dof(f, q)] = -1;
            dirichlet_dofs_.push_back(face_dof(f, q));
        }
    std::sort(dirichlet_dofs_.begin(), dirichlet_dofs_.end());
    for (int i = 0; i < n_dofs_; ++i)
        if (free_index_[i] == 0) {
            free_index_[i] = static_cast<int>(free_dofs_.size());
            free_dofs_.push_back(i);
        }

    for (int e = 0; e < mesh.n_elements(); ++e) build_element(e);
}

int VelocitySpace::n_local_dofs(int element) const {
    return dof_offset_[element + 1] - dof_offset_[element];
}

int VelocitySpace::n_interior_dofs(int element) const {
    const bool tri = mesh_->is_triangle(element);
    return rt_local_dim(tri, degree_) - (tri ? 3 : 4) * (degree_ + 1);
}

std::span<const int> VelocitySpace::element_dofs(int element) const {
    return {dof_ids_.data() + dof_offset_[element],
            static_cast<std::size_t>(n_local_dofs(element))};
}

const QuadratureRule& VelocitySpace::volume_rule(int element) const {
    return mesh_->is_triangle(element) ? tri_rule_ : quad_rule_;
}

void VelocitySpace::build_element(int element) {
    const bool tri = mesh_->is_triangle(element);
    const int k = degree_;
    const int ld = rt_local_dim(tri, k);
    const auto& modal = rt_modal_basis(tri, k);
    const auto interior = rt_interior_weights(tri, k);
    const ElementMap map(*mesh_, element);
    const int nedges = tri ? 3 : 4;

    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(ld, ld);
    int row = 0;
    for (int le = 0; le < nedges; ++le) {
        const int f = mesh_->element_faces[element][le];
        const int side = mesh_->face_adjacency[f][0] == element ? 0 : 1;
        const bool reversed = mesh_->face_sides[f][side].reversed;
        const Vec2 n_f = mesh_->face_normals[f];
        const double h_f = mesh_->face_sizes[f];
        for (int q = 0; q <= k; ++q, ++row) {
            for (int i = 0; i < face_rule_.size(); ++i) {
                const double s = face_rule_.points[i].x;
                const double t = reversed ? 1.0 - s : s;
                const Vec2 ref = map.edge_point(le, t);
                const Mat2 J = map.jacobian(ref);
                const double det = J.det();
                if (!(det > 0.0))
                    throw std::runtime_error("VelocitySpace: degenerate element " +
                                             std::to_string(element));
                const double w = face_rule_.weights[i] * h_f * face_moment_weight(q, s);
                for (int j = 0; j < ld; ++j) {
                    const Vec2 phys = (J * modal_value(modal[j], ref)) / det;
                    V(row, j) += w * phys.dot(n_f);
                }
            }
        }
    }
    const QuadratureRule& vr = tri ? tri_rule_ : quad_rule_;
    for (const auto& weight_fn : interior) {
        for (int i = 0; i < vr.size(); ++i) {
            const Vec2 ref = vr.points[i];
            const Vec2 w_val = modal_value(weight_fn, ref);
            for (int j = 0; j < ld; ++j)
                V(row, j) += vr.weights[i] * modal_value(modal[j], ref).dot(w_val);
        }
        ++row;
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(V);
    if (!lu.isInvertible())
        throw std::runtime_error("VelocitySpace: singular DOF matrix on element " +
                                 std::to_string(element));
    const Eigen::MatrixXd C = lu.inverse();
    double* out = coeffs_.data() + coeff_offset_[element];
    for (int i = 0; i < ld; ++i)
        for (int j = 0; j < ld; ++j)
            out[i * ld + j] = C(i, j);
}

void VelocitySpace::eval_basis(int element, Vec2 ref, std::span<Vec2> values) const {
    const bool tri = mesh_->is_triangle(element);
    const int ld = n_local_dofs(element);
    const auto& modal = rt_modal_basis(tri, degree_);
    const ElementMap map(*mesh_, element);
    const Mat2 J = map.jacobian(ref);
    const double det = J.det();
    const double* C = coeffs_.data() + coeff_offset_[element];
    for (int j = 0; j < ld; ++j) values[j] = {0.0, 0.0};
    for (int i = 0; i < ld; ++i) {
        const Vec2 mv = modal_value(modal[i], ref);
        for (int j = 0; j < ld; ++j) {
            const double c = C[i * ld + j];
            if (c != 0.0) values[j] += mv * c;
        }
    }
    for (int j = 0; j < ld; ++j) values[j] = (J * values[j]) / det;
}

void VelocitySpace::eval_basis_full(int element, Vec2 ref, std::span<Vec2> values,
                                    std::span<Mat2> gradients,
                                    std::span<double> divergences) const {
    const bool tri = mesh_->is_triangle(element);
    const int ld = n_local_dofs(element);
    const auto& modal = rt_modal_basis(tri, degree_);
    const ElementMap map(*mesh_, element);
    const Mat2 J = map.jacobian(ref);
    const double det = J.det();
    const Mat2 Jinv = J.inverse();
    const Vec2 m = map.twist();
    const bool affine = (m.x == 0.0 && m.y == 0.0);

    // Combine modal reference quantities into nodal ones. Local dimensions
    // are at most 12 (tensor RT_1 on quadrilaterals).
    const double* C = coeffs_.data() + coeff_offset_[element];
    std::array<Vec2, 12> rv{};
    std::array<Mat2, 12> rg{};
    std::array<double, 12> rd{};
    for (int i = 0; i < ld; ++i) {
        const Vec2 mv = modal_value(modal[i], ref);
        const Mat2 mg = modal_gradient(modal[i], ref);
        const double md = modal_divergence(modal[i], ref);
        for (int j = 0; j < ld; ++j) {
            const double c = C[i * ld + j];
            if (c == 0.0) continue;
            rv[j] += mv * c;
            rg[j] += mg * c;
            rd[j] += md * c;
        }
    }

    // Piola map: value = J v / det, divergence = div_ref / det,
    // gradient = [d/dref (J v / det)] J^{-1}.
    Mat2 dPx, dPy; // derivatives of P = J/det w.r.t. reference coords
    if (!affine) {
        const Vec2 j1 = J.col(0), j2 = J.col(1);
        const double ddet_dx = cross(j1, m);
        const double ddet_dy = cross(m, j2);
        const Mat2 dJx = Mat2::from_columns({0.0, 0.0}, m);
        const Mat2 dJy = Mat2::from_columns(m, {0.0, 0.0});
        dPx = dJx * (1.0 / det) - J * (ddet_dx / (det * det));
        dPy = dJy * (1.0 / det) - J * (ddet_dy / (det * det));
    }
    for (int j = 0; j < ld; ++j) {
        values[j] = (J * rv[j]) / det;
        divergences[j] = rd[j] / det;
        // columns of d/dref (P v)
        Vec2 gx = (J * rg[j].col(0)) / det;
        Vec2 gy = (J * rg[j].col(1)) / det;
        if (!affine) {
            gx += dPx * rv[j];
            gy += dPy * rv[j];
        }
        gradients[j] = Mat2::from_columns(gx, gy) * Jinv;
    }
}

PressureSpace::PressureSpace(const Mesh2D& mesh, int degree, bool zero_mean)
    : mesh_(&mesh), degree_(degree), zero_mean_(zero_mean) {
    if (degree != 0 && degree != 1)
        throw std::invalid_argument("PressureSpace: degree must be 0 or 1");
    dof_offset_.assign(mesh.n_elements() + 1, 0);
    for (int e = 0; e < mesh.n_elements(); ++e)
        dof_offset_[e + 1] = dof_offset_[e] + pressure_local_dim(mesh.is_triangle(e), degree_);
    n_dofs_ = dof_offset_.back();
}

int PressureSpace::n_local_dofs(int element) const {
    return dof_offset_[element + 1] - dof_offset_[element];
}

void PressureSpace::eval_basis(int element, Vec2 ref, std::span<double> values) const {
    const auto& basis = pressure_modal_basis(mesh_->is_triangle(element), degree_);
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const auto& t = basis[j][0];
        values[j] = t.c * pow_int(ref.x, t.ax) * pow_int(ref.y, t.ay);
    }
}

FieldCoefficients make_velocity_field(const VelocitySpace& space, double time) {
    FieldCoefficients f;
    f.velocity_space = &space;
    f.values.assign(space.n_dofs(), 0.0);
    f.time = time;
    return f;
}

FieldCoefficients make_pressure_field(const PressureSpace& space, double time) {
    FieldCoefficients f;
    f.pressure_space = &space;
    f.values.assign(space.n_dofs(), 0.0);
    f.time = time;
    return f;
}

namespace {

void check_velocity(const FieldCoefficients& field) {
    if (!field.velocity_space)
        throw std::invalid_argument("expected a velocity field");
    if (field.size() != field.velocity_space->n_dofs())
        throw std::invalid_argument("velocity coefficient vector has wrong length");
}

} // namespace

Vec2 eval_velocity(const FieldCoefficients& field, int element, Vec2 ref) {
    check_velocity(field);
    const VelocitySpace& sp = *field.velocity_space;
    if (element < 0 || element >= sp.mesh().n_elements())
        throw std::out_of_range("eval_velocity: element index out of range");
    const int ld = sp.n_local_dofs(element);
    std::array<Vec2, 12> basis;
    sp.eval_basis(element, ref, {basis.data(), static_cast<std::size_t>(ld)});
    const auto dofs = sp.element_dofs(element);
    Vec2 v{0.0, 0.0};
    for (int j = 0; j < ld; ++j) v += basis[j] * field.values[dofs[j]];
    return v;
}

Mat2 eval_velocity_gradient(const FieldCoefficients& field, int element, Vec2 ref) {
    check_velocity(field);
    const VelocitySpace& sp = *field.velocity_space;
    const int ld = sp.n_local_dofs(element);
    std::array<Vec2, 12> basis;
    std::array<Mat2, 12> grads;
    std::array<double, 12> divs;
    sp.eval_basis_full(element, ref, {basis.data(), static_cast<std::size_t>(ld)},
                       {grads.data(), static_cast<std::size_t>(ld)},
                       {divs.data(), static_cast<std::size_t>(ld)});
    const auto dofs = sp.element_dofs(element);
    Mat2 g;
    for (int j = 0; j < ld; ++j) g += grads[j] * field.values[dofs[j]];
    return g;
}

double eval_velocity_divergence(const FieldCoefficients& field, int element, Vec2 ref) {
    check_velocity(field);
    const VelocitySpace& sp = *field.velocity_space;
    const int ld = sp.n_local_dofs(element);
    std::array<Vec2, 12> basis;
    std::array<Mat2, 12> grads;
    std::array<double, 12> divs;
    sp.eval_basis_full(element, ref, {basis.data(), static_cast<std::size_t>(ld)},
                       {grads.data(), static_cast<std::size_t>(ld)},
                       {divs.data(), static_cast<std::size_t>(ld)});
    const auto dofs = sp.element_dofs(element);
    double d = 0.0;
    for (int j = 0; j < ld; ++j) d += divs[j] * field.values[dofs[j]];
    return d;
}

double eval_pressure(const FieldCoefficients& field, int element, Vec2 ref) {
    if (!field.pressure_space)
        throw std::invalid_argument("expected a pressure field");
    const PressureSpace& sp = *field.pressure_space;
    if (element < 0 || element >= sp.mesh().n_elements())
        throw std::out_of_range("eval_pressure: element index out of range");
    const int ld = sp.n_local_dofs(element);
    std::vector<double> basis(ld);
    sp.eval_basis(element, ref, basis);
    double v = 0.0;
    for (int j = 0; j < ld; ++j) v += basis[j] * field.values[sp.global_dof(element, j)];
    return v;
}

std::vector<double> essential_dof_values(const VelocitySpace& space, const VectorField& g) {
    const Mesh2D& mesh = space.mesh();
    const int k = space.degree();
    std::vector<double> values(space.n_dofs(), 0.0);
    const QuadratureRule& fr = space.face_rule();
    for (int f : space.face_sets().dirichlet) {
        const Vec2 a = mesh.vertices[mesh.faces[f][0]];
        const Vec2 b = mesh.vertices[mesh.faces[f][1]];
        const Vec2 n_f = mesh.face_normals[f];
        const double h_f = mesh.face_sizes[f];
        for (int q = 0; q <= k; ++q) {
            double moment = 0.0;
            for (int i = 0; i < fr.size(); ++i) {
                const double s = fr.points[i].x;
                const Vec2 x = lerp(a, b, s);
                moment += fr.weights[i] * h_f * g(x).dot(n_f) *
                          VelocitySpace::face_moment_weight(q, s);
            }
            values[space.face_dof(f, q)] = moment;
        }
    }
    return values;
}

FieldCoefficients l2_project_velocity(const VectorField& u0, const VelocitySpace& space,
                                      std::span<const double> essential) {
    if (!essential.empty() && static_cast<int>(essential.size()) != space.n_dofs())
        throw std::invalid_argument("l2_project_velocity: essential vector has wrong length");

    SparseMatrix mass = assemble_mass(space);
    const Mesh2D& mesh = space.mesh();

    std::vector<double> load(space.n_dofs(), 0.0);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = space.volume_rule(e);
        const ElementMap map(mesh, e);
        const int ld = space.n_local_dofs(e);
        std::vector<Vec2> basis(ld);
        const auto dofs = space.element_dofs(e);
        for (int i = 0; i < vr.size(); ++i) {
            const Vec2 ref = vr.points[i];
            const double w = vr.weights[i] * map.det_jacobian(ref);
            const Vec2 val = u0(map.map(ref));
            space.eval_basis(e, ref, basis);
            for (int j = 0; j < ld; ++j)
                load[dofs[j]] += w * val.dot(basis[j]);
        }
    }

    FieldCoefficients result = make_velocity_field(space);
    if (!essential.empty())
        for (int dof : space.dirichlet_dofs()) result.values[dof] = essential[dof];

    const auto& free = space.free_dofs();
    const SparseMatrix m_ff = mass.select(free, free);
    // rhs_f = load_f - M_fc u_c
    std::vector<double> mc = mass.apply(result.values);
    std::vector<double> rhs(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) rhs[i] = load[free[i]] - mc[free[i]];

    SparseFactorization lu(m_ff);
    const std::vector<double> sol = lu.solve(rhs);
    for (std::size_t i = 0; i < free.size(); ++i) result.values[free[i]] = sol[i];
    return result;
}

FieldCoefficients rt_interpolate_velocity(const VectorField& v, const VelocitySpace& space) {
    const Mesh2D& mesh = space.mesh();
    const int k = space.degree();
    FieldCoefficients out = make_velocity_field(space);

    const QuadratureRule& fr = space.face_rule();
    for (int f = 0; f < mesh.n_faces(); ++f) {
        const Vec2 a = mesh.vertices[mesh.faces[f][0]];
        const Vec2 b = mesh.vertices[mesh.faces[f][1]];
        const Vec2 n_f = mesh.face_normals[f];
        const double h_f = mesh.face_sizes[f];
        for (int q = 0; q <= k; ++q) {
            double moment = 0.0;
            for (int i = 0; i < fr.size(); ++i) {
                const double s = fr.points[i].x;
                moment += fr.weights[i] * h_f * v(lerp(a, b, s)).dot(n_f) *
                          VelocitySpace::face_moment_weight(q, s);
            }
            out.values[space.face_dof(f, q)] = moment;
        }
    }

    for (int e = 0; e < mesh.n_elements(); ++e) {
        const int n_int = space.n_interior_dofs(e);
        if (n_int == 0) continue;
        const bool tri = mesh.is_triangle(e);
        const auto weights = rt_interior_weights(tri, k);
        const QuadratureRule& vr = space.volume_rule(e);
        const ElementMap map(mesh, e);
        const int nedges = tri ? 3 : 4;
        const auto dofs = space.element_dofs(e);
        for (int i = 0; i < n_int; ++i) {
            double moment = 0.0;
            for (int q = 0; q < vr.size(); ++q) {
                const Vec2 ref = vr.points[q];
                const Mat2 J = map.jacobian(ref);
                const Vec2 pullback = (J.inverse() * v(map.map(ref))) * J.det();
                moment += vr.weights[q] * pullback.dot(modal_value(weights[i], ref));
            }
            out.values[dofs[nedges * (k + 1) + i]] = moment;
        }
    }
    return out;
}

PointLocator::PointLocator(const Mesh2D& mesh) : mesh_(&mesh) {
    bbox_ = {mesh.vertices[0], mesh.vertices[0]};
    for (const Vec2& v : mesh.vertices) {
        bbox_.lo.x = std::min(bbox_.lo.x, v.x);
        bbox_.lo.y = std::min(bbox_.lo.y, v.y);
        bbox_.hi.x = std::max(bbox_.hi.x, v.x);
        bbox_.hi.y = std::max(bbox_.hi.y, v.y);
    }
    const int target = std::max(1, static_cast<int>(std::sqrt(mesh.n_elements())));
    nx_ = target;
    ny_ = target;
    bins_.assign(static_cast<std::size_t>(nx_) * ny_, {});
    for (int e = 0; e < mesh.n_elements(); ++e) {
        Rect eb{mesh.vertices[mesh.elements[e][0]], mesh.vertices[mesh.elements[e][0]]};
        for (int i = 0; i < mesh.element_vertex_count(e); ++i) {
            const Vec2 v = mesh.vertices[mesh.elements[e][i]];
            eb.lo.x = std::min(eb.lo.x, v.x);
            eb.lo.y = std::min(eb.lo.y, v.y);
            eb.hi.x = std::max(eb.hi.x, v.x);
            eb.hi.y = std::max(eb.hi.y, v.y);
        }
        const double pad = 1e-12 * (1.0 + mesh.mesh_size);
        const int i0 = std::clamp(static_cast<int>((eb.lo.x - pad - bbox_.lo.x) / bbox_.width() * nx_), 0, nx_ - 1);
        const int i1 = std::clamp(static_cast<int>((eb.hi.x + pad - bbox_.lo.x) / bbox_.width() * nx_), 0, nx_ - 1);
        const int j0 = std::clamp(static_cast<int>((eb.lo.y - pad - bbox_.lo.y) / bbox_.height() * ny_), 0, ny_ - 1);
        const int j1 = std::clamp(static_cast<int>((eb.hi.y + pad - bbox_.lo.y) / bbox_.height() * ny_), 0, ny_ - 1);
        for (int j = j0; j <= j1; ++j)
            for (int i = i0; i <= i1; ++i)
                bins_[static_cast<std::size_t>(j) * nx_ + i].push_back(e);
    }
}

std::optional<PointLocator::Location> PointLocator::try_locate(Vec2 x) const {
    constexpr double tol = 1e-9;
    if (!bbox_.contains(x, tol * (1.0 + mesh_->mesh_size))) return std::nullopt;
    const int i = std::clamp(static_cast<int>((x.x - bbox_.lo.x) / bbox_.width() * nx_), 0, nx_ - 1);
    const int j = std::clamp(static_cast<int>((x.y - bbox_.lo.y) / bbox_.height() * ny_), 0, ny_ - 1);
    for (int e : bins_[static_cast<std::size_t>(j) * nx_ + i]) {
        const ElementMap map(*mesh_, e);
        const Vec2 r = map.inverse_map(x);
        const bool inside = map.triangle()
                                ? (r.x >= -tol && r.y >= -tol && r.x + r.y <= 1.0 + tol)
                                : (r.x >= -tol && r.x <= 1.0 + tol && r.y >= -tol && r.y <= 1.0 + tol);
        if (inside && (map.map(r) - x).norm() <= tol * (1.0 + mesh_->mesh_size))
            return Location{e, r};
    }
    return std::nullopt;
}

PointLocator::Location PointLocator::locate(Vec2 x) const {
    auto loc = try_locate(x);
    if (!loc)
        throw std::invalid_argument("PointLocator: point (" + std::to_string(x.x) + ", " +
                                    std::to_string(x.y) + ") not inside the mesh");
    return *loc;
}

Vec2 eval_velocity_at(const FieldCoefficients& field, const PointLocator& locator, Vec2 x) {
    const auto loc = locator.locate(x);
    return eval_velocity(field, loc.element, loc.ref);
}

double max_pointwise_divergence(const FieldCoefficients& velocity) {
    check_velocity(velocity);
    const VelocitySpace& sp = *velocity.velocity_space;
    const Mesh2D& mesh = sp.mesh();
    double m = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = sp.volume_rule(e);
        const int ld = sp.n_local_dofs(e);
        std::vector<Vec2> basis(ld);
        std::vector<Mat2> grads(ld);
        std::vector<double> divs(ld);
        const auto dofs = sp.element_dofs(e);
        for (int i = 0; i < vr.size(); ++i) {
            sp.eval_basis_full(e, vr.points[i], basis, grads, divs);
            double d = 0.0;
            for (int j = 0; j < ld; ++j) d += divs[j] * velocity.values[dofs[j]];
            m = std::max(m, std::abs(d));
        }
    }
    return m;
}

double l2_norm_velocity(const FieldCoefficients& velocity) {
    check_velocity(velocity);
    const VelocitySpace& sp = *velocity.velocity_space;
    const Mesh2D& mesh = sp.mesh();
    double acc = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = sp.volume_rule(e);
        const ElementMap map(mesh, e);
        for (int i = 0; i < vr.size(); ++i) {
            const Vec2 v = eval_velocity(velocity, e, vr.points[i]);
            acc += vr.weights[i] * map.det_jacobian(vr.points[i]) * v.norm2();
        }
    }
    return std::sqrt(acc);
}

double l2_error_velocity(const FieldCoefficients& velocity, const VectorField& exact) {
    check_velocity(velocity);
    const VelocitySpace& sp = *velocity.velocity_space;
    const Mesh2D& mesh = sp.mesh();
    double acc = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = sp.volume_rule(e);
        const ElementMap map(mesh, e);
        for (int i = 0; i < vr.size(); ++i) {
            const Vec2 ref = vr.points[i];
            const Vec2 diff = eval_velocity(velocity, e, ref) - exact(map.map(ref));
            acc += vr.weights[i] * map.det_jacobian(ref) * diff.norm2();
        }
    }
    return std::sqrt(acc);
}

} // namespace statflow
