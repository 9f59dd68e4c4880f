#include "statflow/assembly.hpp"

#include <cmath>
#include <stdexcept>

namespace statflow {

namespace {

/// Basis data for one side of a face at the face quadrature points.
struct FaceSide {
    int element = -1;
    std::vector<int> dofs;
    // [point][local dof]
    std::vector<std::vector<Vec2>> values;
    std::vector<std::vector<Mat2>> gradients;
};

void eval_face_side(const VelocitySpace& space, int face, int side, FaceSide& out,
                    bool need_gradients = true) {
    const Mesh2D& mesh = space.mesh();
    const int e = mesh.face_adjacency[face][side];
    const auto fs = mesh.face_sides[face][side];
    const ElementMap map(mesh, e);
    const QuadratureRule& fr = space.face_rule();
    const int ld = space.n_local_dofs(e);

    out.element = e;
    out.dofs.assign(space.element_dofs(e).begin(), space.element_dofs(e).end());
    out.values.assign(fr.size(), std::vector<Vec2>(ld));
    if (need_gradients) out.gradients.assign(fr.size(), std::vector<Mat2>(ld));
    std::vector<double> divs(ld);
    for (int i = 0; i < fr.size(); ++i) {
        const double s = fr.points[i].x;
        const double t = fs.reversed ? 1.0 - s : s;
        const Vec2 ref = map.edge_point(fs.local_edge, t);
        if (need_gradients)
            space.eval_basis_full(e, ref, out.values[i], out.gradients[i], divs);
        else
            space.eval_basis(e, ref, out.values[i]);
    }
}

} // namespace

SparseMatrix assemble_mass(const VelocitySpace& space) {
    const Mesh2D& mesh = space.mesh();
    SparseMatrix m(space.n_dofs(), space.n_dofs());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = space.volume_rule(e);
        const ElementMap map(mesh, e);
        const int ld = space.n_local_dofs(e);
        const auto dofs = space.element_dofs(e);
        std::vector<Vec2> basis(ld);
        std::vector<double> local(ld * ld, 0.0);
        for (int q = 0; q < vr.size(); ++q) {
            const double w = vr.weights[q] * map.det_jacobian(vr.points[q]);
            space.eval_basis(e, vr.points[q], basis);
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j)
                    local[i * ld + j] += w * basis[j].dot(basis[i]);
        }
        for (int i = 0; i < ld; ++i)
            for (int j = 0; j < ld; ++j)
                m.add(dofs[i], dofs[j], local[i * ld + j]);
    }
    m.compress();
    return m;
}

SparseMatrix assemble_convection_upwind(const VelocitySpace& space, const FieldCoefficients& w) {
    if (w.velocity_space != &space)
        throw std::invalid_argument(
            "assemble_convection_upwind: w must belong to the same velocity space");
    const Mesh2D& mesh = space.mesh();
    SparseMatrix c(space.n_dofs(), space.n_dofs());

    // Element term: (w . grad u) . v
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = space.volume_rule(e);
        const ElementMap map(mesh, e);
        const int ld = space.n_local_dofs(e);
        const auto dofs = space.element_dofs(e);
        std::vector<Vec2> basis(ld);
        std::vector<Mat2> grads(ld);
        std::vector<double> divs(ld);
        std::vector<double> local(ld * ld, 0.0);
        for (int q = 0; q < vr.size(); ++q) {
            const double wq = vr.weights[q] * map.det_jacobian(vr.points[q]);
            space.eval_basis_full(e, vr.points[q], basis, grads, divs);
            Vec2 wval{0.0, 0.0};
            for (int j = 0; j < ld; ++j) wval += basis[j] * w.values[dofs[j]];
            for (int j = 0; j < ld; ++j) {
                const Vec2 conv = grads[j] * wval; // (w . grad) u_j
                for (int i = 0; i < ld; ++i)
                    local[i * ld + j] += wq * conv.dot(basis[i]);
            }
        }
        for (int i = 0; i < ld; ++i)
            for (int j = 0; j < ld; ++j)
                c.add(dofs[i], dofs[j], local[i * ld + j]);
    }

    // Interior-face terms: -(w.n)[[u]].{v} + |w.n|[[u]].[[v]]
    const QuadratureRule& fr = space.face_rule();
    FaceSide sides[2];
    for (int f : space.face_sets().interior) {
        eval_face_side(space, f, 0, sides[0], /*need_gradients=*/false);
        eval_face_side(space, f, 1, sides[1], /*need_gradients=*/false);
        const Vec2 n_f = mesh.face_normals[f];
        const double h_f = mesh.face_sizes[f];
        const int ld0 = static_cast<int>(sides[0].dofs.size());
        const int ld1 = static_cast<int>(sides[1].dofs.size());
        const int nl = ld0 + ld1;
        std::vector<double> local(nl * nl, 0.0);
        auto jump = [&](int q, int a) {
            return a < ld0 ? sides[0].values[q][a] : sides[1].values[q][a - ld0] * -1.0;
        };
        auto avg = [&](int q, int a) {
            return (a < ld0 ? sides[0].values[q][a] : sides[1].values[q][a - ld0]) * 0.5;
        };
        for (int q = 0; q < fr.size(); ++q) {
            const double wq = fr.weights[q] * h_f;
            // w . n evaluated from K1 (single-valued by normal continuity)
            Vec2 wval{0.0, 0.0};
            for (int j = 0; j < ld0; ++j)
                wval += sides[0].values[q][j] * w.values[sides[0].dofs[j]];
            const double wn = wval.dot(n_f);
            const double awn = std::abs(wn);
            for (int j = 0; j < nl; ++j) {
                const Vec2 ju = jump(q, j);
                for (int i = 0; i < nl; ++i)
                    local[i * nl + j] += wq * (-wn * ju.dot(avg(q, i)) + awn * ju.dot(jump(q, i)));
            }
        }
        auto gdof = [&](int a) { return a < ld0 ? sides[0].dofs[a] : sides[1].dofs[a - ld0]; };
        for (int i = 0; i < nl; ++i)
            for (int j = 0; j < nl; ++j)
                c.add(gdof(i), gdof(j), local[i * nl + j]);
    }
    c.compress();
    return c;
}

SparseMatrix assemble_diffusion_sip(const VelocitySpace& space, const FormContext& ctx,
                                    unsigned terms, bool include_interior,
                                    bool include_dirichlet) {
    const Mesh2D& mesh = space.mesh();
    const double sigma = ctx.penalty(space.degree());
    SparseMatrix a(space.n_dofs(), space.n_dofs());

    if (terms & kSipVolume) {
        for (int e = 0; e < mesh.n_elements(); ++e) {
            const QuadratureRule& vr = space.volume_rule(e);
            const ElementMap map(mesh, e);
            const int ld = space.n_local_dofs(e);
            const auto dofs = space.element_dofs(e);
            std::vector<Vec2> basis(ld);
            std::vector<Mat2> grads(ld);
            std::vector<double> divs(ld);
            std::vector<double> local(ld * ld, 0.0);
            for (int q = 0; q < vr.size(); ++q) {
                const double wq = vr.weights[q] * map.det_jacobian(vr.points[q]);
                space.eval_basis_full(e, vr.points[q], basis, grads, divs);
                for (int i = 0; i < ld; ++i)
                    for (int j = 0; j < ld; ++j)
                        local[i * ld + j] += wq * grads[j].ddot(grads[i]);
            }
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j)
                    a.add(dofs[i], dofs[j], local[i * ld + j]);
        }
    }

    if (terms & (kSipConsistency | kSipPenalty)) {
        const QuadratureRule& fr = space.face_rule();
        FaceSide sides[2];
        auto assemble_face = [&](int f, int nsides) {
            const Vec2 n_f = mesh.face_normals[f];
            const double h_f = mesh.face_sizes[f];
            const int ld0 = static_cast<int>(sides[0].dofs.size());
            const int ld1 = nsides == 2 ? static_cast<int>(sides[1].dofs.size()) : 0;
            const int nl = ld0 + ld1;
            // jump factor: [[a (x) n]] = jumpv(a) (x) n
            auto jumpv = [&](int q, int a) {
                return a < ld0 ? sides[0].values[q][a] : sides[1].values[q][a - ld0] * -1.0;
            };
            auto avg_grad_n = [&](int q, int a) {
                const Mat2& g = a < ld0 ? sides[0].gradients[q][a] : sides[1].gradients[q][a - ld0];
                return (g * n_f) * (nsides == 2 ? 0.5 : 1.0);
            };
            std::vector<double> local(nl * nl, 0.0);
            for (int q = 0; q < fr.size(); ++q) {
                const double wq = fr.weights[q] * h_f;
                for (int j = 0; j < nl; ++j) {
                    const Vec2 ju = jumpv(q, j);
                    const Vec2 gu = avg_grad_n(q, j);
                    for (int i = 0; i < nl; ++i) {
                        double val = 0.0;
                        if (terms & kSipConsistency)
                            val -= jumpv(q, i).dot(gu) + ju.dot(avg_grad_n(q, i));
                        if (terms & kSipPenalty)
                            val += (sigma / h_f) * ju.dot(jumpv(q, i));
                        local[i * nl + j] += wq * val;
                    }
                }
            }
            auto gdof = [&](int a) { return a < ld0 ? sides[0].dofs[a] : sides[1].dofs[a - ld0]; };
            for (int i = 0; i < nl; ++i)
                for (int j = 0; j < nl; ++j)
                    a.add(gdof(i), gdof(j), local[i * nl + j]);
        };
        if (include_interior)
            for (int f : space.face_sets().interior) {
                eval_face_side(space, f, 0, sides[0]);
                eval_face_side(space, f, 1, sides[1]);
                assemble_face(f, 2);
            }
        if (include_dirichlet)
            for (int f : space.face_sets().dirichlet) {
                eval_face_side(space, f, 0, sides[0]);
                assemble_face(f, 1);
            }
    }
    a.compress();
    return a;
}

SparseMatrix assemble_divergence(const VelocitySpace& vspace, const PressureSpace& pspace) {
    if (&vspace.mesh() != &pspace.mesh())
        throw std::invalid_argument("assemble_divergence: spaces live on different meshes");
    const Mesh2D& mesh = vspace.mesh();
    SparseMatrix b(pspace.n_dofs(), vspace.n_dofs());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = vspace.volume_rule(e);
        const ElementMap map(mesh, e);
        const int lv = vspace.n_local_dofs(e);
        const int lp = pspace.n_local_dofs(e);
        const auto vdofs = vspace.element_dofs(e);
        std::vector<Vec2> basis(lv);
        std::vector<Mat2> grads(lv);
        std::vector<double> divs(lv), pbasis(lp);
        std::vector<double> local(lp * lv, 0.0);
        for (int q = 0; q < vr.size(); ++q) {
            const double wq = vr.weights[q] * map.det_jacobian(vr.points[q]);
            vspace.eval_basis_full(e, vr.points[q], basis, grads, divs);
            pspace.eval_basis(e, vr.points[q], pbasis);
            for (int i = 0; i < lp; ++i)
                for (int j = 0; j < lv; ++j)
                    local[i * lv + j] += wq * pbasis[i] * divs[j];
        }
        for (int i = 0; i < lp; ++i)
            for (int j = 0; j < lv; ++j)
                b.add(pspace.global_dof(e, i), vdofs[j], local[i * lv + j]);
    }
    b.compress();
    return b;
}

std::vector<double> assemble_rhs(const VelocitySpace& space, const FormContext& ctx,
                                 double time) {
    const Mesh2D& mesh = space.mesh();
    const double sigma = ctx.penalty(space.degree());
    const double nu = ctx.viscosity;
    std::vector<double> rhs(space.n_dofs(), 0.0);

    if (ctx.body_force) {
        for (int e = 0; e < mesh.n_elements(); ++e) {
            const QuadratureRule& vr = space.volume_rule(e);
            const ElementMap map(mesh, e);
            const int ld = space.n_local_dofs(e);
            const auto dofs = space.element_dofs(e);
            std::vector<Vec2> basis(ld);
            for (int q = 0; q < vr.size(); ++q) {
                const Vec2 ref = vr.points[q];
                const double wq = vr.weights[q] * map.det_jacobian(ref);
                const Vec2 f = ctx.body_force(map.map(ref), time);
                space.eval_basis(e, ref, basis);
                for (int j = 0; j < ld; ++j) rhs[dofs[j]] += wq * f.dot(basis[j]);
            }
        }
    }

    if (ctx.dirichlet_data) {
        const QuadratureRule& fr = space.face_rule();
        FaceSide side;
        for (int f : space.face_sets().dirichlet) {
            eval_face_side(space, f, 0, side);
            const Vec2 n_f = mesh.face_normals[f];
            const double h_f = mesh.face_sizes[f];
            const Vec2 a = mesh.vertices[mesh.faces[f][0]];
            const Vec2 b = mesh.vertices[mesh.faces[f][1]];
            const int ld = static_cast<int>(side.dofs.size());
            for (int q = 0; q < fr.size(); ++q) {
                const double s = fr.points[q].x;
                const double wq = fr.weights[q] * h_f;
                const Vec2 g = ctx.dirichlet_data(lerp(a, b, s), time);
                for (int j = 0; j < ld; ++j) {
                    // -nu (g (x) n) : grad v  +  nu sigma/h (g (x) n) : (v (x) n)
                    const double consistency = g.dot(side.gradients[q][j] * n_f);
                    const double penalty = (sigma / h_f) * g.dot(side.values[q][j]);
                    rhs[side.dofs[j]] += wq * nu * (penalty - consistency);
                }
            }
        }
    }
    return rhs;
}

SparseMatrix assemble_pressure_mass(const PressureSpace& space) {
    const Mesh2D& mesh = space.mesh();
    SparseMatrix m(space.n_dofs(), space.n_dofs());
    const int deg = 2 * space.degree() + 2;
    const QuadratureRule tri = triangle_rule(deg);
    const QuadratureRule quad = quad_rule(deg);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = mesh.is_triangle(e) ? tri : quad;
        const ElementMap map(mesh, e);
        const int ld = space.n_local_dofs(e);
        std::vector<double> basis(ld);
        std::vector<double> local(ld * ld, 0.0);
        for (int q = 0; q < vr.size(); ++q) {
            const double wq = vr.weights[q] * map.det_jacobian(vr.points[q]);
            space.eval_basis(e, vr.points[q], basis);
            for (int i = 0; i < ld; ++i)
                for (int j = 0; j < ld; ++j)
                    local[i * ld + j] += wq * basis[i] * basis[j];
        }
        for (int i = 0; i < ld; ++i)
            for (int j = 0; j < ld; ++j)
                m.add(space.global_dof(e, i), space.global_dof(e, j), local[i * ld + j]);
    }
    m.compress();
    return m;
}

std::vector<double> assemble_pressure_load(const PressureSpace& space) {
    const Mesh2D& mesh = space.mesh();
    std::vector<double> b(space.n_dofs(), 0.0);
    const QuadratureRule tri = triangle_rule(space.degree() + 1);
    const QuadratureRule quad = quad_rule(space.degree() + 1);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const QuadratureRule& vr = mesh.is_triangle(e) ? tri : quad;
        const ElementMap map(mesh, e);
        const int ld = space.n_local_dofs(e);
        std::vector<double> basis(ld);
        for (int q = 0; q < vr.size(); ++q) {
            const double wq = vr.weights[q] * map.det_jacobian(vr.points[q]);
            space.eval_basis(e, vr.points[q], basis);
            for (int i = 0; i < ld; ++i) b[space.global_dof(e, i)] += wq * basis[i];
        }
    }
    return b;
}

} // namespace statflow
