#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

#include "statflow/config.hpp"
#include "statflow/spaces.hpp"

#include <cmath>

using namespace statflow;
using statflow::test::Rng;

namespace {

FaceSets all_dirichlet_sets(const Mesh2D& mesh, const Rect& rect) {
    return classify_faces(mesh, BoundarySpec::all_dirichlet(rect));
}

FaceSets manual_all_dirichlet(const Mesh2D& mesh) {
    FaceSets sets;
    sets.face_class.assign(mesh.n_faces(), FaceSets::kInterior);
    for (int f = 0; f < mesh.n_faces(); ++f) {
        if (mesh.is_boundary_face(f)) {
            sets.face_class[f] = FaceSets::kDirichlet;
            sets.dirichlet.push_back(f);
        } else {
            sets.interior.push_back(f);
        }
    }
    return sets;
}

FieldCoefficients random_field(const VelocitySpace& space, Rng& rng) {
    FieldCoefficients f = make_velocity_field(space);
    for (double& v : f.values) v = rng.uniform(-1.0, 1.0);
    return f;
}

} // namespace

TEST_CASE("RT_0 local dimensions: triangle 3, quadrilateral 4") {
    const Mesh2D tri = test::two_triangle_square();
    const VelocitySpace vt(tri, 0, all_dirichlet_sets(tri, Rect::unit_square()));
    CHECK(vt.n_local_dofs(0) == 3);

    const Mesh2D quad = generate_uniform_quad_mesh(1, 1, Rect::unit_square());
    const VelocitySpace vq(quad, 0, all_dirichlet_sets(quad, Rect::unit_square()));
    CHECK(vq.n_local_dofs(0) == 4);
}

TEST_CASE("RT_1 local dimensions: triangle 8, quadrilateral 12") {
    const Mesh2D tri = test::two_triangle_square();
    const VelocitySpace vt(tri, 1, all_dirichlet_sets(tri, Rect::unit_square()));
    CHECK(vt.n_local_dofs(0) == 8);

    const Mesh2D quad = generate_uniform_quad_mesh(2, 2, Rect::unit_square());
    const VelocitySpace vq(quad, 1, all_dirichlet_sets(quad, Rect::unit_square()));
    CHECK(vq.n_local_dofs(0) == 12);
}

TEST_CASE("two-triangle square, k=0, all-Dirichlet: one free DOF") {
    const Mesh2D mesh = test::two_triangle_square();
    const VelocitySpace space(mesh, 0, all_dirichlet_sets(mesh, Rect::unit_square()));
    CHECK(space.n_dofs() == 5);
    CHECK(space.n_free_dofs() == 1);
}

TEST_CASE("global dimension counting with outflow faces free") {
    const Rect domain{{0.0, 0.0}, {1.5, 0.5}};
    const Mesh2D mesh = generate_uniform_quad_mesh(6, 2, domain);
    const FaceSets sets = classify_faces(mesh, BoundarySpec::with_outflow_side(domain, Side::right));
    const VelocitySpace space(mesh, 1, sets);
    const int k = 1;
    const int face_dofs = mesh.n_faces() * (k + 1);
    const int interior_dofs = mesh.n_elements() * 4;
    CHECK(space.n_dofs() == face_dofs + interior_dofs);
    const int dirichlet_faces = static_cast<int>(sets.dirichlet.size());
    CHECK(space.n_free_dofs() == space.n_dofs() - dirichlet_faces * (k + 1));
    CHECK(static_cast<int>(space.dirichlet_dofs().size()) == dirichlet_faces * (k + 1));
}

TEST_CASE("unsupported degree is rejected") {
    const Mesh2D mesh = test::two_triangle_square();
    CHECK_THROWS_AS(VelocitySpace(mesh, 2, all_dirichlet_sets(mesh, Rect::unit_square())),
                    std::invalid_argument);
    CHECK_THROWS_AS(PressureSpace(mesh, 3), std::invalid_argument);
}

TEST_CASE("piola transform: identity and uniform scaling") {
    const Mesh2D unit = generate_uniform_quad_mesh(1, 1, Rect::unit_square());
    const ElementMap id_map(unit, 0);
    const Vec2 v{0.3, -0.7};
    const Vec2 same = piola_transform(id_map, Vec2{0.25, 0.5}, v);
    CHECK(same.x == doctest::Approx(v.x).epsilon(1e-14));
    CHECK(same.y == doctest::Approx(v.y).epsilon(1e-14));

    // Uniform scaling by s: J = s I, det = s^2, so v -> v / s.
    const double s = 2.5;
    const Mesh2D scaled = generate_uniform_quad_mesh(1, 1, Rect{{0, 0}, {s, s}});
    const ElementMap s_map(scaled, 0);
    const Vec2 mapped = piola_transform(s_map, Vec2{0.25, 0.5}, v);
    CHECK(mapped.x == doctest::Approx(v.x / s).epsilon(1e-14));
    CHECK(mapped.y == doctest::Approx(v.y / s).epsilon(1e-14));

    // Degenerate (zero-area) element: inverted quad -> geometry error.
    CHECK_THROWS_AS(build_mesh({{0, 0}, {1, 0}, {1, 0}, {0, 0}}, {{0, 1, 2, 3}}),
                    std::invalid_argument);
}

TEST_CASE("piola divergence matches a finite difference on an affine triangle") {
    const Mesh2D mesh = build_mesh({{0.2, 0.1}, {1.3, 0.3}, {0.4, 1.2}}, {{0, 1, 2, -1}});
    const VelocitySpace space(mesh, 1, manual_all_dirichlet(mesh));

    Rng rng(3);
    FieldCoefficients field = random_field(space, rng);
    const ElementMap map(mesh, 0);
    const Vec2 ref{0.3, 0.25};
    const double div_analytic = eval_velocity_divergence(field, 0, ref);

    const double h = 1e-6;
    const Vec2 x = map.map(ref);
    auto at = [&](Vec2 p) { return eval_velocity(field, 0, map.inverse_map(p)); };
    const double div_fd = (at({x.x + h, x.y}).x - at({x.x - h, x.y}).x) / (2 * h) +
                          (at({x.x, x.y + h}).y - at({x.x, x.y - h}).y) / (2 * h);
    CHECK(div_analytic == doctest::Approx(div_fd).epsilon(1e-5));
}

TEST_CASE("gradient evaluation matches finite differences on a non-affine quad") {
    const Mesh2D mesh = build_mesh({{0, 0}, {1.1, 0.1}, {1.3, 0.9}, {-0.1, 1.0}}, {{0, 1, 2, 3}});
    const VelocitySpace space(mesh, 1, manual_all_dirichlet(mesh));

    Rng rng(17);
    FieldCoefficients field = random_field(space, rng);
    const ElementMap map(mesh, 0);
    const Vec2 ref{0.4, 0.6};
    const Mat2 g = eval_velocity_gradient(field, 0, ref);

    const double h = 1e-6;
    const Vec2 x = map.map(ref);
    auto at = [&](double dx, double dy) {
        return eval_velocity(field, 0, map.inverse_map({x.x + dx, x.y + dy}));
    };
    const Vec2 ddx = (at(h, 0) - at(-h, 0)) / (2 * h);
    const Vec2 ddy = (at(0, h) - at(0, -h)) / (2 * h);
    CHECK(g.m[0][0] == doctest::Approx(ddx.x).epsilon(1e-5));
    CHECK(g.m[1][0] == doctest::Approx(ddx.y).epsilon(1e-5));
    CHECK(g.m[0][1] == doctest::Approx(ddy.x).epsilon(1e-5));
    CHECK(g.m[1][1] == doctest::Approx(ddy.y).epsilon(1e-5));
}

TEST_CASE("normal continuity across interior faces (both element kinds, k=0,1)") {
    for (int k : {0, 1}) {
        for (bool tri : {false, true}) {
            const Mesh2D mesh = tri ? generate_structured_tri_mesh(3, 3, Rect::unit_square())
                                    : generate_uniform_quad_mesh(3, 3, Rect::unit_square());
            const VelocitySpace space(mesh, k, all_dirichlet_sets(mesh, Rect::unit_square()));
            Rng rng(5 + k);
            const FieldCoefficients field = random_field(space, rng);
            const double coeff_norm = norm2(field.values);

            double worst = 0.0;
            const QuadratureRule& fr = space.face_rule();
            for (int f = 0; f < mesh.n_faces(); ++f) {
                if (mesh.is_boundary_face(f)) continue;
                const Vec2 n = mesh.face_normals[f];
                for (int q = 0; q < fr.size(); ++q) {
                    const double s = fr.points[q].x;
                    Vec2 traces[2];
                    for (int side = 0; side < 2; ++side) {
                        const int e = mesh.face_adjacency[f][side];
                        const auto fs = mesh.face_sides[f][side];
                        const ElementMap map(mesh, e);
                        const double t = fs.reversed ? 1.0 - s : s;
                        traces[side] = eval_velocity(field, e, map.edge_point(fs.local_edge, t));
                    }
                    worst = std::max(worst, std::abs((traces[0] - traces[1]).dot(n)));
                }
            }
            CAPTURE(k);
            CAPTURE(tri);
            CHECK(worst <= 1e-10 * coeff_norm);
        }
    }
}

TEST_CASE("divergence compatibility: basis divergences lie in the pressure space") {
    for (int k : {0, 1}) {
        for (bool tri : {false, true}) {
            const Mesh2D mesh = tri ? generate_structured_tri_mesh(2, 2, Rect::unit_square())
                                    : generate_uniform_quad_mesh(2, 2, Rect::unit_square());
            const VelocitySpace vspace(mesh, k, all_dirichlet_sets(mesh, Rect::unit_square()));
            const PressureSpace pspace(mesh, k);
            for (int e = 0; e < mesh.n_elements(); ++e) {
                const QuadratureRule& vr = vspace.volume_rule(e);
                const ElementMap map(mesh, e);
                const int lv = vspace.n_local_dofs(e);
                const int lp = pspace.n_local_dofs(e);
                std::vector<Vec2> vals(lv);
                std::vector<Mat2> grads(lv);
                std::vector<double> divs(lv), pb(lp);

                Eigen::MatrixXd mass = Eigen::MatrixXd::Zero(lp, lp);
                Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(lp, lv);
                for (int q = 0; q < vr.size(); ++q) {
                    const double w = vr.weights[q] * map.det_jacobian(vr.points[q]);
                    vspace.eval_basis_full(e, vr.points[q], vals, grads, divs);
                    pspace.eval_basis(e, vr.points[q], pb);
                    for (int i = 0; i < lp; ++i) {
                        for (int j = 0; j < lp; ++j) mass(i, j) += w * pb[i] * pb[j];
                        for (int j = 0; j < lv; ++j) rhs(i, j) += w * pb[i] * divs[j];
                    }
                }
                const Eigen::MatrixXd coef = mass.ldlt().solve(rhs);
                for (int q = 0; q < vr.size(); ++q) {
                    vspace.eval_basis_full(e, vr.points[q], vals, grads, divs);
                    pspace.eval_basis(e, vr.points[q], pb);
                    for (int j = 0; j < lv; ++j) {
                        double proj = 0.0;
                        for (int i = 0; i < lp; ++i) proj += coef(i, j) * pb[i];
                        CHECK(std::abs(proj - divs[j]) < 1e-12);
                    }
                }
            }
        }
    }
}

TEST_CASE("quadrature exactness: basis products integrate exactly") {
    for (bool tri : {false, true}) {
        const Mesh2D mesh = tri ? generate_structured_tri_mesh(2, 1, Rect::unit_square())
                                : generate_uniform_quad_mesh(2, 1, Rect::unit_square());
        const VelocitySpace space(mesh, 1, all_dirichlet_sets(mesh, Rect::unit_square()));
        const QuadratureRule reference = tri ? triangle_rule(9) : quad_rule(9);
        for (int e = 0; e < mesh.n_elements(); ++e) {
            const QuadratureRule& vr = space.volume_rule(e);
            const ElementMap map(mesh, e);
            const int ld = space.n_local_dofs(e);
            std::vector<Vec2> basis(ld);
            std::vector<double> with_space(ld, 0.0), with_ref(ld, 0.0);
            for (int q = 0; q < vr.size(); ++q) {
                const double w = vr.weights[q] * map.det_jacobian(vr.points[q]);
                space.eval_basis(e, vr.points[q], basis);
                for (int j = 0; j < ld; ++j) with_space[j] += w * basis[0].dot(basis[j]);
            }
            for (int q = 0; q < reference.size(); ++q) {
                const double w = reference.weights[q] * map.det_jacobian(reference.points[q]);
                space.eval_basis(e, reference.points[q], basis);
                for (int j = 0; j < ld; ++j) with_ref[j] += w * basis[0].dot(basis[j]);
            }
            for (int j = 0; j < ld; ++j)
                CHECK(std::abs(with_space[j] - with_ref[j]) < 1e-13);
        }
    }
}

TEST_CASE("l2 projection: zero field and idempotence") {
    const Mesh2D mesh = generate_uniform_quad_mesh(3, 3, Rect::unit_square());
    const VelocitySpace space(mesh, 1, all_dirichlet_sets(mesh, Rect::unit_square()));

    const FieldCoefficients zero =
        l2_project_velocity([](Vec2) { return Vec2{0.0, 0.0}; }, space);
    CHECK(norm2(zero.values) == doctest::Approx(0.0).epsilon(1e-14));

    // Projecting a field already in the space reproduces its coefficients.
    Rng rng(23);
    FieldCoefficients member = make_velocity_field(space);
    for (int dof : space.free_dofs()) member.values[dof] = rng.uniform(-1.0, 1.0);
    const PointLocator locator(mesh);
    const FieldCoefficients again = l2_project_velocity(
        [&](Vec2 x) { return eval_velocity_at(member, locator, x); }, space);
    double worst = 0.0;
    for (int i = 0; i < member.size(); ++i)
        worst = std::max(worst, std::abs(member.values[i] - again.values[i]));
    CHECK(worst <= 1e-10 * (1.0 + norm2(member.values)));
}

TEST_CASE("l2 projection: rotation-field error decays at least linearly in h") {
    // The rotation field has nonzero boundary flux, so the constrained DOFs
    // carry its own face moments (as the channel inflow does).
    const VectorField u0 = [](Vec2 x) { return Vec2{x.y - 0.5, -(x.x - 0.5)}; };
    std::vector<double> hs, errs;
    for (int n : {4, 8, 16}) {
        const Mesh2D mesh = generate_uniform_quad_mesh(n, n, Rect::unit_square());
        const VelocitySpace space(mesh, 0, all_dirichlet_sets(mesh, Rect::unit_square()));
        const auto essential = essential_dof_values(space, u0);
        const FieldCoefficients proj = l2_project_velocity(u0, space, essential);
        hs.push_back(mesh.mesh_size);
        errs.push_back(l2_error_velocity(proj, u0));
    }
    CHECK(errs[1] < errs[0]);
    CHECK(errs[2] < errs[1]);
    CHECK(fit_slope(hs, errs) >= 0.9);
}

TEST_CASE("evaluate_field: basis reproduction and two evaluation paths agree") {
    const Mesh2D mesh = test::two_triangle_square();
    const VelocitySpace space(mesh, 1, all_dirichlet_sets(mesh, Rect::unit_square()));

    FieldCoefficients zero = make_velocity_field(space);
    CHECK(eval_velocity(zero, 0, Vec2{0.3, 0.3}).norm() == 0.0);

    const int ld = space.n_local_dofs(0);
    std::vector<Vec2> basis(ld);
    const Vec2 ref{0.2, 0.5};
    space.eval_basis(0, ref, basis);
    for (int j = 0; j < ld; ++j) {
        FieldCoefficients unit = make_velocity_field(space);
        unit.values[space.element_dofs(0)[j]] = 1.0;
        const Vec2 v = eval_velocity(unit, 0, ref);
        CHECK(std::abs(v.x - basis[j].x) < 1e-13);
        CHECK(std::abs(v.y - basis[j].y) < 1e-13);
    }

    Rng rng(31);
    const FieldCoefficients field = random_field(space, rng);
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const Vec2 r{0.25, 0.35};
        const Vec2 direct = eval_velocity(field, e, r);
        std::vector<Vec2> b(space.n_local_dofs(e));
        space.eval_basis(e, r, b);
        Vec2 summed{0.0, 0.0};
        for (int j = 0; j < space.n_local_dofs(e); ++j)
            summed += b[j] * field.values[space.element_dofs(e)[j]];
        CHECK(std::abs(direct.x - summed.x) < 1e-13);
        CHECK(std::abs(direct.y - summed.y) < 1e-13);
    }
    CHECK_THROWS_AS(eval_velocity(field, 99, Vec2{0.1, 0.1}), std::out_of_range);
}

TEST_CASE("essential values realize g.n face moments") {
    const Rect domain{{0.0, 0.0}, {1.5, 0.5}};
    const Mesh2D mesh = generate_uniform_quad_mesh(6, 2, domain);
    const FaceSets sets = classify_faces(mesh, BoundarySpec::with_outflow_side(domain, Side::right));
    const VelocitySpace space(mesh, 1, sets);
    const VectorField g = [](Vec2 x) { return Vec2{x.y * (0.5 - x.y), 0.0}; };
    const auto essential = essential_dof_values(space, g);
    for (int f : sets.dirichlet) {
        const double moment = essential[space.face_dof(f, 0)];
        if (mesh.face_midpoint(f).x < 1e-12)
            CHECK(std::abs(moment) > 1e-6); // inflow carries g.n != 0
        else
            CHECK(std::abs(moment) < 1e-14); // walls: g.n = 0
    }
    for (int dof : space.free_dofs()) CHECK(essential[dof] == 0.0);
}

TEST_CASE("point locator finds elements on quad and tri meshes") {
    for (bool tri : {false, true}) {
        const Mesh2D mesh = tri ? generate_structured_tri_mesh(5, 4, Rect::unit_square())
                                : generate_uniform_quad_mesh(5, 4, Rect::unit_square());
        const PointLocator locator(mesh);
        Rng rng(41);
        for (int i = 0; i < 200; ++i) {
            const Vec2 x{rng.uniform(0.001, 0.999), rng.uniform(0.001, 0.999)};
            const auto loc = locator.locate(x);
            const ElementMap map(mesh, loc.element);
            const Vec2 back = map.map(loc.ref);
            CHECK((back - x).norm() < 1e-9);
        }
        CHECK_FALSE(locator.try_locate({2.0, 2.0}).has_value());
        CHECK_THROWS_AS(locator.locate({-1.0, 0.5}), std::invalid_argument);
    }
}

TEST_CASE("pressure space: discontinuous block layout") {
    const Mesh2D mesh = generate_uniform_quad_mesh(2, 2, Rect::unit_square());
    const PressureSpace p0(mesh, 0);
    CHECK(p0.n_dofs() == 4);
    const PressureSpace p1(mesh, 1);
    CHECK(p1.n_local_dofs(0) == 4); // tensor Q_{1,1} on quads
    CHECK(p1.n_dofs() == 16);
    const Mesh2D tri = test::two_triangle_square();
    const PressureSpace pt(tri, 1);
    CHECK(pt.n_local_dofs(0) == 3); // P_1 on triangles
    CHECK(pt.n_dofs() == 6);
    CHECK(p1.global_dof(1, 0) == p1.n_local_dofs(0));
}
