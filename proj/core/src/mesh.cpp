#include "statflow/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>
#include <stdexcept>

namespace statflow {

namespace {

double polygon_signed_area(const std::vector<Vec2>& v, const std::array<int, 4>& elem) {
    const int n = elem[3] < 0 ? 3 : 4;
    double a = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec2 p = v[elem[i]];
        const Vec2 q = v[elem[(i + 1) % n]];
        a += cross(p, q);
    }
    return 0.5 * a;
}

double element_diameter(const std::vector<Vec2>& v, const std::array<int, 4>& elem) {
    const int n = elem[3] < 0 ? 3 : 4;
    double d = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            d = std::max(d, (v[elem[i]] - v[elem[j]]).norm());
    return d;
}

} // namespace

int Mesh2D::n_boundary_faces() const {
    int n = 0;
    for (int f = 0; f < n_faces(); ++f)
        if (is_boundary_face(f)) ++n;
    return n;
}

Vec2 Mesh2D::centroid(int e) const {
    const int n = element_vertex_count(e);
    Vec2 c{0.0, 0.0};
    for (int i = 0; i < n; ++i) c += vertices[elements[e][i]];
    return c / n;
}

Vec2 Mesh2D::face_midpoint(int f) const {
    return (vertices[faces[f][0]] + vertices[faces[f][1]]) * 0.5;
}

double Mesh2D::total_area() const {
    double a = 0.0;
    for (double ea : element_areas) a += ea;
    return a;
}

Mesh2D build_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 4>> elements) {
    Mesh2D mesh;
    mesh.vertices = std::move(vertices);
    mesh.elements = std::move(elements);

    const int nv = mesh.n_vertices();
    for (auto& elem : mesh.elements) {
        const int n = elem[3] < 0 ? 3 : 4;
        for (int i = 0; i < n; ++i)
            if (elem[i] < 0 || elem[i] >= nv)
                throw std::invalid_argument("build_mesh: vertex index out of range");
        if (polygon_signed_area(mesh.vertices, elem) < 0.0) {
            if (n == 3) std::swap(elem[1], elem[2]);
            else std::swap(elem[1], elem[3]);
        }
    }

    mesh.element_areas.resize(mesh.n_elements());
    mesh.element_faces.assign(mesh.n_elements(), {-1, -1, -1, -1});
    mesh.mesh_size = 0.0;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const double area = polygon_signed_area(mesh.vertices, mesh.elements[e]);
        if (!(area > 0.0))
            throw std::invalid_argument("build_mesh: element " + std::to_string(e) +
                                        " has nonpositive area");
        mesh.element_areas[e] = area;
        mesh.mesh_size = std::max(mesh.mesh_size, element_diameter(mesh.vertices, mesh.elements[e]));
    }

    std::map<std::array<int, 2>, int> face_of;
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const int n = mesh.element_vertex_count(e);
        for (int le = 0; le < n; ++le) {
            const int a = mesh.elements[e][le];
            const int b = mesh.elements[e][(le + 1) % n];
            const std::array<int, 2> key{std::min(a, b), std::max(a, b)};
            auto [it, inserted] = face_of.try_emplace(key, mesh.n_faces());
            const int f = it->second;
            if (inserted) {
                mesh.faces.push_back(key);
                const Vec2 pa = mesh.vertices[a], pb = mesh.vertices[b];
                const Vec2 d = pb - pa;
                const double len = d.norm();
                if (!(len > 0.0))
                    throw std::invalid_argument("build_mesh: zero-length face");
                mesh.face_sizes.push_back(len);
                // Outward normal of the inserting element (CCW edge a->b).
                mesh.face_normals.push_back({d.y / len, -d.x / len});
                mesh.face_adjacency.push_back({e, -1});
                mesh.face_sides.push_back({Mesh2D::FaceSide{le, a != key[0]},
                                           Mesh2D::FaceSide{}});
            } else {
                auto& adj = mesh.face_adjacency[f];
                if (adj[1] >= 0)
                    throw std::invalid_argument(
                        "build_mesh: face shared by more than two elements (hanging node?)");
                adj[1] = e;
                mesh.face_sides[f][1] = Mesh2D::FaceSide{le, a != mesh.faces[f][0]};
            }
            mesh.element_faces[e][le] = f;
        }
    }
    return mesh;
}

Mesh2D generate_uniform_quad_mesh(int nx, int ny, const Rect& domain) {
    if (nx < 1 || ny < 1)
        throw std::invalid_argument("generate_uniform_quad_mesh: nx, ny must be >= 1");
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
        throw std::invalid_argument("generate_uniform_quad_mesh: empty domain");

    std::vector<Vec2> vertices;
    vertices.reserve((nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            vertices.push_back({domain.lo.x + domain.width() * i / nx,
                                domain.lo.y + domain.height() * j / ny});

    auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
    std::vector<std::array<int, 4>> elements;
    elements.reserve(nx * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            elements.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)});
    return build_mesh(std::move(vertices), std::move(elements));
}

Mesh2D generate_structured_tri_mesh(int nx, int ny, const Rect& domain,
                                    const std::vector<double>* y_nodes) {
    if (nx < 1 || ny < 1)
        throw std::invalid_argument("generate_structured_tri_mesh: nx, ny must be >= 1");
    if (!(domain.width() > 0.0) || !(domain.height() > 0.0))
        throw std::invalid_argument("generate_structured_tri_mesh: empty domain");
    if (y_nodes && static_cast<int>(y_nodes->size()) != ny + 1)
        throw std::invalid_argument("generate_structured_tri_mesh: y_nodes size must be ny+1");

    std::vector<Vec2> vertices;
    vertices.reserve((nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j) {
        const double y = y_nodes ? (*y_nodes)[j]
                                 : domain.lo.y + domain.height() * j / ny;
        for (int i = 0; i <= nx; ++i)
            vertices.push_back({domain.lo.x + domain.width() * i / nx, y});
    }

    auto vid = [nx](int i, int j) { return j * (nx + 1) + i; };
    std::vector<std::array<int, 4>> elements;
    elements.reserve(2 * nx * ny);
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            elements.push_back({vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), -1});
            elements.push_back({vid(i, j), vid(i + 1, j + 1), vid(i, j + 1), -1});
        }
    return build_mesh(std::move(vertices), std::move(elements));
}

Mesh2D uniform_refine(const Mesh2D& mesh) {
    std::vector<Vec2> vertices = mesh.vertices;
    std::map<std::array<int, 2>, int> midpoint_of;
    auto midpoint = [&](int a, int b) {
        const std::array<int, 2> key{std::min(a, b), std::max(a, b)};
        auto [it, inserted] = midpoint_of.try_emplace(key, static_cast<int>(vertices.size()));
        if (inserted) vertices.push_back((mesh.vertices[a] + mesh.vertices[b]) * 0.5);
        return it->second;
    };

    std::vector<std::array<int, 4>> elements;
    elements.reserve(4 * mesh.n_elements());
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& el = mesh.elements[e];
        if (mesh.is_triangle(e)) {
            const int m01 = midpoint(el[0], el[1]);
            const int m12 = midpoint(el[1], el[2]);
            const int m20 = midpoint(el[2], el[0]);
            elements.push_back({el[0], m01, m20, -1});
            elements.push_back({m01, el[1], m12, -1});
            elements.push_back({m20, m12, el[2], -1});
            elements.push_back({m01, m12, m20, -1});
        } else {
            const int m01 = midpoint(el[0], el[1]);
            const int m12 = midpoint(el[1], el[2]);
            const int m23 = midpoint(el[2], el[3]);
            const int m30 = midpoint(el[3], el[0]);
            const int c = static_cast<int>(vertices.size());
            vertices.push_back((mesh.vertices[el[0]] + mesh.vertices[el[1]] +
                                mesh.vertices[el[2]] + mesh.vertices[el[3]]) * 0.25);
            elements.push_back({el[0], m01, c, m30});
            elements.push_back({m01, el[1], m12, c});
            elements.push_back({c, m12, el[2], m23});
            elements.push_back({m30, c, m23, el[3]});
        }
    }
    return build_mesh(std::move(vertices), std::move(elements));
}

BoundarySpec BoundarySpec::all_dirichlet(const Rect& rect) {
    BoundarySpec spec{rect, {}};
    for (Side s : {Side::left, Side::right, Side::bottom, Side::top}) {
        const bool horizontal = (s == Side::bottom || s == Side::top);
        const double lo = horizontal ? rect.lo.x : rect.lo.y;
        const double hi = horizontal ? rect.hi.x : rect.hi.y;
        spec.segments.push_back({s, lo, hi, BoundaryCondition::dirichlet});
    }
    return spec;
}

BoundarySpec BoundarySpec::with_outflow_side(const Rect& rect, Side outflow) {
    BoundarySpec spec = all_dirichlet(rect);
    for (auto& seg : spec.segments)
        if (seg.side == outflow) seg.bc = BoundaryCondition::outflow;
    return spec;
}

FaceSets classify_faces(const Mesh2D& mesh, const BoundarySpec& spec) {
    constexpr double tol = 1e-10;
    FaceSets sets;
    sets.face_class.assign(mesh.n_faces(), FaceSets::kInterior);

    for (int f = 0; f < mesh.n_faces(); ++f) {
        if (!mesh.is_boundary_face(f)) {
            sets.interior.push_back(f);
            continue;
        }
        const Vec2 mid = mesh.face_midpoint(f);
        int matches = 0;
        BoundaryCondition bc = BoundaryCondition::dirichlet;
        for (const auto& seg : spec.segments) {
            double side_coord, run_coord;
            switch (seg.side) {
                case Side::left:   side_coord = mid.x - spec.rect.lo.x; run_coord = mid.y; break;
                case Side::right:  side_coord = mid.x - spec.rect.hi.x; run_coord = mid.y; break;
                case Side::bottom: side_coord = mid.y - spec.rect.lo.y; run_coord = mid.x; break;
                case Side::top:    side_coord = mid.y - spec.rect.hi.y; run_coord = mid.x; break;
                default: continue;
            }
            if (std::abs(side_coord) > tol) continue;
            if (run_coord < seg.lo - tol || run_coord >= seg.hi - tol) continue;
            ++matches;
            bc = seg.bc;
        }
        if (matches != 1) {
            std::ostringstream msg;
            msg << "classify_faces: boundary face midpoint (" << mid.x << ", " << mid.y
                << ") matched by " << matches << " segment rules (need exactly 1)";
            throw std::invalid_argument(msg.str());
        }
        if (bc == BoundaryCondition::dirichlet) {
            sets.dirichlet.push_back(f);
            sets.face_class[f] = FaceSets::kDirichlet;
        } else {
            sets.outflow.push_back(f);
            sets.face_class[f] = FaceSets::kOutflow;
        }
    }
    return sets;
}

Vec2 face_average(Vec2 w_k1, Vec2 w_k2) { return (w_k1 + w_k2) * 0.5; }
Vec2 face_average(Vec2 w_k) { return w_k; }
Mat2 face_average(const Mat2& tau_k1, const Mat2& tau_k2) { return (tau_k1 + tau_k2) * 0.5; }
Mat2 face_average(const Mat2& tau_k) { return tau_k; }

double jump_dot_n(Vec2 w_k1, Vec2 w_k2, Vec2 n_f) { return (w_k1 - w_k2).dot(n_f); }
double jump_dot_n(Vec2 w_k, Vec2 n_k) { return w_k.dot(n_k); }

Mat2 jump_tensor_n(Vec2 w_k1, Vec2 w_k2, Vec2 n_f) { return Mat2::outer(w_k1 - w_k2, n_f); }
Mat2 jump_tensor_n(Vec2 w_k, Vec2 n_k) { return Mat2::outer(w_k, n_k); }

Vec2 bracket_jump(Vec2 w_k1, Vec2 w_k2) { return w_k1 - w_k2; }

std::uint64_t mesh_checksum(const Mesh2D& mesh) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xffULL;
            h *= 1099511628211ULL;
        }
    };
    auto mix_double = [&](double d) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        mix(bits);
    };
    mix(static_cast<std::uint64_t>(mesh.n_vertices()));
    mix(static_cast<std::uint64_t>(mesh.n_elements()));
    for (const Vec2& v : mesh.vertices) {
        mix_double(v.x);
        mix_double(v.y);
    }
    for (const auto& el : mesh.elements)
        for (int i = 0; i < 4; ++i)
            mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(el[i])));
    return h;
}

ElementMap::ElementMap(const Mesh2D& mesh, int element) {
    triangle_ = mesh.is_triangle(element);
    const auto& el = mesh.elements[element];
    const Vec2 v0 = mesh.vertices[el[0]];
    const Vec2 v1 = mesh.vertices[el[1]];
    const Vec2 v2 = mesh.vertices[el[2]];
    if (triangle_) {
        a_ = v0;
        b_ = v1 - v0;
        c_ = v2 - v0;
        m_ = {0.0, 0.0};
    } else {
        const Vec2 v3 = mesh.vertices[el[3]];
        a_ = v0;
        b_ = v1 - v0;
        c_ = v3 - v0;
        m_ = v0 - v1 + v2 - v3;
    }
}

Vec2 ElementMap::map(Vec2 r) const {
    return a_ + b_ * r.x + c_ * r.y + m_ * (r.x * r.y);
}

Mat2 ElementMap::jacobian(Vec2 r) const {
    return Mat2::from_columns(b_ + m_ * r.y, c_ + m_ * r.x);
}

Vec2 ElementMap::inverse_map(Vec2 phys) const {
    Vec2 r = triangle_ ? Vec2{1.0 / 3.0, 1.0 / 3.0} : Vec2{0.5, 0.5};
    for (int iter = 0; iter < 25; ++iter) {
        const Vec2 residual = phys - map(r);
        const Vec2 dr = jacobian(r).inverse() * residual;
        r += dr;
        if (dr.norm() < 1e-14) break;
        if (triangle_) break; // affine: one Newton step is exact
    }
    return r;
}

Vec2 ElementMap::reference_vertex(bool triangle, int i) {
    static constexpr Vec2 tri[3] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    static constexpr Vec2 quad[4] = {{0.0, 0.0}, {1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
    return triangle ? tri[i] : quad[i];
}

Vec2 ElementMap::edge_point(int edge, double t) const {
    const int n = edge_count(triangle_);
    const Vec2 pa = reference_vertex(triangle_, edge);
    const Vec2 pb = reference_vertex(triangle_, (edge + 1) % n);
    return lerp(pa, pb, t);
}

} // namespace statflow
