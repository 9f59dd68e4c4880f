#pragma once

#include "statflow/geometry.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace statflow {

/// Conforming 2D mesh of triangles and/or quadrilaterals.
///
/// Faces are undirected vertex pairs stored as (vmin, vmax). Each face has an
/// orientation convention: K1 is the adjacent element with the smaller element
/// index and the face normal points out of K1. Boundary faces have K2 == -1
/// and the normal points out of the domain. The mesh is immutable after
/// construction and safe to share read-only across threads.
class Mesh2D {
public:
    /// One adjacent element's view of a face.
    struct FaceSide {
        int local_edge = -1; ///< local edge index within the element
        bool reversed = false; ///< true if the element's CCW edge runs vmax -> vmin
    };

    std::vector<Vec2> vertices;
    /// Vertex indices, CCW; elements[e][3] == -1 for triangles.
    std::vector<std::array<int, 4>> elements;
    std::vector<double> element_areas;
    std::vector<std::array<int, 2>> faces;           ///< (vmin, vmax)
    std::vector<double> face_sizes;                  ///< h_F, segment length
    std::vector<Vec2> face_normals;                  ///< unit, out of K1
    std::vector<std::array<int, 2>> face_adjacency;  ///< (K1, K2), K2 == -1 on boundary
    std::vector<std::array<FaceSide, 2>> face_sides; ///< per adjacency slot
    /// Faces of each element in local edge order.
    std::vector<std::array<int, 4>> element_faces;
    double mesh_size = 0.0; ///< max element diameter

    int n_vertices() const { return static_cast<int>(vertices.size()); }
    int n_elements() const { return static_cast<int>(elements.size()); }
    int n_faces() const { return static_cast<int>(faces.size()); }
    bool is_triangle(int e) const { return elements[e][3] < 0; }
    int element_vertex_count(int e) const { return is_triangle(e) ? 3 : 4; }
    bool is_boundary_face(int f) const { return face_adjacency[f][1] < 0; }
    int n_boundary_faces() const;
    Vec2 vertex(int v) const { return vertices[v]; }
    Vec2 centroid(int e) const;
    Vec2 face_midpoint(int f) const;
    double total_area() const;
};

/// Builds connectivity and geometric quantities from vertices + elements and
/// verifies the mesh invariants (positive areas, no hanging nodes, at most two
/// elements per face). Elements with negative signed area are reoriented.
Mesh2D build_mesh(std::vector<Vec2> vertices, std::vector<std::array<int, 4>> elements);

/// nx-by-ny congruent axis-aligned quadrilaterals covering `domain`.
Mesh2D generate_uniform_quad_mesh(int nx, int ny, const Rect& domain);

/// Structured triangular mesh: nx-by-ny cells split along one diagonal.
/// Optional y_nodes overrides the vertical grid lines (size ny+1, ascending,
/// spanning [domain.lo.y, domain.hi.y]) for wall-graded channel meshes.
Mesh2D generate_structured_tri_mesh(int nx, int ny, const Rect& domain,
                                    const std::vector<double>* y_nodes = nullptr);

/// Conforming uniform refinement: every triangle/quadrilateral is split into
/// four children through edge midpoints (quadrilaterals also use the vertex
/// centroid). Child areas sum to the parent area.
Mesh2D uniform_refine(const Mesh2D& mesh);

enum class BoundaryCondition { dirichlet, outflow };

enum class Side { left, right, bottom, top };

/// Half-open interval [lo, hi) along one side of an axis-aligned rectangle,
/// in the side's running coordinate (x for bottom/top, y for left/right).
struct BoundarySegment {
    Side side;
    double lo;
    double hi;
    BoundaryCondition bc;
};

/// Geometric boundary classification rules for a rectangular domain. Segment
/// endpoints should align with geometric corners or mesh lines so that
/// uniform refinement preserves the classification.
struct BoundarySpec {
    Rect rect;
    std::vector<BoundarySegment> segments;

    static BoundarySpec all_dirichlet(const Rect& rect);
    /// Whole-side rules: one side outflow, the other three Dirichlet.
    static BoundarySpec with_outflow_side(const Rect& rect, Side outflow);
};

/// Disjoint split of the face set: interior, Dirichlet boundary, outflow
/// boundary. dirichlet and outflow together cover all boundary faces.
struct FaceSets {
    std::vector<int> interior;
    std::vector<int> dirichlet;
    std::vector<int> outflow;
    /// Per-face class for O(1) lookup.
    enum : char { kInterior = 0, kDirichlet = 1, kOutflow = 2 };
    std::vector<char> face_class;

    bool is_dirichlet(int f) const { return face_class[f] == kDirichlet; }
    bool is_outflow(int f) const { return face_class[f] == kOutflow; }
};

/// Classifies every face against the boundary spec by its midpoint (tolerance
/// 1e-10). Throws if a boundary face is matched by zero or multiple segment
/// rules, naming the face midpoint.
FaceSets classify_faces(const Mesh2D& mesh, const BoundarySpec& spec);

// Face averages and jumps. The two-trace overloads are for interior faces
// (trace 1 from K1, the element defining n_F); the one-trace overloads are the
// boundary-face convention.
Vec2 face_average(Vec2 w_k1, Vec2 w_k2);
Vec2 face_average(Vec2 w_k);
Mat2 face_average(const Mat2& tau_k1, const Mat2& tau_k2);
Mat2 face_average(const Mat2& tau_k);
/// [[w . n]] = w|K1 . n_F - w|K2 . n_F on interior faces, w|K . n on boundary.
double jump_dot_n(Vec2 w_k1, Vec2 w_k2, Vec2 n_f);
double jump_dot_n(Vec2 w_k, Vec2 n_k);
/// [[w (x) n]] = (w|K1 - w|K2) (x) n_F on interior faces, w|K (x) n on boundary.
Mat2 jump_tensor_n(Vec2 w_k1, Vec2 w_k2, Vec2 n_f);
Mat2 jump_tensor_n(Vec2 w_k, Vec2 n_k);
/// [[w]] = w|K1 - w|K2. Interior faces only.
Vec2 bracket_jump(Vec2 w_k1, Vec2 w_k2);

/// FNV-1a over vertex coordinates and element connectivity; used to pair
/// stored fields with the mesh they were computed on.
std::uint64_t mesh_checksum(const Mesh2D& mesh);

/// Reference-to-physical element map (affine for triangles, bilinear for
/// quadrilaterals). Reference elements: unit triangle (0,0),(1,0),(0,1) and
/// unit square [0,1]^2.
class ElementMap {
public:
    ElementMap(const Mesh2D& mesh, int element);

    bool triangle() const { return triangle_; }
    Vec2 map(Vec2 ref) const;
    Mat2 jacobian(Vec2 ref) const;
    double det_jacobian(Vec2 ref) const { return jacobian(ref).det(); }
    /// d(jacobian)/dref_x and /dref_y are [0|m] and [m|0]; zero for triangles.
    Vec2 twist() const { return m_; }
    /// Newton inverse of the map; exact in one step for affine elements.
    Vec2 inverse_map(Vec2 phys) const;
    /// Reference coordinates of local edge `edge` at parameter t in [0,1].
    Vec2 edge_point(int edge, double t) const;

    static Vec2 reference_vertex(bool triangle, int i);
    static int edge_count(bool triangle) { return triangle ? 3 : 4; }

private:
    bool triangle_;
    Vec2 a_, b_, c_, m_; // F(r) = a + b r.x + c r.y + m r.x r.y
};

} // namespace statflow
