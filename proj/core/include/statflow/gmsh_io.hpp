#pragma once

#include "statflow/mesh.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace statflow {

/// Malformed MSH input; message carries the 1-based line number.
class GmshParseError : public std::runtime_error {
public:
    GmshParseError(int line, const std::string& what)
        : std::runtime_error("gmsh parse error at line " + std::to_string(line) + ": " + what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

/// Reads an ASCII Gmsh MSH 2.2 file. Triangles (type 2) and quadrilaterals
/// (type 3) become mesh elements; line (1) and point (15) markers are
/// skipped; any other element type is rejected. Physical tags are ignored,
/// boundary classification is geometric (see classify_faces).
Mesh2D load_gmsh_mesh(const std::filesystem::path& path);
Mesh2D load_gmsh_mesh(std::istream& in);

/// Writes the mesh in the same ASCII MSH 2.2 layout, round-trip exact.
void save_gmsh_mesh(const std::filesystem::path& path, const Mesh2D& mesh);
void save_gmsh_mesh(std::ostream& out, const Mesh2D& mesh);

} // namespace statflow
