#include "statflow/gmsh_io.hpp"

#include "statflow/field_io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace statflow {

namespace {

struct LineReader {
    std::istream& in;
    int line_number = 0;

    bool next(std::string& line) {
        while (std::getline(in, line)) {
            ++line_number;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) return true;
        }
        return false;
    }
    std::string expect() {
        std::string line;
        if (!next(line)) throw GmshParseError(line_number + 1, "unexpected end of file");
        return line;
    }
};

} // namespace

Mesh2D load_gmsh_mesh(std::istream& in) {
    LineReader reader{in};

    std::string line = reader.expect();
    if (line != "$MeshFormat")
        throw GmshParseError(reader.line_number, "expected $MeshFormat, got '" + line + "'");
    line = reader.expect();
    {
        std::istringstream fmt(line);
        double version = 0.0;
        int file_type = -1, data_size = -1;
        fmt >> version >> file_type >> data_size;
        if (!fmt || std::abs(version - 2.2) > 1e-9 || file_type != 0)
            throw GmshParseError(reader.line_number,
                                 "unsupported format '" + line + "' (need ASCII MSH 2.2)");
    }
    if (reader.expect() != "$EndMeshFormat")
        throw GmshParseError(reader.line_number, "expected $EndMeshFormat");

    std::vector<Vec2> vertices;
    std::map<long long, int> node_index;
    std::vector<std::array<int, 4>> elements;
    bool seen_nodes = false, seen_elements = false;

    while (reader.next(line)) {
        if (line == "$Nodes") {
            seen_nodes = true;
            const int count_line = reader.line_number + 1;
            std::istringstream head(reader.expect());
            long long n = -1;
            head >> n;
            if (!head || n < 0) throw GmshParseError(count_line, "bad node count");
            vertices.reserve(vertices.size() + static_cast<std::size_t>(n));
            for (long long i = 0; i < n; ++i) {
                std::istringstream row(reader.expect());
                long long id;
                double x, y, z;
                row >> id >> x >> y >> z;
                if (!row) throw GmshParseError(reader.line_number, "bad node line");
                if (std::abs(z) > 1e-12)
                    throw GmshParseError(reader.line_number, "node has nonzero z (2D meshes only)");
                if (!node_index.emplace(id, static_cast<int>(vertices.size())).second)
                    throw GmshParseError(reader.line_number, "duplicate node id");
                vertices.push_back({x, y});
            }
            if (reader.expect() != "$EndNodes")
                throw GmshParseError(reader.line_number, "expected $EndNodes");
        } else if (line == "$Elements") {
            seen_elements = true;
            const int count_line = reader.line_number + 1;
            std::istringstream head(reader.expect());
            long long n = -1;
            head >> n;
            if (!head || n < 0) throw GmshParseError(count_line, "bad element count");
            for (long long i = 0; i < n; ++i) {
                std::istringstream row(reader.expect());
                long long id;
                int type = -1, ntags = -1;
                row >> id >> type >> ntags;
                if (!row || ntags < 0) throw GmshParseError(reader.line_number, "bad element line");
                for (int t = 0; t < ntags; ++t) {
                    long long tag;
                    row >> tag;
                }
                int nverts = 0;
                switch (type) {
                    case 1: nverts = 2; break;  // line marker, skipped
                    case 2: nverts = 3; break;  // triangle
                    case 3: nverts = 4; break;  // quadrilateral
                    case 15: nverts = 1; break; // point marker, skipped
                    default:
                        throw GmshParseError(reader.line_number,
                                             "unsupported element type " + std::to_string(type));
                }
                std::array<int, 4> conn{-1, -1, -1, -1};
                for (int v = 0; v < nverts; ++v) {
                    long long node;
                    row >> node;
                    if (!row) throw GmshParseError(reader.line_number, "truncated element line");
                    const auto it = node_index.find(node);
                    if (it == node_index.end())
                        throw GmshParseError(reader.line_number,
                                             "element references unknown node " + std::to_string(node));
                    conn[v] = it->second;
                }
                if (type == 2 || type == 3) elements.push_back(conn);
            }
            if (reader.expect() != "$EndElements")
                throw GmshParseError(reader.line_number, "expected $EndElements");
        } else if (!line.empty() && line[0] == '$' && line.rfind("$End", 0) != 0) {
            // Unknown section (e.g. $PhysicalNames): skip to its $End marker.
            const std::string end = "$End" + line.substr(1);
            while (true) {
                std::string inner;
                if (!reader.next(inner))
                    throw GmshParseError(reader.line_number, "unterminated section " + line);
                if (inner == end) break;
            }
        } else {
            throw GmshParseError(reader.line_number, "unexpected line '" + line + "'");
        }
    }

    if (!seen_nodes) throw GmshParseError(reader.line_number, "missing $Nodes section");
    if (!seen_elements) throw GmshParseError(reader.line_number, "missing $Elements section");
    if (elements.empty()) throw GmshParseError(reader.line_number, "no 2D elements in file");
    return build_mesh(std::move(vertices), std::move(elements));
}

Mesh2D load_gmsh_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path.string());
    return load_gmsh_mesh(in);
}

void save_gmsh_mesh(std::ostream& out, const Mesh2D& mesh) {
    out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
    out << "$Nodes\n" << mesh.n_vertices() << "\n";
    for (int v = 0; v < mesh.n_vertices(); ++v)
        out << (v + 1) << ' ' << format_double(mesh.vertices[v].x) << ' '
            << format_double(mesh.vertices[v].y) << " 0\n";
    out << "$EndNodes\n$Elements\n" << mesh.n_elements() << "\n";
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const auto& el = mesh.elements[e];
        const bool tri = mesh.is_triangle(e);
        out << (e + 1) << ' ' << (tri ? 2 : 3) << " 0";
        for (int i = 0; i < (tri ? 3 : 4); ++i) out << ' ' << (el[i] + 1);
        out << '\n';
    }
    out << "$EndElements\n";
}

void save_gmsh_mesh(const std::filesystem::path& path, const Mesh2D& mesh) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mesh file: " + path.string());
    save_gmsh_mesh(out, mesh);
}

} // namespace statflow
