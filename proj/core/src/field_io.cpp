#include "statflow/field_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace statflow {

std::string format_double(double value) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("file_checksum: cannot open " + path.string());
    std::uint64_t h = 1469598103934665603ULL;
    char chunk[4096];
    while (in.read(chunk, sizeof(chunk)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(chunk[i]);
            h *= 1099511628211ULL;
        }
        if (got < static_cast<std::streamsize>(sizeof(chunk))) break;
    }
    return h;
}

void save_field_csv(const std::filesystem::path& path, const FieldCoefficients& field,
                    std::uint64_t mesh_checksum) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_field_csv: cannot write " + path.string());
    const char* kind = field.velocity_space ? "velocity" : "pressure";
    const int degree =
        field.velocity_space ? field.velocity_space->degree() : field.pressure_space->degree();
    out << "kind,degree,mesh_checksum,time,size\n";
    out << kind << ',' << degree << ',' << std::hex << mesh_checksum << std::dec << ','
        << format_double(field.time) << ',' << field.size() << '\n';
    out << "index,value\n";
    for (int i = 0; i < field.size(); ++i)
        out << i << ',' << format_double(field.values[i]) << '\n';
}

FieldCoefficients load_velocity_field_csv(const std::filesystem::path& path,
                                          const VelocitySpace& space,
                                          std::uint64_t mesh_checksum) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_velocity_field_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "kind,degree,mesh_checksum,time,size")
        throw std::runtime_error("load_velocity_field_csv: bad header in " + path.string());
    if (!std::getline(in, line))
        throw std::runtime_error("load_velocity_field_csv: truncated " + path.string());

    std::istringstream header(line);
    std::string kind, deg_s, checksum_s, time_s, size_s;
    std::getline(header, kind, ',');
    std::getline(header, deg_s, ',');
    std::getline(header, checksum_s, ',');
    std::getline(header, time_s, ',');
    std::getline(header, size_s, ',');
    if (kind != "velocity")
        throw std::runtime_error("load_velocity_field_csv: expected a velocity field");
    if (std::stoi(deg_s) != space.degree())
        throw std::runtime_error("load_velocity_field_csv: degree mismatch");
    if (std::stoull(checksum_s, nullptr, 16) != mesh_checksum)
        throw std::runtime_error("load_velocity_field_csv: mesh checksum mismatch");
    const int size = std::stoi(size_s);
    if (size != space.n_dofs())
        throw std::runtime_error("load_velocity_field_csv: coefficient count mismatch");

    FieldCoefficients field = make_velocity_field(space, std::stod(time_s));
    if (!std::getline(in, line) || line != "index,value")
        throw std::runtime_error("load_velocity_field_csv: bad column header");
    for (int i = 0; i < size; ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error("load_velocity_field_csv: truncated rows");
        std::istringstream row(line);
        std::string idx_s, val_s;
        std::getline(row, idx_s, ',');
        std::getline(row, val_s, ',');
        if (std::stoi(idx_s) != i)
            throw std::runtime_error("load_velocity_field_csv: row index mismatch");
        field.values[i] = std::stod(val_s);
    }
    return field;
}

void save_ensemble_manifest(const std::filesystem::path& path,
                            const std::vector<EnsembleManifestEntry>& entries) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_ensemble_manifest: cannot write " + path.string());
    out << "m,seed,field_file,time,mesh_checksum\n";
    for (const auto& e : entries)
        out << e.index << ',' << e.seed << ',' << e.field_file << ',' << format_double(e.time)
            << ',' << std::hex << e.mesh_checksum << std::dec << '\n';
}

std::vector<EnsembleManifestEntry> load_ensemble_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_ensemble_manifest: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != "m,seed,field_file,time,mesh_checksum")
        throw std::runtime_error("load_ensemble_manifest: bad header in " + path.string());
    std::vector<EnsembleManifestEntry> entries;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        EnsembleManifestEntry e;
        std::string m_s, seed_s, time_s, checksum_s;
        std::getline(row, m_s, ',');
        std::getline(row, seed_s, ',');
        std::getline(row, e.field_file, ',');
        std::getline(row, time_s, ',');
        std::getline(row, checksum_s, ',');
        e.index = std::stoi(m_s);
        e.seed = std::stoull(seed_s);
        e.time = std::stod(time_s);
        e.mesh_checksum = std::stoull(checksum_s, nullptr, 16);
        entries.push_back(e);
    }
    return entries;
}

} // namespace statflow
