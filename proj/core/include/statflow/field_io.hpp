#pragma once

#include "statflow/spaces.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace statflow {

/// Shortest round-trip decimal representation (std::to_chars); locale-free
/// and byte-deterministic, used for every floating-point value we write.
std::string format_double(double value);

/// FNV-1a 64 over a file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

/// Field snapshot CSV: a header row
///   kind,degree,mesh_checksum,time,size
/// followed by one coefficient per row (index,value).
void save_field_csv(const std::filesystem::path& path, const FieldCoefficients& field,
                    std::uint64_t mesh_checksum);

/// Loads a velocity snapshot; validates kind, degree, checksum and length.
FieldCoefficients load_velocity_field_csv(const std::filesystem::path& path,
                                          const VelocitySpace& space,
                                          std::uint64_t mesh_checksum);

/// One row of an ensemble manifest.
struct EnsembleManifestEntry {
    int index;
    std::uint64_t seed;
    std::string field_file; ///< relative to the manifest's directory
    double time;
    std::uint64_t mesh_checksum;
};

void save_ensemble_manifest(const std::filesystem::path& path,
                            const std::vector<EnsembleManifestEntry>& entries);
std::vector<EnsembleManifestEntry> load_ensemble_manifest(const std::filesystem::path& path);

} // namespace statflow
