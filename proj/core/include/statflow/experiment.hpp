#pragma once

#include "statflow/config.hpp"
#include "statflow/gmsh_io.hpp"
#include "statflow/observables.hpp"

#include <filesystem>
#include <memory>

namespace statflow {

/// Mesh, face sets, spaces and once-assembled operators for one experiment
/// configuration. Move-only; the spaces reference the owned mesh.
struct ExperimentSetup {
    std::unique_ptr<Mesh2D> mesh;
    std::unique_ptr<FaceSets> face_sets;
    std::unique_ptr<VelocitySpace> velocity_space;
    std::unique_ptr<PressureSpace> pressure_space;
    std::unique_ptr<DiscreteOperators> operators;
    FormContext context; ///< viscosity and sigma set; boundary data is per-sample
};

/// Builds the mesh (generated or loaded, plus uniform refinements), the
/// geometric boundary classification and both spaces.
ExperimentSetup build_experiment_setup(const ExperimentConfig& config);

/// Run directory layout:
///   config.cfg, mesh.msh, fields/member_NNNN.csv, ensemble.csv,
///   stats.csv, summary.csv, structure.csv, run_manifest.csv
struct RunManifest {
    std::filesystem::path directory;
    struct FileEntry {
        std::string path; ///< relative to directory
        std::uint64_t checksum;
        std::uintmax_t bytes;
    };
    std::vector<FileEntry> files;
};

/// Full pipeline: sample, evolve, store the ensemble, then each enabled
/// observable. dry_run validates the configuration and touches no files.
RunManifest run_experiment(const ExperimentConfig& config, bool dry_run = false);

/// A stored run reloaded for post-processing.
struct LoadedRun {
    ExperimentConfig config;
    std::unique_ptr<Mesh2D> mesh;
    std::unique_ptr<FaceSets> face_sets;
    std::unique_ptr<VelocitySpace> velocity_space;
    Ensemble ensemble;
};

LoadedRun load_run(const std::filesystem::path& directory);

struct CompareReport {
    double mean_cauchy = 0.0;
    double variance_cauchy = 0.0;
    double w1 = 0.0;
    double w2 = 0.0;
};

/// Cauchy errors of mean/variance plus Wasserstein distances between two
/// stored runs. run_b must be at equal or finer resolution with equal or more
/// samples; the quadrature lives on run_b's mesh.
CompareReport compare_runs(const LoadedRun& run_a, const LoadedRun& run_b);
CompareReport compare_runs(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b,
                           const std::filesystem::path& report_csv = {});

struct StructureRow {
    double r;
    int p;
    double value;
};

/// Ensemble structure function over the configured offsets/degrees. Offsets
/// default to mesh_size * 2^j spanning one decade, capped by the grid
/// constraint (cells at least r wide).
std::vector<StructureRow> compute_structure_table(const Ensemble& ensemble, const Rect& domain,
                                                  std::vector<double> offsets,
                                                  const std::vector<int>& degrees, int workers);

void write_structure_csv(const std::filesystem::path& path, const std::vector<StructureRow>& rows);
void write_wasserstein_csv(const std::filesystem::path& path, const WassersteinResult& result);
void write_compare_csv(const std::filesystem::path& path, const CompareReport& report);

} // namespace statflow
