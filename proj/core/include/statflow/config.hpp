#pragma once

#include "statflow/mc.hpp"
#include "statflow/solver.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace statflow {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Full description of one experiment run. Serializes to a sectioned
/// key=value text file; parsing is strict (unknown sections or keys are
/// rejected).
struct ExperimentConfig {
    std::string name = "custom";

    // [experiment]
    RandomFieldSpec::Kind kind = RandomFieldSpec::Kind::lid_driven_cavity;
    double reynolds = 3200.0;
    double final_time = 1.0;
    /// Schedule the (resolution, steps, samples) row was taken from:
    /// cavity_desk | cavity_full | channel | custom.
    std::string schedule = "custom";

    // [mesh]
    enum class MeshSource { generated_quad, generated_tri, file };
    MeshSource mesh_source = MeshSource::generated_quad;
    int mesh_nx = 16;
    int mesh_ny = 16;
    std::string mesh_file;
    int refine_level = 0; ///< uniform refinements applied after generation/load
    Rect domain = Rect::unit_square();

    // [solver]
    int time_steps = 50;
    int degree = 1;
    double sigma = 0.0; ///< 0 = default penalty
    double gmres_rtol = 1e-12;
    int gmres_restart = 50;
    int gmres_maxiter = 5000;
    std::string schur = "frozen"; ///< frozen | simple | mass | exact

    // [mc]
    int samples = 8;
    std::uint64_t base_seed = 7305;
    int workers = 1;
    double gamma1 = 0.025;
    double gamma2 = 0.01;
    int mode_count = 11;
    double u_max = 1.5;

    // [observables]
    bool stats_enabled = true;
    bool structure_enabled = true;
    std::vector<double> structure_offsets; ///< empty selects h * 2^j, j=0..3
    std::vector<int> structure_degrees = {1, 2, 3};
    int wasserstein_eval_grid = 16;
    int wasserstein_pair_budget = 256;
    std::uint64_t wasserstein_pair_seed = 7777;

    // [output]
    std::string output_dir = "runs/out";
    bool diagnostics_enabled = false; ///< per-step solver diagnostics CSVs

    double viscosity() const;
    double channel_height() const { return domain.height(); }
    RandomFieldSpec random_field_spec() const;
    SolverConfig solver_config() const;
    void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

/// Named presets. Desk presets are sized for workstation runs; full presets
/// mirror the published schedules and are long-running.
///   cavity-desk-{8,16,32,64}, cavity-full-{32,64,128,256,512},
///   channel-desk-{0,1}, channel-full-{0,1,2,3}
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Least-squares slope of log(ys) against log(xs). Inputs must be positive.
double fit_slope(std::span<const double> xs, std::span<const double> ys);

} // namespace statflow
