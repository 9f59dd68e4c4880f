#include "statflow/experiment.hpp"

#include "statflow/field_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace statflow {

namespace {

Mesh2D build_config_mesh(const ExperimentConfig& cfg) {
    Mesh2D mesh;
    switch (cfg.mesh_source) {
        case ExperimentConfig::MeshSource::generated_quad:
            mesh = generate_uniform_quad_mesh(cfg.mesh_nx, cfg.mesh_ny, cfg.domain);
            break;
        case ExperimentConfig::MeshSource::generated_tri: {
            if (cfg.kind == RandomFieldSpec::Kind::channel_flow) {
                // Chebyshev wall grading in x2.
                std::vector<double> y(cfg.mesh_ny + 1);
                for (int j = 0; j <= cfg.mesh_ny; ++j)
                    y[j] = cfg.domain.lo.y +
                           cfg.domain.height() *
                               0.5 * (1.0 - std::cos(std::numbers::pi * j / cfg.mesh_ny));
                mesh = generate_structured_tri_mesh(cfg.mesh_nx, cfg.mesh_ny, cfg.domain, &y);
            } else {
                mesh = generate_structured_tri_mesh(cfg.mesh_nx, cfg.mesh_ny, cfg.domain);
            }
            break;
        }
        case ExperimentConfig::MeshSource::file:
            mesh = load_gmsh_mesh(cfg.mesh_file);
            break;
    }
    for (int l = 0; l < cfg.refine_level; ++l) mesh = uniform_refine(mesh);
    return mesh;
}

BoundarySpec boundary_spec_for(const ExperimentConfig& cfg) {
    return cfg.kind == RandomFieldSpec::Kind::lid_driven_cavity
               ? BoundarySpec::all_dirichlet(cfg.domain)
               : BoundarySpec::with_outflow_side(cfg.domain, Side::right);
}

std::vector<double> default_structure_offsets(const Mesh2D& mesh, const Rect& domain) {
    const double cap = std::min(domain.width(), domain.height()) / 3.0;
    std::vector<double> offsets;
    for (int j = 0; j < 4; ++j) {
        const double r = mesh.mesh_size * (1 << j);
        if (r <= cap) offsets.push_back(r);
    }
    return offsets;
}

} // namespace

ExperimentSetup build_experiment_setup(const ExperimentConfig& cfg) {
    cfg.validate();
    ExperimentSetup setup;
    setup.mesh = std::make_unique<Mesh2D>(build_config_mesh(cfg));
    setup.face_sets =
        std::make_unique<FaceSets>(classify_faces(*setup.mesh, boundary_spec_for(cfg)));
    setup.velocity_space =
        std::make_unique<VelocitySpace>(*setup.mesh, cfg.degree, *setup.face_sets);
    const bool zero_mean = cfg.kind == RandomFieldSpec::Kind::lid_driven_cavity;
    setup.pressure_space = std::make_unique<PressureSpace>(*setup.mesh, cfg.degree, zero_mean);
    setup.context.viscosity = cfg.viscosity();
    setup.context.sigma = cfg.sigma;
    setup.operators = std::make_unique<DiscreteOperators>(*setup.velocity_space,
                                                          *setup.pressure_space, setup.context);
    return setup;
}

namespace {

class RunWriter {
public:
    explicit RunWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
        std::filesystem::create_directories(dir_ / "fields");
        // Present until the manifest is written: marks partial output stale.
        std::ofstream marker(dir_ / "stale.marker");
        marker << "run in progress or aborted\n";
    }

    std::ofstream open(const std::string& relative) {
        track(relative);
        std::ofstream out(dir_ / relative);
        if (!out) throw std::runtime_error("cannot write " + (dir_ / relative).string());
        return out;
    }
    void track(const std::string& relative) { written_.push_back(relative); }

    RunManifest finish() {
        RunManifest manifest;
        manifest.directory = dir_;
        std::sort(written_.begin(), written_.end());
        for (const auto& rel : written_) {
            const auto full = dir_ / rel;
            manifest.files.push_back(
                {rel, file_checksum(full), std::filesystem::file_size(full)});
        }
        std::ofstream out(dir_ / "run_manifest.csv");
        out << "path,checksum_fnv1a64,bytes\n";
        for (const auto& f : manifest.files)
            out << f.path << ',' << std::hex << f.checksum << std::dec << ',' << f.bytes << '\n';
        out.close();
        std::filesystem::remove(dir_ / "stale.marker");
        return manifest;
    }

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> written_;
};

std::string diagnostics_file_name(int m) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "fields/diagnostics_%04d.csv", m);
    return buf;
}

std::string member_file_name(int m) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fields/member_%04d.csv", m);
    return buf;
}

void write_stats(RunWriter& writer, const Ensemble& ensemble) {
    const Mesh2D& mesh = *ensemble.mesh;
    const FieldCoefficients mean = ensemble_mean(ensemble);
    const bool have_variance = ensemble.size() >= 2;

    auto stats = writer.open("stats.csv");
    stats << "element,centroid_x1,centroid_x2,mean_x1,mean_x2,variance_x1,variance_x2\n";
    for (int e = 0; e < mesh.n_elements(); ++e) {
        const ElementMap map(mesh, e);
        const Vec2 ref = mesh.is_triangle(e) ? Vec2{1.0 / 3.0, 1.0 / 3.0} : Vec2{0.5, 0.5};
        const Vec2 c = map.map(ref);
        const Vec2 mval = eval_velocity(mean, e, ref);
        const Vec2 var =
            have_variance ? ensemble_variance_at(ensemble, e, ref) : Vec2{0.0, 0.0};
        stats << e << ',' << format_double(c.x) << ',' << format_double(c.y) << ','
              << format_double(mval.x) << ',' << format_double(mval.y) << ','
              << format_double(var.x) << ',' << format_double(var.y) << '\n';
    }

    const PointLocator locator(mesh);
    const double mean_l2 = l2_norm([&](Vec2 x) { return eval_velocity_at(mean, locator, x); },
                                   mesh);
    double variance_l2 = 0.0;
    if (have_variance)
        variance_l2 = l2_norm(ensemble_variance_field(ensemble, locator), mesh);

    auto summary = writer.open("summary.csv");
    summary << "statistic,value\n";
    summary << "members," << ensemble.size() << '\n';
    summary << "time," << format_double(ensemble.time) << '\n';
    summary << "mean_l2," << format_double(mean_l2) << '\n';
    summary << "variance_l2," << format_double(variance_l2) << '\n';
}

} // namespace

std::vector<StructureRow> compute_structure_table(const Ensemble& ensemble, const Rect& domain,
                                                  std::vector<double> offsets,
                                                  const std::vector<int>& degrees, int workers) {
    if (offsets.empty()) offsets = default_structure_offsets(*ensemble.mesh, domain);
    if (offsets.empty()) return {}; // mesh too coarse for any admissible offset
    std::vector<ElementAverages> averages;
    averages.reserve(ensemble.members.size());
    for (const auto& member : ensemble.members) averages.push_back(element_average(member.field));

    // One grid sized by the largest offset serves the whole sweep: the cell
    // constraint holds for every smaller r and the interior-cell restriction
    // (boundary cells never contribute) is identical across rows, so the
    // r-scaling of the table is not confounded by a changing integration
    // region.
    const double r_max = *std::max_element(offsets.begin(), offsets.end());
    const int nx1 = choose_grid_size(domain.width(), r_max);
    const int nx2 = choose_grid_size(domain.height(), r_max);

    std::vector<StructureRow> rows;
    for (double r : offsets)
        for (int p : degrees)
            rows.push_back(
                {r, p, structure_function_ensemble(domain, *ensemble.mesh, nx1, nx2, averages,
                                                   r, p, workers)});
    return rows;
}

void write_structure_csv(const std::filesystem::path& path, const std::vector<StructureRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "r,p,S\n";
    for (const auto& row : rows)
        out << format_double(row.r) << ',' << row.p << ',' << format_double(row.value) << '\n';
}

void write_wasserstein_csv(const std::filesystem::path& path, const WassersteinResult& result) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "statistic,value\n";
    out << "w1," << format_double(result.w1) << '\n';
    out << "w2," << format_double(result.w2) << '\n';
}

void write_compare_csv(const std::filesystem::path& path, const CompareReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "statistic,value\n";
    out << "mean_cauchy_l2," << format_double(report.mean_cauchy) << '\n';
    out << "variance_cauchy_l2," << format_double(report.variance_cauchy) << '\n';
    out << "w1," << format_double(report.w1) << '\n';
    out << "w2," << format_double(report.w2) << '\n';
}

RunManifest run_experiment(const ExperimentConfig& cfg, bool dry_run) {
    cfg.validate();
    if (dry_run) {
        // Validation-only mode: build nothing, touch no files.
        RunManifest manifest;
        manifest.directory = cfg.output_dir;
        return manifest;
    }

    ExperimentSetup setup = build_experiment_setup(cfg);
    const std::uint64_t checksum = mesh_checksum(*setup.mesh);
    RunWriter writer(cfg.output_dir);

    Ensemble ensemble;
    try {
        DiagnosticsFactory diagnostics;
        if (cfg.diagnostics_enabled) {
            for (int m = 0; m < cfg.samples; ++m) writer.track(diagnostics_file_name(m));
            diagnostics = [&writer](int m) {
                return TimeStepper::diagnostics_callback(writer.dir() / diagnostics_file_name(m));
            };
        }
        ensemble = run_monte_carlo(cfg.random_field_spec(), *setup.operators, setup.context,
                                   cfg.solver_config(), cfg.samples, cfg.workers, diagnostics);
    } catch (const std::exception& err) {
        throw std::runtime_error(std::string("stage monte_carlo: ") + err.what());
    }

    try {
        writer.open("config.cfg") << serialize_config(cfg);
        writer.track("mesh.msh");
        save_gmsh_mesh(writer.dir() / "mesh.msh", *setup.mesh);

        std::vector<EnsembleManifestEntry> entries;
        for (const auto& member : ensemble.members) {
            const std::string file = member_file_name(member.index);
            writer.track(file);
            save_field_csv(writer.dir() / file, member.field, checksum);
            entries.push_back({member.index, member.seed, file, ensemble.time, checksum});
        }
        writer.track("ensemble.csv");
        save_ensemble_manifest(writer.dir() / "ensemble.csv", entries);
    } catch (const std::exception& err) {
        throw std::runtime_error(std::string("stage store_ensemble: ") + err.what());
    }

    if (cfg.stats_enabled) {
        try {
            write_stats(writer, ensemble);
        } catch (const std::exception& err) {
            throw std::runtime_error(std::string("stage statistics: ") + err.what());
        }
    }
    if (cfg.structure_enabled) {
        try {
            const auto rows = compute_structure_table(ensemble, cfg.domain,
                                                      cfg.structure_offsets,
                                                      cfg.structure_degrees, cfg.workers);
            writer.track("structure.csv");
            write_structure_csv(writer.dir() / "structure.csv", rows);
        } catch (const std::exception& err) {
            throw std::runtime_error(std::string("stage structure_function: ") + err.what());
        }
    }
    return writer.finish();
}

LoadedRun load_run(const std::filesystem::path& directory) {
    if (std::filesystem::exists(directory / "stale.marker"))
        throw std::runtime_error("load_run: " + directory.string() +
                                 " holds partial output from an aborted run (stale.marker)");
    LoadedRun run;
    run.config = load_config(directory / "config.cfg");
    run.mesh = std::make_unique<Mesh2D>(load_gmsh_mesh(directory / "mesh.msh"));
    const std::uint64_t checksum = mesh_checksum(*run.mesh);
    run.face_sets =
        std::make_unique<FaceSets>(classify_faces(*run.mesh, boundary_spec_for(run.config)));
    run.velocity_space =
        std::make_unique<VelocitySpace>(*run.mesh, run.config.degree, *run.face_sets);

    const auto entries = load_ensemble_manifest(directory / "ensemble.csv");
    run.ensemble.mesh = run.mesh.get();
    run.ensemble.space = run.velocity_space.get();
    for (const auto& e : entries) {
        if (e.mesh_checksum != checksum)
            throw std::runtime_error("load_run: field " + e.field_file +
                                     " was computed on a different mesh");
        EnsembleMember member;
        member.index = e.index;
        member.seed = e.seed;
        member.field =
            load_velocity_field_csv(directory / e.field_file, *run.velocity_space, checksum);
        run.ensemble.time = e.time;
        run.ensemble.members.push_back(std::move(member));
    }
    if (run.ensemble.members.empty()) throw std::runtime_error("load_run: empty ensemble");
    return run;
}

CompareReport compare_runs(const LoadedRun& run_a, const LoadedRun& run_b) {
    const Rect dom_a = run_a.config.domain;
    const Rect dom_b = run_b.config.domain;
    const double tol = 1e-12;
    if (std::abs(dom_a.lo.x - dom_b.lo.x) > tol || std::abs(dom_a.lo.y - dom_b.lo.y) > tol ||
        std::abs(dom_a.hi.x - dom_b.hi.x) > tol || std::abs(dom_a.hi.y - dom_b.hi.y) > tol)
        throw std::invalid_argument("compare_runs: incompatible domains");
    if (run_b.mesh->mesh_size > run_a.mesh->mesh_size * (1.0 + 1e-9))
        throw std::invalid_argument("compare_runs: second run must be at equal or finer resolution");
    if (run_b.ensemble.size() < run_a.ensemble.size())
        throw std::invalid_argument("compare_runs: second run must have at least as many samples");

    const PointLocator loc_a(*run_a.mesh);
    const PointLocator loc_b(*run_b.mesh);
    CompareReport report;
    report.mean_cauchy = cauchy_error_l2(ensemble_mean_field(run_a.ensemble, loc_a),
                                         ensemble_mean_field(run_b.ensemble, loc_b),
                                         *run_b.mesh);
    if (run_a.ensemble.size() >= 2 && run_b.ensemble.size() >= 2)
        report.variance_cauchy = cauchy_error_l2(ensemble_variance_field(run_a.ensemble, loc_a),
                                                 ensemble_variance_field(run_b.ensemble, loc_b),
                                                 *run_b.mesh);

    WassersteinConfig wcfg;
    wcfg.eval_grid = run_a.config.wasserstein_eval_grid;
    wcfg.pair_budget = run_a.config.wasserstein_pair_budget;
    wcfg.pair_seed = run_a.config.wasserstein_pair_seed;
    wcfg.workers = run_a.config.workers;
    const WassersteinResult wd =
        wasserstein_distances(run_a.ensemble, run_b.ensemble, dom_a, wcfg);
    report.w1 = wd.w1;
    report.w2 = wd.w2;
    return report;
}

CompareReport compare_runs(const std::filesystem::path& dir_a, const std::filesystem::path& dir_b,
                           const std::filesystem::path& report_csv) {
    const LoadedRun run_a = load_run(dir_a);
    const LoadedRun run_b = load_run(dir_b);
    const CompareReport report = compare_runs(run_a, run_b);
    if (!report_csv.empty()) write_compare_csv(report_csv, report);
    return report;
}

} // namespace statflow
