#include "statflow/config.hpp"

#include "statflow/field_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace statflow {

double ExperimentConfig::viscosity() const {
    // Cavity: nu = 1/Re. Channel: nu = L/Re with L the channel height.
    return kind == RandomFieldSpec::Kind::lid_driven_cavity ? 1.0 / reynolds
                                                            : channel_height() / reynolds;
}

RandomFieldSpec ExperimentConfig::random_field_spec() const {
    RandomFieldSpec spec;
    spec.kind = kind;
    spec.gamma1 = gamma1;
    spec.gamma2 = gamma2;
    spec.mode_count = mode_count;
    spec.base_seed = base_seed;
    spec.u_max = u_max;
    spec.channel_height = channel_height();
    return spec;
}

SolverConfig ExperimentConfig::solver_config() const {
    SolverConfig cfg;
    cfg.dt = final_time / time_steps;
    cfg.steps = time_steps;
    cfg.gmres_rtol = gmres_rtol;
    cfg.gmres_restart = gmres_restart;
    cfg.gmres_maxiter = gmres_maxiter;
    cfg.zero_mean_pressure = (kind == RandomFieldSpec::Kind::lid_driven_cavity);
    if (schur == "frozen") cfg.schur = SolverConfig::SchurMode::frozen_exact;
    else if (schur == "simple") cfg.schur = SolverConfig::SchurMode::simple;
    else if (schur == "mass") cfg.schur = SolverConfig::SchurMode::mass_scaled;
    else if (schur == "exact") cfg.schur = SolverConfig::SchurMode::exact;
    else throw ConfigError("unknown schur mode: " + schur);
    return cfg;
}

void ExperimentConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
    };
    positive(reynolds, "reynolds");
    positive(final_time, "final_time");
    positive(domain.width(), "domain width");
    positive(domain.height(), "domain height");
    if (time_steps < 1) throw ConfigError("time_steps must be >= 1");
    if (samples < 1) throw ConfigError("samples must be >= 1");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (degree != 0 && degree != 1) throw ConfigError("degree must be 0 or 1");
    if (refine_level < 0) throw ConfigError("refine_level must be >= 0");
    if (mesh_source != MeshSource::file && (mesh_nx < 1 || mesh_ny < 1))
        throw ConfigError("mesh_nx and mesh_ny must be >= 1");
    if (mesh_source == MeshSource::file && mesh_file.empty())
        throw ConfigError("mesh_file required when mesh.source = file");
    if (wasserstein_eval_grid < 1) throw ConfigError("wasserstein_eval_grid must be >= 1");
    if (wasserstein_pair_budget < 1) throw ConfigError("wasserstein_pair_budget must be >= 1");
    for (double r : structure_offsets) positive(r, "structure offset");
    for (int p : structure_degrees)
        if (p < 1) throw ConfigError("structure degree must be >= 1");
    random_field_spec().validate();
    solver_config().validate();

    // Preset schedules: (resolution | level) -> (steps, samples) rows must
    // match the declared table.
    if (schedule == "cavity_desk") {
        const int res = mesh_nx;
        if (mesh_ny != res || res < 8 || (res & (res - 1)) != 0)
            throw ConfigError("cavity_desk schedule expects square power-of-two resolution");
        if (time_steps != 25 * (res / 8) || samples != res / 2)
            throw ConfigError("cavity_desk schedule row mismatch (steps = 25*(res/8), M = res/2)");
    } else if (schedule == "cavity_full") {
        const int res = mesh_nx;
        if (mesh_ny != res || res < 32 || (res & (res - 1)) != 0)
            throw ConfigError("cavity_full schedule expects square power-of-two resolution >= 32");
        if (time_steps != 100 * (res / 32) || samples != res)
            throw ConfigError("cavity_full schedule row mismatch (steps = 100*(res/32), M = res)");
    } else if (schedule == "channel") {
        static const int steps_of_level[] = {400, 800, 1600, 2500};
        if (refine_level < 0 || refine_level > 3)
            throw ConfigError("channel schedule defines levels 0..3");
        if (time_steps != steps_of_level[refine_level])
            throw ConfigError("channel schedule row mismatch (level " +
                              std::to_string(refine_level) + " -> " +
                              std::to_string(steps_of_level[refine_level]) + " steps)");
    } else if (schedule != "custom") {
        throw ConfigError("unknown schedule: " + schedule);
    }
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    const auto e = s.find_last_not_of(" \t");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stod(item));
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoi(item));
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("expected a boolean, got '" + s + "'");
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    cfg.structure_degrees.clear();
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    bool saw_structure_degrees = false;

    while (std::getline(in, line)) {
        ++line_no;
        const auto comment = line.find('#');
        if (comment != std::string::npos) line = line.substr(0, comment);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) +
                                                      ": malformed section header");
            section = line.substr(1, line.size() - 2);
            static const char* known[] = {"experiment", "mesh", "solver", "mc", "observables",
                                          "output"};
            if (std::find(std::begin(known), std::end(known), section) == std::end(known))
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (qual == "experiment.name") cfg.name = value;
        else if (qual == "experiment.kind") {
            if (value == "lid_driven_cavity") cfg.kind = RandomFieldSpec::Kind::lid_driven_cavity;
            else if (value == "channel_flow") cfg.kind = RandomFieldSpec::Kind::channel_flow;
            else throw ConfigError("unknown experiment kind: " + value);
        } else if (qual == "experiment.reynolds") cfg.reynolds = std::stod(value);
        else if (qual == "experiment.final_time") cfg.final_time = std::stod(value);
        else if (qual == "experiment.schedule") cfg.schedule = value;
        else if (qual == "mesh.source") {
            if (value == "generated_quad") cfg.mesh_source = ExperimentConfig::MeshSource::generated_quad;
            else if (value == "generated_tri") cfg.mesh_source = ExperimentConfig::MeshSource::generated_tri;
            else if (value == "file") cfg.mesh_source = ExperimentConfig::MeshSource::file;
            else throw ConfigError("unknown mesh source: " + value);
        } else if (qual == "mesh.nx") cfg.mesh_nx = std::stoi(value);
        else if (qual == "mesh.ny") cfg.mesh_ny = std::stoi(value);
        else if (qual == "mesh.file") cfg.mesh_file = value;
        else if (qual == "mesh.refine_level") cfg.refine_level = std::stoi(value);
        else if (qual == "mesh.domain") {
            const auto vals = parse_double_list(value);
            if (vals.size() != 4) throw ConfigError("mesh.domain needs x0,y0,x1,y1");
            cfg.domain = {{vals[0], vals[1]}, {vals[2], vals[3]}};
        } else if (qual == "solver.time_steps") cfg.time_steps = std::stoi(value);
        else if (qual == "solver.degree") cfg.degree = std::stoi(value);
        else if (qual == "solver.sigma") cfg.sigma = std::stod(value);
        else if (qual == "solver.gmres_rtol") cfg.gmres_rtol = std::stod(value);
        else if (qual == "solver.gmres_restart") cfg.gmres_restart = std::stoi(value);
        else if (qual == "solver.gmres_maxiter") cfg.gmres_maxiter = std::stoi(value);
        else if (qual == "solver.schur") cfg.schur = value;
        else if (qual == "mc.samples") cfg.samples = std::stoi(value);
        else if (qual == "mc.base_seed") cfg.base_seed = std::stoull(value);
        else if (qual == "mc.workers") cfg.workers = std::stoi(value);
        else if (qual == "mc.gamma1") cfg.gamma1 = std::stod(value);
        else if (qual == "mc.gamma2") cfg.gamma2 = std::stod(value);
        else if (qual == "mc.mode_count") cfg.mode_count = std::stoi(value);
        else if (qual == "mc.u_max") cfg.u_max = std::stod(value);
        else if (qual == "observables.stats") cfg.stats_enabled = parse_bool(value);
        else if (qual == "observables.structure") cfg.structure_enabled = parse_bool(value);
        else if (qual == "observables.structure_offsets") cfg.structure_offsets = parse_double_list(value);
        else if (qual == "observables.structure_degrees") {
            cfg.structure_degrees = parse_int_list(value);
            saw_structure_degrees = true;
        } else if (qual == "observables.wasserstein_eval_grid") cfg.wasserstein_eval_grid = std::stoi(value);
        else if (qual == "observables.wasserstein_pair_budget") cfg.wasserstein_pair_budget = std::stoi(value);
        else if (qual == "observables.wasserstein_pair_seed") cfg.wasserstein_pair_seed = std::stoull(value);
        else if (qual == "output.dir") cfg.output_dir = value;
        else if (qual == "output.diagnostics") cfg.diagnostics_enabled = parse_bool(value);
        else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + qual + "'");
    }
    if (!saw_structure_degrees) cfg.structure_degrees = {1, 2, 3};
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "[experiment]\n";
    out << "name = " << cfg.name << '\n';
    out << "kind = "
        << (cfg.kind == RandomFieldSpec::Kind::lid_driven_cavity ? "lid_driven_cavity"
                                                                 : "channel_flow")
        << '\n';
    out << "reynolds = " << format_double(cfg.reynolds) << '\n';
    out << "final_time = " << format_double(cfg.final_time) << '\n';
    out << "schedule = " << cfg.schedule << '\n';
    out << "\n[mesh]\n";
    const char* source = cfg.mesh_source == ExperimentConfig::MeshSource::generated_quad
                             ? "generated_quad"
                             : cfg.mesh_source == ExperimentConfig::MeshSource::generated_tri
                                   ? "generated_tri"
                                   : "file";
    out << "source = " << source << '\n';
    out << "nx = " << cfg.mesh_nx << '\n';
    out << "ny = " << cfg.mesh_ny << '\n';
    if (!cfg.mesh_file.empty()) out << "file = " << cfg.mesh_file << '\n';
    out << "refine_level = " << cfg.refine_level << '\n';
    out << "domain = " << format_double(cfg.domain.lo.x) << ',' << format_double(cfg.domain.lo.y)
        << ',' << format_double(cfg.domain.hi.x) << ',' << format_double(cfg.domain.hi.y) << '\n';
    out << "\n[solver]\n";
    out << "time_steps = " << cfg.time_steps << '\n';
    out << "degree = " << cfg.degree << '\n';
    out << "sigma = " << format_double(cfg.sigma) << '\n';
    out << "gmres_rtol = " << format_double(cfg.gmres_rtol) << '\n';
    out << "gmres_restart = " << cfg.gmres_restart << '\n';
    out << "gmres_maxiter = " << cfg.gmres_maxiter << '\n';
    out << "schur = " << cfg.schur << '\n';
    out << "\n[mc]\n";
    out << "samples = " << cfg.samples << '\n';
    out << "base_seed = " << cfg.base_seed << '\n';
    out << "workers = " << cfg.workers << '\n';
    out << "gamma1 = " << format_double(cfg.gamma1) << '\n';
    out << "gamma2 = " << format_double(cfg.gamma2) << '\n';
    out << "mode_count = " << cfg.mode_count << '\n';
    out << "u_max = " << format_double(cfg.u_max) << '\n';
    out << "\n[observables]\n";
    out << "stats = " << (cfg.stats_enabled ? "true" : "false") << '\n';
    out << "structure = " << (cfg.structure_enabled ? "true" : "false") << '\n';
    if (!cfg.structure_offsets.empty()) {
        out << "structure_offsets = ";
        for (std::size_t i = 0; i < cfg.structure_offsets.size(); ++i)
            out << (i ? "," : "") << format_double(cfg.structure_offsets[i]);
        out << '\n';
    }
    out << "structure_degrees = ";
    for (std::size_t i = 0; i < cfg.structure_degrees.size(); ++i)
        out << (i ? "," : "") << cfg.structure_degrees[i];
    out << '\n';
    out << "wasserstein_eval_grid = " << cfg.wasserstein_eval_grid << '\n';
    out << "wasserstein_pair_budget = " << cfg.wasserstein_pair_budget << '\n';
    out << "wasserstein_pair_seed = " << cfg.wasserstein_pair_seed << '\n';
    out << "\n[output]\n";
    out << "dir = " << cfg.output_dir << '\n';
    out << "diagnostics = " << (cfg.diagnostics_enabled ? "true" : "false") << '\n';
    return out.str();
}

namespace {

ExperimentConfig cavity_base() {
    ExperimentConfig cfg;
    cfg.kind = RandomFieldSpec::Kind::lid_driven_cavity;
    cfg.reynolds = 3200.0;
    cfg.final_time = 1.0;
    cfg.domain = Rect::unit_square();
    cfg.mesh_source = ExperimentConfig::MeshSource::generated_quad;
    cfg.degree = 1;
    cfg.gamma1 = 0.025;
    cfg.gamma2 = 0.01;
    cfg.mode_count = 11;
    return cfg;
}

ExperimentConfig channel_base() {
    ExperimentConfig cfg;
    cfg.kind = RandomFieldSpec::Kind::channel_flow;
    cfg.reynolds = 1600.0;
    cfg.final_time = 0.8;
    cfg.domain = {{0.0, 0.0}, {1.5, 0.5}};
    cfg.mesh_source = ExperimentConfig::MeshSource::generated_tri;
    cfg.degree = 1;
    cfg.gamma1 = 0.025;
    cfg.gamma2 = 0.025;
    cfg.mode_count = 10;
    cfg.u_max = 1.5;
    return cfg;
}

} // namespace

ExperimentConfig preset_config(const std::string& name) {
    auto starts_with = [&name](const char* prefix) { return name.rfind(prefix, 0) == 0; };
    ExperimentConfig cfg;
    if (starts_with("cavity-desk-")) {
        const int res = std::stoi(name.substr(12));
        if (res != 8 && res != 16 && res != 32 && res != 64)
            throw ConfigError("cavity-desk presets: resolution in {8,16,32,64}");
        cfg = cavity_base();
        cfg.schedule = "cavity_desk";
        cfg.mesh_nx = cfg.mesh_ny = res;
        cfg.time_steps = 25 * (res / 8);
        cfg.samples = res / 2;
    } else if (starts_with("cavity-full-")) {
        const int res = std::stoi(name.substr(12));
        if (res != 32 && res != 64 && res != 128 && res != 256 && res != 512)
            throw ConfigError("cavity-full presets: resolution in {32,...,512}");
        cfg = cavity_base();
        cfg.schedule = "cavity_full";
        cfg.mesh_nx = cfg.mesh_ny = res;
        cfg.time_steps = 100 * (res / 32);
        cfg.samples = res;
    } else if (starts_with("channel-desk-") || starts_with("channel-full-")) {
        const bool desk = starts_with("channel-desk-");
        const int level = std::stoi(name.substr(13));
        static const int steps_of_level[] = {400, 800, 1600, 2500};
        if (level < 0 || level > (desk ? 1 : 3))
            throw ConfigError(desk ? "channel-desk presets: level in {0,1}"
                                   : "channel-full presets: level in {0..3}");
        cfg = channel_base();
        cfg.schedule = "channel";
        cfg.refine_level = level;
        cfg.time_steps = steps_of_level[level];
        // Base triangulation refined per level; desk meshes are coarser.
        cfg.mesh_nx = desk ? 18 : 72;
        cfg.mesh_ny = desk ? 6 : 24;
        cfg.samples = desk ? 4 * (1 << level) : 60 * (1 << level);
    } else {
        throw ConfigError("unknown preset: " + name + " (see preset_names())");
    }
    cfg.name = name;
    cfg.output_dir = "runs/" + name;
    cfg.validate();
    return cfg;
}

std::vector<std::string> preset_names() {
    return {"cavity-desk-8",  "cavity-desk-16",  "cavity-desk-32",  "cavity-desk-64",
            "cavity-full-32", "cavity-full-64",  "cavity-full-128", "cavity-full-256",
            "cavity-full-512", "channel-desk-0", "channel-desk-1",  "channel-full-0",
            "channel-full-1", "channel-full-2",  "channel-full-3"};
}

double fit_slope(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2)
        throw std::invalid_argument("fit_slope: need at least two (x,y) pairs");
    const int n = static_cast<int>(xs.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
            throw std::invalid_argument("fit_slope: inputs must be positive");
        const double lx = std::log(xs[i]);
        const double ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

} // namespace statflow
