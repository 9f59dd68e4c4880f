// statflow: Monte Carlo statistics of 2D incompressible flows with an
// H(div)-conforming solver.
//
// Exit codes: 0 success, 1 usage error, 2 invalid configuration,
// 3 solver/run failure, 4 I/O failure.

#include "statflow/experiment.hpp"
#include "statflow/field_io.hpp"

#include <CLI11.hpp>

#include <clocale>
#include <iostream>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;
constexpr int kExitIo = 4;

statflow::ExperimentConfig resolve_config(const std::string& config_path,
                                          const std::string& preset, int workers_override,
                                          long long seed_override,
                                          const std::string& out_override) {
    using statflow::ExperimentConfig;
    if (config_path.empty() == preset.empty())
        throw CLI::ValidationError("pass exactly one of --config or --preset");
    ExperimentConfig cfg =
        config_path.empty() ? statflow::preset_config(preset) : statflow::load_config(config_path);
    if (workers_override > 0) cfg.workers = workers_override;
    if (seed_override >= 0) cfg.base_seed = static_cast<std::uint64_t>(seed_override);
    if (!out_override.empty()) cfg.output_dir = out_override;
    cfg.validate();
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    std::setlocale(LC_ALL, "C");
    CLI::App app{"Monte Carlo statistical solutions of 2D incompressible Navier-Stokes"};
    app.require_subcommand(1);

    // run
    std::string run_config, run_preset, run_out;
    int run_workers = 0;
    long long run_seed = -1;
    bool dry_run = false;
    bool run_diagnostics = false;
    auto* run = app.add_subcommand("run", "run an experiment end to end");
    run->add_option("--config", run_config, "configuration file");
    run->add_option("--preset", run_preset, "named preset (see validate-config --list-presets)");
    run->add_option("--out", run_out, "output directory override");
    run->add_option("--workers", run_workers, "worker thread count override");
    run->add_option("--seed", run_seed, "base seed override");
    run->add_flag("--diagnostics", run_diagnostics,
                  "write per-step solver diagnostics CSVs per sample");
    run->add_flag("--dry-run", dry_run, "validate the configuration, touch no files");

    // compare
    std::string cmp_a, cmp_b, cmp_out;
    auto* cmp = app.add_subcommand("compare", "Cauchy errors and Wasserstein distances "
                                              "between two stored runs");
    cmp->add_option("runA", cmp_a, "coarser run directory")->required();
    cmp->add_option("runB", cmp_b, "finer run directory")->required();
    cmp->add_option("--out", cmp_out, "report CSV path (default: stdout only)");

    // structure
    std::string st_run, st_out;
    std::vector<double> st_offsets;
    std::vector<int> st_degrees;
    int st_workers = 1;
    auto* st = app.add_subcommand("structure", "structure functions of a stored run");
    st->add_option("run", st_run, "run directory")->required();
    st->add_option("--out", st_out, "output CSV (default <run>/structure.csv)");
    st->add_option("--r", st_offsets, "offsets r (default: config/table defaults)");
    st->add_option("--p", st_degrees, "degrees p (default: from the run config)");
    st->add_option("--workers", st_workers, "worker thread count");

    // wasserstein
    std::string wa_a, wa_b, wa_out;
    auto* wa = app.add_subcommand("wasserstein", "1-point and 2-point Wasserstein distances "
                                                 "between two stored runs");
    wa->add_option("runA", wa_a, "first run directory")->required();
    wa->add_option("runB", wa_b, "second run directory")->required();
    wa->add_option("--out", wa_out, "output CSV path");

    // validate-config
    std::string vc_config;
    bool vc_list = false;
    auto* vc = app.add_subcommand("validate-config", "parse and validate a configuration");
    vc->add_option("--config", vc_config, "configuration file");
    vc->add_flag("--list-presets", vc_list, "print the preset names");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err) ? kExitUsage : 0;
    }

    try {
        if (run->parsed()) {
            auto cfg = resolve_config(run_config, run_preset, run_workers, run_seed, run_out);
            if (run_diagnostics) cfg.diagnostics_enabled = true;
            const auto manifest = statflow::run_experiment(cfg, dry_run);
            if (dry_run) {
                std::cout << "config ok (dry run, no files written)\n";
            } else {
                std::cout << "run complete: " << manifest.directory.string() << " ("
                          << manifest.files.size() << " files)\n";
            }
        } else if (cmp->parsed()) {
            const auto report = statflow::compare_runs(cmp_a, cmp_b, cmp_out);
            std::cout << "mean_cauchy_l2," << statflow::format_double(report.mean_cauchy) << '\n'
                      << "variance_cauchy_l2," << statflow::format_double(report.variance_cauchy)
                      << '\n'
                      << "w1," << statflow::format_double(report.w1) << '\n'
                      << "w2," << statflow::format_double(report.w2) << '\n';
        } else if (st->parsed()) {
            const auto run_data = statflow::load_run(st_run);
            const auto degrees = st_degrees.empty() ? run_data.config.structure_degrees : st_degrees;
            const auto offsets = st_offsets.empty() ? run_data.config.structure_offsets : st_offsets;
            const auto rows = statflow::compute_structure_table(
                run_data.ensemble, run_data.config.domain, offsets, degrees, st_workers);
            const auto out_path = st_out.empty()
                                      ? std::filesystem::path(st_run) / "structure.csv"
                                      : std::filesystem::path(st_out);
            statflow::write_structure_csv(out_path, rows);
            std::cout << "wrote " << out_path.string() << " (" << rows.size() << " rows)\n";
        } else if (wa->parsed()) {
            const auto run_a = statflow::load_run(wa_a);
            const auto run_b = statflow::load_run(wa_b);
            statflow::WassersteinConfig wcfg;
            wcfg.eval_grid = run_a.config.wasserstein_eval_grid;
            wcfg.pair_budget = run_a.config.wasserstein_pair_budget;
            wcfg.pair_seed = run_a.config.wasserstein_pair_seed;
            wcfg.workers = run_a.config.workers;
            const auto result = statflow::wasserstein_distances(run_a.ensemble, run_b.ensemble,
                                                                run_a.config.domain, wcfg);
            if (!wa_out.empty()) statflow::write_wasserstein_csv(wa_out, result);
            std::cout << "w1," << statflow::format_double(result.w1) << '\n'
                      << "w2," << statflow::format_double(result.w2) << '\n';
        } else if (vc->parsed()) {
            if (vc_list) {
                for (const auto& name : statflow::preset_names()) std::cout << name << '\n';
                return 0;
            }
            if (vc_config.empty())
                throw CLI::ValidationError("validate-config needs --config or --list-presets");
            statflow::load_config(vc_config);
            std::cout << "config ok\n";
        }
    } catch (const statflow::ConfigError& err) {
        std::cerr << "configuration error: " << err.what() << '\n';
        return kExitConfig;
    } catch (const CLI::ValidationError& err) {
        std::cerr << "usage error: " << err.what() << '\n';
        return kExitUsage;
    } catch (const statflow::NonconvergenceError& err) {
        std::cerr << "solver failure: " << err.what() << '\n';
        return kExitRun;
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "I/O failure: " << err.what() << '\n';
        return kExitIo;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kExitRun;
    }
    return 0;
}
