#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sideband/sideband.hpp"

namespace {

struct GlobalArgs {
    std::string config_path;
    std::string units;
    std::string out_dir;
    std::string format;
    long seed = -1;
    int workers = 0;
};

sideband::RunConfig apply_overrides(sideband::RunConfig rc, const GlobalArgs& g) {
    if (g.seed >= 0) rc.seed = static_cast<std::uint64_t>(g.seed);
    if (g.workers > 0) rc.workers = g.workers;
    if (!g.out_dir.empty()) rc.out_dir = g.out_dir;
    if (!g.format.empty()) rc.format = g.format;
    return rc;
}

sideband::RunConfig load(const GlobalArgs& g) {
    if (g.config_path.empty())
        throw sideband::ValidationError("--config PATH is required for this subcommand");
    const sideband::KeyValues kv = sideband::load_config_file(g.config_path);
    std::optional<std::string> units;
    if (!g.units.empty()) units = g.units;
    return apply_overrides(sideband::build_run_config(kv, units), g);
}

// For subcommands that work without physical parameters (fit, synth).
sideband::RunConfig load_minimal(const GlobalArgs& g) {
    sideband::RunConfig rc;
    if (!g.config_path.empty()) rc.raw = sideband::load_config_file(g.config_path);
    return apply_overrides(rc, g);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"side-band inequivalence toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "configuration file (key-value or JSON)");
    app.add_option("--units", g.units, "hz|rad: unit of the rate inputs")
        ->check(CLI::IsMember({"hz", "rad"}));
    app.add_option("--seed", g.seed, "master seed override");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--format", g.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    app.add_option("--workers", g.workers, "worker pool size (default: machine parallelism)");

    auto* c_si = app.add_subcommand("si", "closed-form shift report at one operating point");
    auto* c_sweep = app.add_subcommand("sweep", "parameter sweep to CSV");
    auto* c_opt = app.add_subcommand("optimum", "optimum photon number and maximum shift");
    auto* c_cls = app.add_subcommand("classify", "operation-regime classification");
    auto* c_sim = app.add_subcommand("simulate", "classical time-domain run and measurement");
    auto* c_fit = app.add_subcommand("fit", "fit a spectrum file and extract the shift");
    auto* c_synth = app.add_subcommand("synth", "write a synthetic doublet spectrum");
    for (CLI::App* sc : {c_si, c_sweep, c_opt, c_cls, c_sim, c_fit, c_synth})
        sc->fallthrough(); // global flags may follow the subcommand name

    std::string spectrum_path;
    sideband::cli::FitCliOptions fo;
    double omega_flag = 0.0;
    c_fit->add_option("spectrum", spectrum_path, "CSV spectrum file")->required();
    c_fit->add_option("--n-peaks", fo.n_peaks, "number of Lorentzians (default 3)");
    c_fit->add_flag("--folded", fo.folded, "magnitude-frequency (homodyne) convention");
    c_fit->add_option("--pump-offset", fo.pump_offset, "pump position on the grid axis");
    c_fit->add_option("--omega", omega_flag, "mechanical frequency for normalization");
    c_fit->add_option("--resamples", fo.resamples, "bootstrap resamples (default 200)");

    CLI11_PARSE(app, argc, argv);

    using sideband::cli::guarded;
    if (c_si->parsed())
        return guarded(std::cerr, [&] { return sideband::cli::run_si(load(g), std::cout); });
    if (c_sweep->parsed())
        return guarded(std::cerr, [&] { return sideband::cli::run_sweep(load(g), std::cout); });
    if (c_opt->parsed())
        return guarded(std::cerr, [&] { return sideband::cli::run_optimum(load(g), std::cout); });
    if (c_cls->parsed())
        return guarded(std::cerr, [&] { return sideband::cli::run_classify(load(g), std::cout); });
    if (c_sim->parsed())
        return guarded(std::cerr, [&] { return sideband::cli::run_simulate(load(g), std::cout); });
    if (c_fit->parsed())
        return guarded(std::cerr, [&] {
            if (omega_flag > 0.0) fo.omega = omega_flag;
            return sideband::cli::run_fit(load_minimal(g), spectrum_path, fo, std::cout,
                                          std::cerr);
        });
    if (c_synth->parsed())
        return guarded(std::cerr,
                       [&] { return sideband::cli::run_synth(load_minimal(g), std::cout); });
    return 2;
}
