#pragma once

#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sideband/closed_form.hpp"
#include "sideband/config.hpp"
#include "sideband/harmonic_balance.hpp"
#include "sideband/io.hpp"
#include "sideband/langevin.hpp"
#include "sideband/params.hpp"
#include "sideband/spectral.hpp"

namespace sideband::cli {

inline int effective_workers(const RunConfig& rc) {
    if (rc.workers > 0) return rc.workers;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc > 0 ? static_cast<int>(hc) : 1;
}

inline double resolve_nbar(const RunConfig& rc, std::vector<double>* roots_out = nullptr,
                           bool* bistable_out = nullptr) {
    if (rc.nbar) {
        if (!(*rc.nbar >= 0.0)) throw ValidationError("config: si.nbar must be >= 0");
        return *rc.nbar;
    }
    if (!rc.drive)
        throw ValidationError("config: provide si.nbar or a [drive] section");
    const PhotonSteadyState ss = steady_state_photon(rc.params, *rc.drive);
    if (roots_out) *roots_out = ss.roots;
    if (bistable_out) *bistable_out = ss.bistable;
    return ss.roots.front(); // low branch
}

inline json si_result_json(const SiResult& r) {
    json j{{"delta", r.delta},
           {"delta_normalized", r.delta_normalized},
           {"method", to_string(r.method)},
           {"valid", r.valid}};
    if (r.method == SiMethod::Full) {
        j["delta_complex_route"] = r.delta_alt;
        j["routes_diverge"] = r.routes_diverge;
    }
    if (r.method == SiMethod::Quadratic) j["im_ratio"] = r.im_ratio;
    if (r.method == SiMethod::Linearized) j["delta_coarse"] = r.delta_coarse;
    return j;
}

inline json regime_json(const RegimeReport& rep) {
    return json{{"regime", to_string(rep.regime)},
                {"nbar_max", rep.nbar_max},
                {"nbar_max_approx", rep.nbar_max_approx},
                {"nbar_max_numeric", rep.nbar_max_numeric},
                {"delta_max", rep.delta_max},
                {"delta_max_approx", rep.delta_max_approx},
                {"nbar_linewidth", rep.nbar_linewidth},
                {"asymptotic_delta", rep.asymptotic_delta}};
}

inline json params_json(const OmParams& p) {
    return json{{"mech_freq", p.mech_freq},
                {"optical_decay", p.optical_decay},
                {"mech_decay", p.mech_decay},
                {"coupling", p.coupling},
                {"detuning", p.detuning}};
}

inline void maybe_write(const RunConfig& rc, const std::string& name, const json& j) {
    if (rc.out_dir.empty()) return;
    std::filesystem::create_directories(rc.out_dir);
    write_json((std::filesystem::path(rc.out_dir) / name).string(), j);
}

// All closed-form views of the shift at one operating point.
inline int run_si(const RunConfig& rc, std::ostream& out) {
    rc.params.validate();
    std::vector<double> roots;
    bool bistable = false;
    const double nbar = resolve_nbar(rc, &roots, &bistable);

    json j;
    j["params"] = params_json(rc.params);
    j["nbar"] = nbar;
    if (!roots.empty()) {
        j["photon_roots"] = roots;
        j["bistable"] = bistable;
    }
    j["cavity"] = to_string(classify_cavity(rc.params));
    j["resolution_ratio"] = sideband_resolution_ratio(rc.params);

    const DimGroups g = dimensionless_groups(rc.params);
    const auto [quad, qroots] = si_quadratic(rc.params, nbar);
    json methods;
    methods["full"] = si_result_json(si_full(rc.params, nbar));
    methods["quadratic"] = si_result_json(quad);
    methods["quadratic"]["roots"] = json::array(
        {json::array({qroots.selected.real(), qroots.selected.imag()}),
         json::array({qroots.other.real(), qroots.other.imag()})});
    methods["resolved"] = si_result_json(si_resolved(rc.params, nbar));
    methods["linearized"] = si_result_json(si_linearized(rc.params, nbar));
    methods["dimensionless"] =
        si_result_json(si_normalized_form(g, rc.params.mech_freq, nbar));
    j["methods"] = methods;

    if (rc.params.coupling > 0.0) {
        j["regime"] = regime_json(classify_regime(rc.params, nbar));
        j["optimum"] = regime_json(optimum(rc.params));
    } else {
        j["regime"] = nullptr;
        j["optimum"] = nullptr;
    }
    const AsymmetryResult asym = population_asymmetry(rc.params, nbar);
    j["asymmetry"] = json{{"population_difference", asym.population_difference},
                          {"normalized", asym.normalized}};

    out << j.dump(2) << "\n";
    maybe_write(rc, "si_report.json", j);
    return 0;
}

struct SweepRow {
    double value = 0.0, nbar = 0.0;
    SiResult full, quad, resolved, linearized, dimensionless;
    std::string regime;
    double asym = 0.0;
};

// One row per grid point, computed on a worker pool but emitted in
// deterministic sweep order.
inline int run_sweep(const RunConfig& rc, std::ostream& out) {
    rc.params.validate();
    if (!rc.sweep) throw ValidationError("config: sweep section required");
    const SweepSpec& sw = *rc.sweep;
    const bool over_nbar = sw.variable == "nbar";
    double base_nbar = 0.0;
    if (!over_nbar) base_nbar = resolve_nbar(rc);

    std::vector<double> grid(sw.points);
    for (long i = 0; i < sw.points; ++i) {
        const double t = sw.points == 1 ? 0.0 : double(i) / double(sw.points - 1);
        grid[i] = sw.log_scale ? sw.from * std::pow(sw.to / sw.from, t)
                               : sw.from + (sw.to - sw.from) * t;
    }

    auto eval_row = [&](double v) {
        OmParams p = rc.params;
        double nbar = over_nbar ? v : base_nbar;
        if (sw.variable == "mech_freq") p.mech_freq = v;
        else if (sw.variable == "optical_decay") p.optical_decay = v;
        else if (sw.variable == "mech_decay") p.mech_decay = v;
        else if (sw.variable == "coupling") p.coupling = v;
        else if (sw.variable == "detuning") p.detuning = v;
        else if (!over_nbar)
            throw ValidationError("config: unknown sweep.variable '" + sw.variable + "'");
        SweepRow row;
        row.value = v;
        row.nbar = nbar;
        row.full = si_full(p, nbar);
        row.quad = si_quadratic(p, nbar).first;
        row.resolved = si_resolved(p, nbar);
        row.linearized = si_linearized(p, nbar);
        row.dimensionless = si_normalized_form(dimensionless_groups(p), p.mech_freq, nbar);
        row.regime = p.coupling > 0.0 ? to_string(classify_regime(p, nbar).regime) : "n/a";
        row.asym = population_asymmetry(p, nbar).normalized;
        return row;
    };

    std::vector<SweepRow> rows(grid.size());
    const int workers = std::min<long>(effective_workers(rc), sw.points);
    if (workers <= 1) {
        for (std::size_t i = 0; i < grid.size(); ++i) rows[i] = eval_row(grid[i]);
    } else {
        std::vector<std::future<void>> fut;
        const std::size_t chunk = (grid.size() + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t i0 = w * chunk, i1 = std::min(grid.size(), i0 + chunk);
            if (i0 >= i1) break;
            fut.push_back(std::async(std::launch::async, [&, i0, i1] {
                for (std::size_t i = i0; i < i1; ++i) rows[i] = eval_row(grid[i]);
            }));
        }
        for (auto& f : fut) f.get();
    }

    std::ostringstream csv;
    csv << "# variable = " << sw.variable << "\n";
    csv << "variable_value,nbar,delta_full,delta_quadratic,delta_resolved,delta_linearized,"
           "delta_dimensionless,delta_normalized,regime,asymmetry_normalized\n";
    for (const auto& r : rows) {
        csv << fmt_g17(r.value) << "," << fmt_g17(r.nbar) << "," << fmt_g17(r.full.delta)
            << "," << fmt_g17(r.quad.delta) << "," << fmt_g17(r.resolved.delta) << ","
            << fmt_g17(r.linearized.delta) << "," << fmt_g17(r.dimensionless.delta) << ","
            << fmt_g17(r.full.delta_normalized) << "," << r.regime << ","
            << fmt_g17(r.asym) << "\n";
    }
    out << csv.str();
    if (!rc.out_dir.empty()) {
        std::filesystem::create_directories(rc.out_dir);
        std::ofstream f(std::filesystem::path(rc.out_dir) / "sweep.csv");
        f << csv.str();
    }
    return 0;
}

inline int run_optimum(const RunConfig& rc, std::ostream& out) {
    rc.params.validate();
    const json j = regime_json(optimum(rc.params));
    out << j.dump(2) << "\n";
    maybe_write(rc, "optimum.json", j);
    return 0;
}

inline int run_classify(const RunConfig& rc, std::ostream& out) {
    rc.params.validate();
    const double nbar = resolve_nbar(rc);
    json j = regime_json(classify_regime(rc.params, nbar));
    j["nbar"] = nbar;
    out << j.dump(2) << "\n";
    maybe_write(rc, "classify.json", j);
    return 0;
}

// Time-domain pipeline: trajectory, spectrum and the extracted shift.
inline int run_simulate(const RunConfig& rc, std::ostream& out) {
    rc.params.validate(true);
    if (!rc.raw.has_section("simulate"))
        throw ValidationError("config: simulate section required");
    const KeyValues& kv = rc.raw;
    const double om = rc.params.mech_freq;

    OmParams params = rc.params;
    SimConfig cfg;
    cfg.dt = kv.get_double("simulate", "dt", 0.05) / om;
    cfg.duration = kv.get_double("simulate", "duration", 131072.0 * 0.05) / om;
    cfg.drive_amplitude = kv.get_double("simulate", "drive_amplitude", 0.0);
    cfg.thermal_occupation = kv.get_double("simulate", "thermal_occupation", 0.0);
    cfg.seed = static_cast<std::uint64_t>(kv.get_long("simulate", "seed", long(rc.seed)));
    cfg.transient_fraction = kv.get_double("simulate", "transient_fraction", 0.25);
    cfg.initial_phonon = kv.get_double("simulate", "initial_phonon", 1.0);
    cfg.initial_optical = kv.get_double("simulate", "initial_optical", 0.0);
    if (const auto pn = kv.get_double("simulate", "prepare_nbar")) {
        const PreparedRun prep = prepare_resonant_run(
            params, cfg, *pn, kv.get_double("simulate", "phonon_seed", 1.0));
        params = prep.params;
        cfg = prep.config;
    }

    MeasureOptions mo;
    mo.welch.segment_length =
        static_cast<std::size_t>(kv.get_long("simulate", "segment_length", 0));
    mo.injected_red_shift = kv.get_double("simulate", "injected_shift", 0.0) * om;
    mo.bootstrap_resamples = static_cast<int>(kv.get_long("simulate", "resamples", 200));
    mo.seed = cfg.seed + 1;
    mo.workers = effective_workers(rc);

    const Trajectory tr = integrate_classical(params, cfg);
    const SimSiResult res = measure_si_from_sim(params, cfg, mo);

    json j;
    j["params"] = params_json(params);
    j["estimate"] = si_estimate_to_json(res.estimate);
    j["fit_se"] = res.fit_se;
    j["bin_width"] = res.bin_width;
    j["red_center"] = res.red.center;
    j["blue_center"] = res.blue.center;
    const bool zero_consistent = std::abs(res.estimate.delta_hat) < res.bin_width &&
                                 std::abs(res.estimate.delta_hat) < 3.0 * res.fit_se;
    j["classical_consistent_with_zero"] = zero_consistent;
    if (zero_consistent) j["note"] = "classical regime: delta consistent with 0";

    out << j.dump(2) << "\n";
    if (!rc.out_dir.empty()) {
        std::filesystem::create_directories(rc.out_dir);
        const std::filesystem::path dir(rc.out_dir);
        write_trajectory_csv((dir / "trajectory.csv").string(), tr);
        write_spectrum_csv((dir / "spectrum.csv").string(), res.spectrum,
                           "two-sided PSD, offsets from the pump (rad/s)");
        write_json((dir / "estimate.json").string(), j);
    }
    return 0;
}

struct FitCliOptions {
    int n_peaks = 3;
    bool folded = false;
    double pump_offset = 0.0;
    std::optional<double> omega;
    int resamples = 200;
};

inline int run_fit(const RunConfig& rc, const std::string& spectrum_path,
                   const FitCliOptions& fo, std::ostream& out, std::ostream& err) {
    const SpectrumReadResult rd = read_spectrum_csv(spectrum_path);
    if (rd.resorted) err << "warning: spectrum grid was not monotone; re-sorted\n";

    SiPipelineOptions po;
    po.pump_offset = fo.pump_offset;
    po.folded = fo.folded;
    po.omega = fo.omega;
    po.bootstrap.resamples = fo.resamples;
    po.bootstrap.seed = rc.seed;
    po.bootstrap.workers = effective_workers(rc);
    po.with_ci = fo.resamples > 0;

    const SiPipelineResult res = estimate_si(rd.spectrum, fo.n_peaks, po);
    json j = si_estimate_to_json(res.estimate);
    const double omega_used =
        fo.omega ? *fo.omega
                 : 0.5 * (res.fit.peaks.back().center - res.fit.peaks.front().center);
    j["omega_used"] = omega_used;
    j["delta_normalized_second_order"] = res.estimate.delta_hat / (2.0 * omega_used);
    json peaks = json::array();
    for (const auto& pk : res.fit.peaks)
        peaks.push_back(json{{"center", pk.center}, {"fwhm", pk.fwhm},
                             {"amplitude", pk.amplitude}});
    j["peaks"] = peaks;
    j["baseline"] = res.fit.baseline;

    out << j.dump(2) << "\n";
    maybe_write(rc, "estimate.json", j);
    return 0;
}

// Reference synthetic doublet: side peaks at -Omega + delta/2 and
// +Omega + delta/2 with width 0.1 Omega, central line of width 0.2 Omega.
inline int run_synth(const RunConfig& rc, std::ostream& out) {
    const KeyValues& kv = rc.raw;
    const double om = kv.get_double("synth", "omega", 1.0);
    const double dnorm = kv.get_double("synth", "delta_normalized", 0.02);
    const double snr = kv.get_double("synth", "snr_db", 30.0);
    const std::uint64_t seed =
        static_cast<std::uint64_t>(kv.get_long("synth", "seed", long(rc.seed)));
    const double span = kv.get_double("synth", "span", 2.0) * om;
    const long points = kv.get_long("synth", "points", 4001);
    if (points < 16) throw ValidationError("config: synth.points too small");

    const double delta = dnorm * om;
    std::vector<LorentzianPeak> peaks{
        {-om + 0.5 * delta, kv.get_double("synth", "fwhm_side", 0.1) * om,
         kv.get_double("synth", "height_blue", 0.45)},
        {0.0, kv.get_double("synth", "fwhm_center", 0.2) * om,
         kv.get_double("synth", "height_center", 1.0)},
        {om + 0.5 * delta, kv.get_double("synth", "fwhm_side", 0.1) * om,
         kv.get_double("synth", "height_red", 0.55)}};
    std::vector<double> grid(points);
    for (long i = 0; i < points; ++i)
        grid[i] = -span + 2.0 * span * double(i) / double(points - 1);

    std::optional<NoiseSpec> noise;
    if (snr > 0.0) noise = NoiseSpec{snr, seed};
    const Spectrum s = synth_spectrum(peaks, grid, noise);
    write_spectrum_csv(out, s, "synthetic side-band doublet");
    if (!rc.out_dir.empty()) {
        std::filesystem::create_directories(rc.out_dir);
        write_spectrum_csv(
            (std::filesystem::path(rc.out_dir) / "synthetic_spectrum.csv").string(), s,
            "synthetic side-band doublet");
    }
    return 0;
}

// Maps exceptions onto the documented exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ComputationError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace sideband::cli
