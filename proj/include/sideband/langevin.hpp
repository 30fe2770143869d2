#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "sideband/errors.hpp"
#include "sideband/fft.hpp"
#include "sideband/params.hpp"
#include "sideband/spectral.hpp"

namespace sideband {

// Classical-limit time-domain run. Times are in the same unit system as the
// rates in OmParams (seconds when rates are rad/s).
struct SimConfig {
    double dt = 0.0;
    double duration = 0.0;
    double drive_amplitude = 0.0;    // enters the optical equation directly
    double thermal_occupation = 0.0; // mechanical bath occupation; 0 = deterministic
    std::uint64_t seed = 0;
    double transient_fraction = 0.1;
    complexd initial_phonon = 0.0; // b(0); a real seed excites the side-bands
    complexd initial_optical = 0.0;

    void validate(const OmParams& p) const {
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw ValidationError("SimConfig: dt must be > 0");
        if (dt * p.mech_freq > 0.05 * (1.0 + 1e-12))
            throw ValidationError("SimConfig: dt * mech_freq must be <= 0.05");
        if (!(duration >= 16384.0 * dt))
            throw ValidationError("SimConfig: duration must be >= 2^14 * dt");
        if (duration / dt > 2.2e7)
            throw ValidationError("SimConfig: too many samples");
        if (!(transient_fraction >= 0.0 && transient_fraction < 1.0))
            throw ValidationError("SimConfig: transient_fraction must be in [0,1)");
        if (!(thermal_occupation >= 0.0))
            throw ValidationError("SimConfig: thermal_occupation must be >= 0");
        if (!(drive_amplitude >= 0.0))
            throw ValidationError("SimConfig: drive_amplitude must be >= 0");
    }
};

struct Trajectory {
    double dt = 0.0;
    std::vector<double> t;
    std::vector<complexd> a, b;
};

// Fixed-step RK4 on the deterministic part; additive Euler-Maruyama noise on
// the mechanical quadratures when thermal_occupation > 0. The optical field
// is evolved in the frame where the drive is constant.
inline Trajectory integrate_classical(const OmParams& p, const SimConfig& cfg) {
    p.validate(true);
    cfg.validate(p);
    const std::size_t n = static_cast<std::size_t>(std::llround(cfg.duration / cfg.dt));
    const double dt = cfg.dt;
    const complexd ca(-0.5 * p.optical_decay, p.detuning);
    const complexd cb(-0.5 * p.mech_decay, -p.mech_freq);
    const complexd ig(0.0, p.coupling);
    const double drive = cfg.drive_amplitude;

    auto da = [&](const complexd& a, const complexd& b) {
        return ca * a + ig * a * (2.0 * b.real()) + drive;
    };

    Trajectory tr;
    tr.dt = dt;
    tr.t.resize(n);
    tr.a.resize(n);
    tr.b.resize(n);

    complexd a = cfg.initial_optical, b = cfg.initial_phonon;
    const double scale0 =
        std::max({1.0, std::abs(a), std::abs(b),
                  p.optical_decay > 0.0 ? 2.0 * drive / p.optical_decay : 0.0});
    const double blowup = 1e6 * scale0;

    std::mt19937_64 rng(detail::split_seed(cfg.seed, 0));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double noise_amp = cfg.thermal_occupation > 0.0
                                 ? std::sqrt(0.5 * p.mech_decay * cfg.thermal_occupation * dt)
                                 : 0.0;

    for (std::size_t k = 0; k < n; ++k) {
        tr.t[k] = double(k) * dt;
        tr.a[k] = a;
        tr.b[k] = b;

        const complexd ka1 = da(a, b);
        const complexd kb1 = cb * b - ig * std::norm(a);
        const complexd a2 = a + 0.5 * dt * ka1, b2 = b + 0.5 * dt * kb1;
        const complexd ka2 = da(a2, b2);
        const complexd kb2 = cb * b2 - ig * std::norm(a2);
        const complexd a3 = a + 0.5 * dt * ka2, b3 = b + 0.5 * dt * kb2;
        const complexd ka3 = da(a3, b3);
        const complexd kb3 = cb * b3 - ig * std::norm(a3);
        const complexd a4 = a + dt * ka3, b4 = b + dt * kb3;
        const complexd ka4 = da(a4, b4);
        const complexd kb4 = cb * b4 - ig * std::norm(a4);

        a += dt / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4);
        b += dt / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4);
        if (noise_amp > 0.0) b += complexd(noise_amp * gauss(rng), noise_amp * gauss(rng));

        if (!(std::abs(a) < blowup) || !(std::abs(b) < blowup) || !std::isfinite(a.real()))
            throw Instability("integrate_classical: sample exceeded 1e6 x initial scale at t=" +
                              std::to_string(tr.t[k]));
    }
    return tr;
}

// Samples after the configured transient cut.
inline std::vector<complexd> trajectory_tail(const Trajectory& tr, double transient_fraction) {
    const std::size_t n = tr.a.size();
    const std::size_t start = static_cast<std::size_t>(transient_fraction * double(n));
    return std::vector<complexd>(tr.a.begin() + start, tr.a.end());
}

// Configures a run sitting on the self-consistent fixed point with the given
// photon number: the pump is placed on the shifted resonance, the drive level
// makes n_target a steady state, and the initial optical/mechanical
// amplitudes are the fixed-point values plus a mechanical seed that excites
// the side-bands. Needed to reach the upper branch at strong drive, where
// starting from vacuum would settle on the low-photon branch.
struct PreparedRun {
    OmParams params;
    SimConfig config;
    double nbar = 0.0;
};

inline PreparedRun prepare_resonant_run(OmParams p, SimConfig cfg, double n_target,
                                        double phonon_seed) {
    if (!(n_target > 0.0))
        throw ValidationError("prepare_resonant_run: n_target must be > 0");
    const double w = p.mech_freq * p.mech_freq + 0.25 * p.mech_decay * p.mech_decay;
    const double k2 = 2.0 * p.coupling * p.coupling * p.mech_freq / w;
    p.detuning = k2 * n_target;
    cfg.drive_amplitude = std::sqrt(n_target) * 0.5 * p.optical_decay;
    cfg.initial_optical = std::sqrt(n_target); // drive/(kappa/2) on resonance
    const complexd b_ss = complexd(0.0, -p.coupling * n_target) /
                          complexd(0.5 * p.mech_decay, p.mech_freq);
    cfg.initial_phonon = b_ss + phonon_seed;
    PreparedRun out;
    out.params = p;
    out.config = cfg;
    out.nbar = n_target;
    return out;
}

struct WelchOptions {
    std::size_t segment_length = 0; // power of two; 0 = largest fitting the record
    double overlap = 0.5;
    enum class Window { Hann, Rect } window = Window::Hann;
};

// Welch-averaged two-sided power spectral density of a complex series. The
// global mean is removed first, so the integral of the density over angular
// frequency equals the time-domain variance (Parseval, up to leakage).
inline Spectrum welch_psd(const std::vector<complexd>& x, double dt, WelchOptions opt = {}) {
    if (x.size() < 4) throw ValidationError("welch_psd: series too short");
    if (opt.segment_length == 0) {
        std::size_t L = 1;
        while (L * 2 <= x.size()) L *= 2;
        opt.segment_length = L;
    }
    const std::size_t L = opt.segment_length;
    if (!detail::is_pow2(L))
        throw ValidationError("welch_psd: segment_length must be a power of two");
    if (L > x.size())
        throw SegmentTooLong("welch_psd: segment longer than the record");
    if (!(opt.overlap >= 0.0 && opt.overlap <= 0.95))
        throw ValidationError("welch_psd: overlap must be in [0, 0.95]");

    complexd mean(0.0, 0.0);
    for (const auto& v : x) mean += v;
    mean /= double(x.size());

    std::vector<double> win(L, 1.0);
    if (opt.window == WelchOptions::Window::Hann)
        for (std::size_t i = 0; i < L; ++i)
            win[i] = 0.5 * (1.0 - std::cos(2.0 * pi * double(i) / double(L - 1)));
    double wsq = 0.0;
    for (double w : win) wsq += w * w;

    const std::size_t hop =
        std::max<std::size_t>(1, L - static_cast<std::size_t>(std::llround(opt.overlap * L)));
    std::vector<double> acc(L, 0.0);
    std::vector<complexd> seg(L);
    std::size_t nseg = 0;
    for (std::size_t k0 = 0; k0 + L <= x.size(); k0 += hop) {
        for (std::size_t i = 0; i < L; ++i) seg[i] = win[i] * (x[k0 + i] - mean);
        detail::fft_radix2(seg);
        for (std::size_t i = 0; i < L; ++i) acc[i] += std::norm(seg[i]);
        ++nseg;
    }

    Spectrum s;
    s.freq.resize(L);
    s.value.resize(L);
    const double scale = dt / (double(nseg) * wsq * 2.0 * pi);
    const double dw = 2.0 * pi / (double(L) * dt);
    for (std::size_t i = 0; i < L; ++i) {
        const long k = long(i) - long(L / 2);
        const std::size_t src = (i + L / 2) % L; // fftshift
        s.freq[i] = double(k) * dw;
        s.value[i] = acc[src] * scale;
    }
    return s;
}

inline Spectrum psd(const Trajectory& tr, const WelchOptions& opt = {}) {
    return welch_psd(tr.a, tr.dt, opt);
}

struct MeasureOptions {
    WelchOptions welch;
    double injected_red_shift = 0.0; // test hook: relabels the red-window axis
    int bootstrap_resamples = 200;
    std::uint64_t seed = 1;
    int workers = 1;
};

struct SimSiResult {
    SiEstimate estimate;
    double fit_se = 0.0;    // 1-sigma center-sum error from the fit covariance
    double bin_width = 0.0; // rad/s
    LorentzianPeak red, blue;
    Spectrum spectrum;
};

namespace detail {

struct WindowFit {
    Spectrum sub;
    LorentzianFit fit;
};

inline WindowFit fit_peak_window(const Spectrum& s, double f_lo, double f_hi) {
    WindowFit wf;
    for (std::size_t i = 0; i < s.freq.size(); ++i)
        if (s.freq[i] >= f_lo && s.freq[i] <= f_hi) {
            wf.sub.freq.push_back(s.freq[i]);
            wf.sub.value.push_back(s.value[i]);
        }
    if (wf.sub.freq.size() < 16)
        throw NoPeaksFound("measure_si: peak window too narrow");
    double vmax = 0.0, vsum = 0.0;
    for (double v : wf.sub.value) {
        vmax = std::max(vmax, v);
        vsum += std::abs(v);
    }
    const double vmed = vsum / double(wf.sub.value.size());
    if (!(vmax > 0.0) || !(vmax > 10.0 * vmed))
        throw NoPeaksFound("measure_si: no side-band peak above the floor");
    wf.fit = fit_lorentzians(wf.sub, 1);
    return wf;
}

} // namespace detail

// Classical no-shift measurement: integrate, estimate the spectrum, fit the
// two first-order side-bands and convert the pair of centers to a shift.
inline SimSiResult measure_si_from_sim(const OmParams& p, const SimConfig& cfg,
                                       const MeasureOptions& opt = {}) {
    const Trajectory tr = integrate_classical(p, cfg);
    std::vector<complexd> tail = trajectory_tail(tr, cfg.transient_fraction);
    SimSiResult out;
    out.spectrum = welch_psd(tail, tr.dt, opt.welch);
    const Spectrum& s = out.spectrum;
    out.bin_width = s.freq[1] - s.freq[0];

    const double om = p.mech_freq;
    Spectrum work = s;
    if (opt.injected_red_shift != 0.0) {
        for (std::size_t i = 0; i < work.freq.size(); ++i)
            if (work.freq[i] > 0.5 * om && work.freq[i] < 1.5 * om)
                work.freq[i] += opt.injected_red_shift;
    }

    auto red = detail::fit_peak_window(work, 0.5 * om, 1.5 * om);
    auto blue = detail::fit_peak_window(work, -1.5 * om, -0.5 * om);
    out.red = red.fit.peaks[0];
    out.blue = blue.fit.peaks[0];

    out.estimate = extract_si(out.red, out.blue, 0.0, false, om);
    out.estimate.fit_rms = std::hypot(red.fit.rms, blue.fit.rms);
    out.estimate.n_peaks_used = 2;

    const double var_r = red.fit.cov.empty() ? 0.0 : red.fit.cov[0];
    const double var_b = blue.fit.cov.empty() ? 0.0 : blue.fit.cov[0];
    out.fit_se = std::sqrt(std::max(0.0, var_r) + std::max(0.0, var_b));

    // joint residual-resampling interval over both windows
    if (opt.bootstrap_resamples > 0) {
        const int nb = opt.bootstrap_resamples;
        std::vector<double> stats;
        stats.reserve(nb);
        auto resample = [&](const detail::WindowFit& wf, std::mt19937_64& rng) {
            const int mm = static_cast<int>(wf.sub.freq.size());
            std::vector<double> model(mm), resid(mm);
            for (int i = 0; i < mm; ++i) {
                model[i] = wf.fit.model(wf.sub.freq[i]);
                resid[i] = wf.sub.value[i] - model[i];
            }
            Spectrum rs = wf.sub;
            std::uniform_int_distribution<int> pick(0, mm - 1);
            for (int i = 0; i < mm; ++i) rs.value[i] = model[i] + resid[pick(rng)];
            return fit_lorentzians(rs, 1, wf.fit).peaks[0].center;
        };
        int failed = 0;
        for (int k = 0; k < nb; ++k) {
            std::mt19937_64 rng(detail::split_seed(opt.seed, std::uint64_t(k)));
            try {
                const double cr = resample(red, rng);
                const double cb = resample(blue, rng);
                stats.push_back(cr + cb);
            } catch (const ComputationError&) {
                ++failed;
            }
        }
        if (failed > nb / 5)
            throw FitDiverged("measure_si: too many bootstrap resamples diverged");
        std::sort(stats.begin(), stats.end());
        auto quantile = [&](double q) {
            const double pos = q * (stats.size() - 1);
            const std::size_t lo = std::size_t(std::floor(pos));
            const std::size_t hi = std::min(lo + 1, stats.size() - 1);
            const double t = pos - double(lo);
            return (1.0 - t) * stats[lo] + t * stats[hi];
        };
        out.estimate.ci_low = std::min(quantile(0.025), out.estimate.delta_hat);
        out.estimate.ci_high = std::max(quantile(0.975), out.estimate.delta_hat);
    }
    return out;
}

} // namespace sideband
