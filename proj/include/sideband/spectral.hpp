#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "sideband/errors.hpp"
#include "sideband/params.hpp"

namespace sideband {

struct Spectrum {
    std::vector<double> freq;  // rad/s (or any consistent unit), ascending
    std::vector<double> value; // spectral density, arbitrary units
    std::vector<double> sigma; // per-point uncertainty; empty when unknown

    // Re-sorts a non-monotone grid in place; returns true when reordering
    // happened. Duplicate frequencies are rejected.
    bool ensure_sorted() {
        if (freq.size() != value.size() || (!sigma.empty() && sigma.size() != freq.size()))
            throw ValidationError("Spectrum: column size mismatch");
        for (double f : freq)
            if (!std::isfinite(f)) throw ValidationError("Spectrum: non-finite frequency");
        for (double v : value)
            if (!std::isfinite(v)) throw ValidationError("Spectrum: non-finite value");
        bool sorted = std::is_sorted(freq.begin(), freq.end());
        if (!sorted) {
            std::vector<std::size_t> idx(freq.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return freq[a] < freq[b]; });
            auto permute = [&](std::vector<double>& v) {
                std::vector<double> out(v.size());
                for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
                v = std::move(out);
            };
            permute(freq);
            permute(value);
            if (!sigma.empty()) permute(sigma);
        }
        for (std::size_t i = 1; i < freq.size(); ++i)
            if (!(freq[i] > freq[i - 1]))
                throw ValidationError("Spectrum: duplicate frequency sample");
        return !sorted;
    }
};

struct LorentzianPeak {
    double center = 0.0;
    double fwhm = 0.0;
    double amplitude = 0.0; // peak height above baseline
};

struct SiEstimate {
    double delta_hat = 0.0;
    double delta_hat_normalized = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double fit_rms = 0.0;
    int n_peaks_used = 0;
};

struct NoiseSpec {
    double snr_db = 30.0;
    std::uint64_t seed = 0;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
    return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ull));
}

inline double lorentz(double f, const LorentzianPeak& pk) {
    const double h = 0.5 * pk.fwhm;
    const double d = f - pk.center;
    return pk.amplitude * h * h / (d * d + h * h + 1e-300);
}

} // namespace detail

// Sum of Lorentzians on the given grid plus seeded white noise. The noise
// level is set relative to the tallest model value: sigma = max * 10^(-snr/20).
inline Spectrum synth_spectrum(const std::vector<LorentzianPeak>& peaks,
                               const std::vector<double>& grid,
                               const std::optional<NoiseSpec>& noise = {}) {
    if (grid.size() < 2) throw ValidationError("synth_spectrum: grid too short");
    for (const auto& pk : peaks) {
        if (!(pk.fwhm > 0.0)) throw ValidationError("synth_spectrum: fwhm must be > 0");
        if (pk.center < grid.front() || pk.center > grid.back())
            throw ValidationError("synth_spectrum: peak center outside grid");
    }
    Spectrum s;
    s.freq = grid;
    s.value.resize(grid.size());
    double peak_value = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double v = 0.0;
        for (const auto& pk : peaks) v += detail::lorentz(grid[i], pk);
        s.value[i] = v;
        peak_value = std::max(peak_value, std::abs(v));
    }
    if (noise) {
        const double sd = peak_value * std::pow(10.0, -noise->snr_db / 20.0);
        std::mt19937_64 rng(detail::split_seed(noise->seed, 0));
        std::normal_distribution<double> nd(0.0, sd);
        for (double& v : s.value) v += nd(rng);
        s.sigma.assign(grid.size(), sd);
    }
    s.ensure_sorted();
    return s;
}

// Converged multi-Lorentzian description of a spectrum. Parameter order in
// the covariance matrix: [center, fwhm, amplitude] per peak, then baseline.
struct LorentzianFit {
    std::vector<LorentzianPeak> peaks; // ascending centers
    double baseline = 0.0;
    std::vector<double> cov; // p*p row-major; empty when not available
    double rms = 0.0;
    double cost = 0.0; // 0.5 * sum of squared (weighted) residuals
    int iterations = 0;

    double model(double f) const {
        double v = baseline;
        for (const auto& pk : peaks) v += detail::lorentz(f, pk);
        return v;
    }
};

namespace detail {

inline void lm_fill_jacobian_row(double f, const std::vector<double>& th, int n_peaks,
                                 double* row) {
    for (int j = 0; j < n_peaks; ++j) {
        const double c = th[3 * j], h = 0.5 * th[3 * j + 1], A = th[3 * j + 2];
        const double d = f - c;
        const double den = d * d + h * h + 1e-300;
        const double den2 = den * den;
        row[3 * j] = A * h * h * 2.0 * d / den2;
        row[3 * j + 1] = A * h * d * d / den2;
        row[3 * j + 2] = h * h / den;
    }
    row[3 * n_peaks] = 1.0;
}

inline double lm_model(double f, const std::vector<double>& th, int n_peaks) {
    double v = th[3 * n_peaks];
    for (int j = 0; j < n_peaks; ++j) {
        const double c = th[3 * j], h = 0.5 * th[3 * j + 1], A = th[3 * j + 2];
        const double d = f - c;
        v += A * h * h / (d * d + h * h + 1e-300);
    }
    return v;
}

// Symmetric positive-definite-ish solve / inverse by Gauss-Jordan with
// partial pivoting. Returns false on singularity.
inline bool gauss_jordan(std::vector<double>& a, int n) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<double> inv(n * n, 0.0);
    for (int i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (!(std::abs(a[piv * n + col]) > 0.0)) return false;
        if (piv != col)
            for (int c = 0; c < n; ++c) {
                std::swap(a[col * n + c], a[piv * n + c]);
                std::swap(inv[col * n + c], inv[piv * n + c]);
            }
        const double d = a[col * n + col];
        for (int c = 0; c < n; ++c) {
            a[col * n + c] /= d;
            inv[col * n + c] /= d;
        }
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r * n + col];
            if (f == 0.0) continue;
            for (int c = 0; c < n; ++c) {
                a[r * n + c] -= f * a[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    a = std::move(inv);
    return true;
}

} // namespace detail

// Damped least squares over peak centers, widths, heights and a constant
// baseline. Accepted steps never increase the cost. Initial guesses come
// from a local-maxima scan unless an explicit starting fit is supplied.
inline LorentzianFit fit_lorentzians(const Spectrum& input, int n_peaks,
                                     const std::optional<LorentzianFit>& init = {}) {
    if (n_peaks < 1) throw ValidationError("fit_lorentzians: n_peaks must be >= 1");
    Spectrum s = input;
    s.ensure_sorted();
    const int m = static_cast<int>(s.freq.size());
    const int np = 3 * n_peaks + 1;
    if (m < np) throw ValidationError("fit_lorentzians: fewer samples than parameters");

    const bool weighted = !s.sigma.empty();
    std::vector<double> th(np, 0.0);

    if (init) {
        if (static_cast<int>(init->peaks.size()) != n_peaks)
            throw ValidationError("fit_lorentzians: init peak count mismatch");
        for (int j = 0; j < n_peaks; ++j) {
            th[3 * j] = init->peaks[j].center;
            th[3 * j + 1] = init->peaks[j].fwhm;
            th[3 * j + 2] = init->peaks[j].amplitude;
        }
        th[3 * n_peaks] = init->baseline;
    } else {
        // tallest maximum first; each pick masks out its own half-max
        // neighborhood so noise spikes riding on one peak are not counted
        // as separate peaks
        std::vector<double> base_sorted = s.value;
        std::nth_element(base_sorted.begin(), base_sorted.begin() + m / 20, base_sorted.end());
        const double base0 = base_sorted[m / 20];
        const double med_step = (s.freq.back() - s.freq.front()) / (m - 1);
        double global_max = base0;
        for (double v : s.value) global_max = std::max(global_max, v);

        std::vector<char> masked(m, 0);
        std::vector<int> picked;
        std::vector<double> widths;
        for (int pick = 0; pick < n_peaks; ++pick) {
            int imax = -1;
            for (int i = 0; i < m; ++i)
                if (!masked[i] && (imax < 0 || s.value[i] > s.value[imax])) imax = i;
            if (imax < 0 || s.value[imax] - base0 <= 0.1 * (global_max - base0))
                throw NoPeaksFound("fit_lorentzians: found " + std::to_string(pick) +
                                   " maxima, need " + std::to_string(n_peaks));
            const double half = base0 + 0.5 * (s.value[imax] - base0);
            int l = imax, r = imax;
            while (l > 0 && s.value[l] > half) --l;
            while (r + 1 < m && s.value[r] > half) ++r;
            double w = s.freq[r] - s.freq[l];
            if (!(w > 0.0)) w = 10.0 * med_step;
            picked.push_back(imax);
            widths.push_back(w);
            const int guard = std::max(3, int(std::llround(2.0 * w / med_step)));
            for (int i = std::max(0, imax - guard); i < std::min(m, imax + guard + 1); ++i)
                masked[i] = 1;
        }
        std::vector<int> order(n_peaks);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(),
                  [&](int a, int b) { return picked[a] < picked[b]; });
        for (int j = 0; j < n_peaks; ++j) {
            const int i = picked[order[j]];
            th[3 * j] = s.freq[i];
            th[3 * j + 1] = widths[order[j]];
            th[3 * j + 2] = s.value[i] - base0;
        }
        th[3 * n_peaks] = base0;
    }

    auto cost_of = [&](const std::vector<double>& t) {
        double c = 0.0;
        for (int i = 0; i < m; ++i) {
            double r = s.value[i] - detail::lm_model(s.freq[i], t, n_peaks);
            if (weighted) r /= s.sigma[i];
            c += 0.5 * r * r;
        }
        return c;
    };

    double cost = cost_of(th);
    if (!std::isfinite(cost)) throw FitDiverged("fit_lorentzians: non-finite initial cost");

    double lambda = 1e-3;
    int iter = 0;
    int stall = 0;
    std::vector<double> jtj(np * np), jtr(np), row(np);
    for (; iter < 300 && stall < 2; ++iter) {
        std::fill(jtj.begin(), jtj.end(), 0.0);
        std::fill(jtr.begin(), jtr.end(), 0.0);
        for (int i = 0; i < m; ++i) {
            detail::lm_fill_jacobian_row(s.freq[i], th, n_peaks, row.data());
            const double r = s.value[i] - detail::lm_model(s.freq[i], th, n_peaks);
            const double wgt = weighted ? 1.0 / (s.sigma[i] * s.sigma[i]) : 1.0;
            for (int a = 0; a < np; ++a) {
                jtr[a] += wgt * row[a] * r;
                for (int b = a; b < np; ++b) jtj[a * np + b] += wgt * row[a] * row[b];
            }
        }
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < a; ++b) jtj[a * np + b] = jtj[b * np + a];

        double grad_inf = 0.0;
        for (double g : jtr) grad_inf = std::max(grad_inf, std::abs(g));
        if (grad_inf <= 1e-14 * std::max(1.0, cost)) break;

        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            std::vector<double> a = jtj;
            for (int d = 0; d < np; ++d) a[d * np + d] += lambda * std::max(jtj[d * np + d], 1e-300);
            std::vector<double> ainv = a;
            if (!detail::gauss_jordan(ainv, np)) {
                lambda *= 4.0;
                continue;
            }
            std::vector<double> tht = th;
            for (int r2 = 0; r2 < np; ++r2) {
                double h = 0.0;
                for (int c2 = 0; c2 < np; ++c2) h += ainv[r2 * np + c2] * jtr[c2];
                tht[r2] += h;
            }
            const double ct = cost_of(tht);
            if (std::isfinite(ct) && ct < cost) {
                if (cost - ct <= 1e-13 * std::max(cost, 1e-300)) ++stall;
                else stall = 0;
                th = std::move(tht);
                cost = ct;
                lambda = std::max(lambda / 3.0, 1e-14);
                accepted = true;
                break;
            }
            lambda *= 4.0;
            if (lambda > 1e15) break;
        }
        if (!accepted) break; // no descent direction left; report the best point
    }

    LorentzianFit out;
    out.iterations = iter;
    out.cost = cost;
    out.rms = std::sqrt(2.0 * cost / m);
    out.baseline = th[3 * n_peaks];
    std::vector<int> order(n_peaks);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return th[3 * a] < th[3 * b]; });
    for (int j : order) {
        LorentzianPeak pk;
        pk.center = th[3 * j];
        pk.fwhm = std::abs(th[3 * j + 1]);
        pk.amplitude = th[3 * j + 2];
        out.peaks.push_back(pk);
    }
    for (const auto& pk : out.peaks) {
        if (!std::isfinite(pk.center) || !std::isfinite(pk.fwhm) || !std::isfinite(pk.amplitude))
            throw FitDiverged("fit_lorentzians: non-finite parameters");
        if (!(pk.fwhm > 0.0) || !(pk.amplitude > 0.0))
            throw FitDiverged("fit_lorentzians: degenerate peak (non-positive width or height)");
    }

    // covariance from the Jacobian at the optimum, permuted to match the
    // sorted peak order
    {
        std::fill(jtj.begin(), jtj.end(), 0.0);
        for (int i = 0; i < m; ++i) {
            detail::lm_fill_jacobian_row(s.freq[i], th, n_peaks, row.data());
            const double wgt = weighted ? 1.0 / (s.sigma[i] * s.sigma[i]) : 1.0;
            for (int a = 0; a < np; ++a)
                for (int b = a; b < np; ++b) jtj[a * np + b] += wgt * row[a] * row[b];
        }
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < a; ++b) jtj[a * np + b] = jtj[b * np + a];
        std::vector<double> inv = jtj;
        if (detail::gauss_jordan(inv, np)) {
            const double scale =
                weighted ? 1.0 : (m > np ? 2.0 * cost / (m - np) : 0.0);
            std::vector<int> pmap(np);
            for (int jnew = 0; jnew < n_peaks; ++jnew)
                for (int k = 0; k < 3; ++k) pmap[3 * jnew + k] = 3 * order[jnew] + k;
            pmap[3 * n_peaks] = 3 * n_peaks;
            out.cov.assign(np * np, 0.0);
            for (int a = 0; a < np; ++a)
                for (int b = 0; b < np; ++b)
                    out.cov[a * np + b] = (weighted ? 1.0 : scale) * inv[pmap[a] * np + pmap[b]];
        }
    }
    return out;
}

// Shift of the side-band pair relative to the pump. Signed, offset-from-pump
// centers by default; set folded for magnitude-only (homodyne) spectra.
// Each first-order side-band carries half the shift, so the pair sum is the
// full inequivalence.
inline SiEstimate extract_si(const LorentzianPeak& red, const LorentzianPeak& blue,
                             double pump_offset, bool folded = false,
                             std::optional<double> omega = {}) {
    SiEstimate e;
    if (folded) {
        const double fr = std::abs(red.center), fb = std::abs(blue.center);
        if (!(fr > fb))
            throw OrderingViolation("extract_si: folded red peak must lie above blue");
        e.delta_hat = fr - fb;
        e.delta_hat_normalized = e.delta_hat / omega.value_or(0.5 * (fr + fb));
    } else {
        if (!(red.center > blue.center))
            throw OrderingViolation("extract_si: red center must exceed blue center");
        e.delta_hat = (red.center - pump_offset) + (blue.center - pump_offset);
        e.delta_hat_normalized =
            e.delta_hat / omega.value_or(0.5 * (red.center - blue.center));
    }
    e.ci_low = e.ci_high = e.delta_hat;
    e.n_peaks_used = 2;
    return e;
}

struct BootstrapOptions {
    int resamples = 200;
    std::uint64_t seed = 0;
    int workers = 1;
};

// Residual-resampling bootstrap percentile interval for an arbitrary
// statistic of the refitted model. Deterministic for a fixed seed; resample
// streams are derived from the master seed by a fixed splitting rule, so the
// result does not depend on the worker count.
inline std::pair<double, double> bootstrap_ci(
    const Spectrum& input, const LorentzianFit& fit,
    const std::function<double(const LorentzianFit&)>& statistic,
    const BootstrapOptions& opts = {}) {
    if (opts.resamples <= 0)
        throw InvalidConfig("bootstrap_ci: resamples must be positive");
    Spectrum s = input;
    s.ensure_sorted();
    const int m = static_cast<int>(s.freq.size());
    const int n_peaks = static_cast<int>(fit.peaks.size());

    std::vector<double> model(m), resid(m);
    for (int i = 0; i < m; ++i) {
        model[i] = fit.model(s.freq[i]);
        resid[i] = s.value[i] - model[i];
    }

    std::vector<double> stats(opts.resamples,
                              std::numeric_limits<double>::quiet_NaN());
    auto run_range = [&](int k0, int k1) {
        Spectrum rs = s;
        for (int k = k0; k < k1; ++k) {
            std::mt19937_64 rng(detail::split_seed(opts.seed, std::uint64_t(k)));
            std::uniform_int_distribution<int> pick(0, m - 1);
            for (int i = 0; i < m; ++i) rs.value[i] = model[i] + resid[pick(rng)];
            try {
                const LorentzianFit refit = fit_lorentzians(rs, n_peaks, fit);
                stats[k] = statistic(refit);
            } catch (const ComputationError&) {
                // counted below
            }
        }
    };

    const int workers = std::max(1, opts.workers);
    if (workers == 1 || opts.resamples < 2 * workers) {
        run_range(0, opts.resamples);
    } else {
        std::vector<std::future<void>> fut;
        const int chunk = (opts.resamples + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const int k0 = w * chunk, k1 = std::min(opts.resamples, k0 + chunk);
            if (k0 >= k1) break;
            fut.push_back(std::async(std::launch::async, run_range, k0, k1));
        }
        for (auto& f : fut) f.get();
    }

    std::vector<double> ok;
    ok.reserve(stats.size());
    for (double v : stats)
        if (std::isfinite(v)) ok.push_back(v);
    if (ok.size() < std::size_t(std::ceil(0.8 * opts.resamples)))
        throw FitDiverged("bootstrap_ci: more than 20% of resamples diverged");
    std::sort(ok.begin(), ok.end());
    auto quantile = [&](double q) {
        const double pos = q * (ok.size() - 1);
        const std::size_t lo = std::size_t(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, ok.size() - 1);
        const double t = pos - double(lo);
        return (1.0 - t) * ok[lo] + t * ok[hi];
    };
    return {quantile(0.025), quantile(0.975)};
}

// Full pipeline: fit, identify the outer side-bands, extract the shift and
// attach a bootstrap interval. The red side-band is the highest center.
struct SiPipelineOptions {
    double pump_offset = 0.0;
    bool folded = false;
    std::optional<double> omega;
    BootstrapOptions bootstrap;
    bool with_ci = true;
};

struct SiPipelineResult {
    SiEstimate estimate;
    LorentzianFit fit;
};

inline SiPipelineResult estimate_si(const Spectrum& s, int n_peaks,
                                    const SiPipelineOptions& opt = {}) {
    if (n_peaks < 2) throw ValidationError("estimate_si: need at least two peaks");
    SiPipelineResult out;
    out.fit = fit_lorentzians(s, n_peaks);
    auto extract_from = [&](const LorentzianFit& f) {
        return extract_si(f.peaks.back(), f.peaks.front(), opt.pump_offset, opt.folded,
                          opt.omega);
    };
    out.estimate = extract_from(out.fit);
    out.estimate.fit_rms = out.fit.rms;
    out.estimate.n_peaks_used = n_peaks;
    if (opt.with_ci) {
        auto stat = [&](const LorentzianFit& f) { return extract_from(f).delta_hat; };
        auto [lo, hi] = bootstrap_ci(s, out.fit, stat, opt.bootstrap);
        out.estimate.ci_low = std::min(lo, out.estimate.delta_hat);
        out.estimate.ci_high = std::max(hi, out.estimate.delta_hat);
    }
    return out;
}

} // namespace sideband
