#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "sideband/errors.hpp"

namespace sideband {

using complexd = std::complex<double>;

inline constexpr double hbar = 1.054571817e-34; // J s
inline constexpr double pi = 3.14159265358979323846;

// Physical rates of the cavity/oscillator system. All angular (rad/s).
struct OmParams {
    double mech_freq = 0.0;     // mechanical frequency
    double optical_decay = 0.0; // cavity linewidth
    double mech_decay = 0.0;    // mechanical linewidth
    double coupling = 0.0;      // single-photon interaction rate
    double detuning = 0.0;      // cavity resonance minus pump frequency

    double gamma_total() const { return optical_decay + mech_decay; }

    // Closed-form expressions need mech_decay > 0; the time-domain
    // simulator admits a lossless oscillator.
    void validate(bool allow_zero_mech_decay = false) const {
        auto bad = [](double v) { return !std::isfinite(v); };
        if (bad(mech_freq) || bad(optical_decay) || bad(mech_decay) ||
            bad(coupling) || bad(detuning))
            throw ValidationError("OmParams: non-finite field");
        if (mech_freq <= 0.0)
            throw ValidationError("OmParams: mech_freq must be > 0");
        if (optical_decay <= 0.0)
            throw ValidationError("OmParams: optical_decay must be > 0");
        if (mech_decay < 0.0 || (mech_decay == 0.0 && !allow_zero_mech_decay))
            throw ValidationError("OmParams: mech_decay must be > 0");
        if (coupling < 0.0)
            throw ValidationError("OmParams: coupling must be >= 0");
    }
};

struct DriveParams {
    double pump_power = 0.0;        // W
    double pump_freq = 0.0;         // rad/s
    double external_coupling = 0.0; // dimensionless, in [0, 1]

    void validate() const {
        if (!(pump_power >= 0.0) || !std::isfinite(pump_power))
            throw ValidationError("DriveParams: pump_power must be >= 0");
        if (!(pump_freq > 0.0) || !std::isfinite(pump_freq))
            throw ValidationError("DriveParams: pump_freq must be > 0");
        if (!(external_coupling >= 0.0 && external_coupling <= 1.0))
            throw ValidationError("DriveParams: external_coupling must be in [0,1]");
    }
};

// Dimensionless combinations used throughout the closed forms.
struct DimGroups {
    double alpha = 0.0;       // 4 g0^2 / Gamma^2
    double beta = 0.0;        // 2 g0^2 / Omega^2
    double theta = 0.0;       // gamma / (2 Omega)
    double psi = 0.0;         // Gamma^2 / (2 Omega^2)
    double gamma_total = 0.0; // kappa + Gamma, rad/s
};

inline DimGroups dimensionless_groups(const OmParams& p) {
    p.validate();
    DimGroups g;
    const double g0 = p.coupling;
    g.alpha = 4.0 * g0 * g0 / (p.mech_decay * p.mech_decay);
    g.beta = 2.0 * g0 * g0 / (p.mech_freq * p.mech_freq);
    g.gamma_total = p.gamma_total();
    g.theta = g.gamma_total / (2.0 * p.mech_freq);
    g.psi = p.mech_decay * p.mech_decay / (2.0 * p.mech_freq * p.mech_freq);
    return g;
}

inline double sideband_resolution_ratio(const OmParams& p) {
    p.validate(true);
    return p.optical_decay / p.mech_freq;
}

enum class CavityRegime { Resolved, Doppler, Unresolved };

// Reporting convention only; nothing downstream branches on it.
inline CavityRegime classify_cavity(const OmParams& p, double resolved_threshold = 0.25) {
    const double r = sideband_resolution_ratio(p);
    if (r < resolved_threshold) return CavityRegime::Resolved;
    if (r <= 1.0) return CavityRegime::Doppler;
    return CavityRegime::Unresolved;
}

inline const char* to_string(CavityRegime r) {
    switch (r) {
    case CavityRegime::Resolved: return "resolved";
    case CavityRegime::Doppler: return "Doppler";
    default: return "unresolved";
    }
}

struct MeanDisplacement {
    complexd b0;      // phonon-amplitude offset
    double x0 = 0.0;  // 2 Re[b0]
};

// Static displacement driven by a mean photon number.
//
// Sign note: the fixed point of the mechanical equation of motion carries
// the opposite sign of b0 below. The photon-number cubic and the
// harmonic-balance chain use that dynamical sign (see langevin_shift), so
// that they agree with the time-domain simulator; this accessor keeps the
// static convention in which x0 is positive.
inline MeanDisplacement mean_displacement(const OmParams& p, double nbar) {
    p.validate(true);
    if (!(nbar >= 0.0))
        throw ValidationError("mean_displacement: nbar must be >= 0");
    MeanDisplacement m;
    m.b0 = complexd(0.0, p.coupling * nbar) / complexd(0.5 * p.mech_decay, p.mech_freq);
    m.x0 = 2.0 * m.b0.real();
    return m;
}

namespace detail {

// Per-photon pull of the effective detuning at the dynamical fixed point:
// Delta_eff(n) = detuning - langevin_shift(p) * n.
inline double langevin_shift(const OmParams& p) {
    const double w = p.mech_freq * p.mech_freq + 0.25 * p.mech_decay * p.mech_decay;
    return 2.0 * p.coupling * p.coupling * p.mech_freq / w;
}

} // namespace detail

struct PhotonSteadyState {
    std::vector<double> roots; // ascending, all >= 0
    bool bistable = false;
};

namespace detail {

// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, c3 != 0.
inline std::vector<double> cubic_real_roots(double c3, double c2, double c1, double c0) {
    const double p = c2 / c3, q = c1 / c3, r = c0 / c3;
    // depressed form y^3 + a y + b, x = y - p/3
    const double a = q - p * p / 3.0;
    const double b = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    const double disc = 4.0 * a * a * a + 27.0 * b * b;
    std::vector<double> roots;
    if (disc < 0.0) {
        // three distinct real roots
        const double m = 2.0 * std::sqrt(-a / 3.0);
        const double arg = 3.0 * b / (a * m);
        const double theta = std::acos(std::max(-1.0, std::min(1.0, arg))) / 3.0;
        for (int k = 0; k < 3; ++k)
            roots.push_back(m * std::cos(theta - 2.0 * pi * k / 3.0) - p / 3.0);
    } else {
        const double s = std::sqrt(std::max(0.0, disc / 108.0));
        const double u = std::cbrt(-b / 2.0 + s);
        const double v = std::cbrt(-b / 2.0 - s);
        roots.push_back(u + v - p / 3.0);
        if (disc == 0.0 && a != 0.0)
            roots.push_back(-(u + v) / 2.0 - p / 3.0); // double root
    }
    return roots;
}

} // namespace detail

// All non-negative steady-state photon numbers of the driven cavity,
// ascending. The drive enters through F = eta * kappa * P / (hbar * w_L),
// balanced against n [ (kappa/2)^2 + (Delta - shift * n)^2 ].
inline PhotonSteadyState steady_state_photon(const OmParams& p, const DriveParams& d) {
    p.validate();
    d.validate();
    const double F = d.external_coupling * p.optical_decay * d.pump_power / (hbar * d.pump_freq);
    const double k2 = detail::langevin_shift(p);
    const double half_kappa_sq = 0.25 * p.optical_decay * p.optical_decay;

    PhotonSteadyState out;
    auto resp = [&](double n) {
        const double de = p.detuning - k2 * n;
        return n * (half_kappa_sq + de * de);
    };

    if (F == 0.0) {
        out.roots = {0.0};
        return out;
    }
    if (k2 == 0.0) {
        out.roots = {F / (half_kappa_sq + p.detuning * p.detuning)};
        return out;
    }

    // n [(k/2)^2 + (D - k2 n)^2] - F = 0, expanded in n
    std::vector<double> cand = detail::cubic_real_roots(
        k2 * k2, -2.0 * p.detuning * k2, half_kappa_sq + p.detuning * p.detuning, -F);

    // Newton polish against the unexpanded balance
    for (double& n : cand) {
        for (int it = 0; it < 8; ++it) {
            const double de = p.detuning - k2 * n;
            const double f = resp(n) - F;
            const double df = half_kappa_sq + de * de - 2.0 * n * de * k2;
            if (df == 0.0) break;
            const double step = f / df;
            n -= step;
            if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(n))) break;
        }
    }

    double max_root = 0.0;
    for (double n : cand) max_root = std::max(max_root, std::abs(n));
    std::vector<double> keep;
    for (double n : cand) {
        if (std::abs(n) < 1e-12 * max_root) n = 0.0;
        if (n >= -1e-12 * max_root) keep.push_back(std::max(n, 0.0));
    }
    std::sort(keep.begin(), keep.end());
    // drop duplicates produced by polish converging to the same root
    std::vector<double> uniq;
    for (double n : keep)
        if (uniq.empty() || n - uniq.back() > 1e-9 * std::max(1.0, n))
            uniq.push_back(n);
    if (uniq.empty())
        throw NoPhysicalRoot("steady_state_photon: no non-negative root");
    out.roots = uniq;
    out.bistable = out.roots.size() == 3 && out.roots.front() > 0.0;
    return out;
}

} // namespace sideband
