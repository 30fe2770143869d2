#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <utility>

#include "sideband/params.hpp"

namespace sideband {

// Coefficients of the rational form delta(n) = Re[(A + B n)/(C - i D n)].
// A carries an n-dependent correction; B and D are real by construction.
struct SiCoefficients {
    complexd A;
    double B = 0.0;
    complexd C;
    double D = 0.0;
};

enum class SiMethod { Full, Quadratic, Resolved, Linearized, Dimensionless };

inline const char* to_string(SiMethod m) {
    switch (m) {
    case SiMethod::Full: return "full";
    case SiMethod::Quadratic: return "quadratic";
    case SiMethod::Resolved: return "resolved";
    case SiMethod::Linearized: return "linearized";
    default: return "dimensionless";
    }
}

struct SiResult {
    double delta = 0.0;            // rad/s
    double delta_normalized = 0.0; // delta / Omega
    SiMethod method = SiMethod::Full;
    bool valid = true; // false when the perturbative premise is violated
    double im_ratio = 0.0;      // |Im/Re| of the selected root (quadratic route)
    double delta_alt = 0.0;     // complex-arithmetic evaluation (full route)
    bool routes_diverge = false; // expanded vs complex route differ by > 1%
    double delta_coarse = 0.0;  // 2 g0^2 n / Omega (linearized route)
};

struct QuadraticRoots {
    complexd selected; // smaller modulus
    complexd other;
};

enum class Regime { FullyLinear, WeaklyNonlinear, StronglyNonlinear };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::FullyLinear: return "FullyLinear";
    case Regime::WeaklyNonlinear: return "WeaklyNonlinear";
    default: return "StronglyNonlinear";
    }
}

struct RegimeReport {
    Regime regime = Regime::WeaklyNonlinear;
    double nbar_max = 0.0;         // exact optimum photon number
    double nbar_max_approx = 0.0;  // 1/beta
    double nbar_max_numeric = 0.0; // bracketed 1-D maximization cross-check
    double delta_max = 0.0;        // delta at the exact optimum
    double delta_max_approx = 0.0; // 4 Omega^3 / gamma^2
    double nbar_linewidth = 0.0;   // theta * nbar_max
    double asymptotic_delta = 0.0; // per-regime scaling value
};

struct AsymmetryResult {
    double population_difference = 0.0; // n_r - n_b
    double normalized = 0.0;            // (n_r - n_b)/n
};

struct SiLimits {
    double delta_at_zero = 0.0;
    std::optional<double> tail_coefficient; // Omega^3/(2 g0^2); absent at g0 = 0
};

struct RamanSi {
    double value = 0.0;  // Gamma^2/2 / (Omega^2 + gamma^2/4)
    double coarse = 0.0; // Gamma^2 / (2 Omega^2)
};

inline SiCoefficients coefficients(const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("coefficients: nbar must be >= 0");
    const double om = p.mech_freq, ka = p.optical_decay, ga = p.mech_decay;
    const double g0 = p.coupling;
    const double w = om * om + 0.25 * ga * ga;
    SiCoefficients c;
    c.A = ga * complexd(-ka, 2.0 * om) +
          4.0 * g0 * g0 * nbar * ga * om / w * complexd(1.0, 1.0);
    c.B = 4.0 * g0 * g0 * (om - 0.5 * ga) * (om - 0.5 * ga) / w;
    c.C = complexd(2.0 * om, p.gamma_total());
    c.D = 4.0 * g0 * g0 * om / w;
    return c;
}

// Expanded real form of the rational expression; the resonant denominator
// (2 Omega - D n)^2 + gamma^2 is what produces the optimum.
inline SiResult si_full(const OmParams& p, double nbar) {
    const SiCoefficients c = coefficients(p, nbar);
    const double om = p.mech_freq, ga = p.mech_decay;
    const double num = 2.0 * ga * ga * om + 2.0 * om * (c.B - ga * c.D) * nbar;
    const double den = std::norm(c.C) - 4.0 * om * c.D * nbar + c.D * c.D * nbar * nbar;
    if (den <= 0.0)
        throw SingularDenominator("si_full: non-positive denominator");
    SiResult r;
    r.method = SiMethod::Full;
    r.delta = num / den;
    r.delta_normalized = r.delta / om;
    // cross-check: same rational expression evaluated in complex arithmetic
    // with the full A, including its n-dependent part
    r.delta_alt = ((c.A + c.B * nbar) / (c.C - complexd(0.0, c.D * nbar))).real();
    if (r.delta != 0.0)
        r.routes_diverge = std::abs(r.delta_alt - r.delta) > 0.01 * std::abs(r.delta);
    r.valid = std::abs(r.delta_normalized) <= 0.1;
    return r;
}

// Quadratic in delta retaining the delta^2 term dropped by si_full. The
// displacement term enters with the dynamical (fixed-point) sign so the
// linearization of this quadratic is exactly the si_full expression.
inline std::pair<SiResult, QuadraticRoots> si_quadratic(const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("si_quadratic: nbar must be >= 0");
    const double om = p.mech_freq, ka = p.optical_decay, ga = p.mech_decay;
    const double g0 = p.coupling;
    const double dn = 4.0 * g0 * g0 * om / (om * om + 0.25 * ga * ga) * nbar; // D n
    const complexd b(2.0 * om - dn, p.gamma_total());
    const complexd cc(-ka * ga + 4.0 * g0 * g0 * nbar, 2.0 * om * ga - ga * dn);

    complexd s = std::sqrt(b * b - 4.0 * cc);
    if ((b.real() * s.real() + b.imag() * s.imag()) < 0.0) s = -s;
    const complexd big = 0.5 * (b + s);
    const complexd small = (big == complexd(0.0, 0.0)) ? big : cc / big;

    QuadraticRoots roots;
    roots.selected = small;
    roots.other = big;
    if (std::abs(roots.selected) > std::abs(roots.other))
        std::swap(roots.selected, roots.other);

    SiResult r;
    r.method = SiMethod::Quadratic;
    r.delta = roots.selected.real();
    r.delta_normalized = r.delta / om;
    const double re = std::abs(roots.selected.real());
    const double im = std::abs(roots.selected.imag());
    r.im_ratio = re > 0.0 ? im / re : (im > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    r.valid = std::abs(r.delta_normalized) <= 0.1 && r.im_ratio <= 0.1;
    return {r, roots};
}

// Resolved-cavity approximation (kappa, Gamma << Omega).
inline SiResult si_resolved(const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("si_resolved: nbar must be >= 0");
    const double om = p.mech_freq, ga = p.mech_decay, g0 = p.coupling;
    const double gt = p.gamma_total();
    const double u = 1.0 - 2.0 * (g0 / om) * (g0 / om) * nbar;
    const double num = 2.0 * ga * ga * om + 8.0 * g0 * g0 * om * nbar;
    const double den = gt * gt + 4.0 * om * om * u * u;
    SiResult r;
    r.method = SiMethod::Resolved;
    r.delta = num / den;
    r.delta_normalized = r.delta / om;
    r.valid = std::abs(r.delta_normalized) <= 0.1;
    return r;
}

// Small-n expansion: intercept plus a slope linear in n.
inline SiResult si_linearized(const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("si_linearized: nbar must be >= 0");
    const double om = p.mech_freq, ga = p.mech_decay, g0 = p.coupling;
    const double gt = p.gamma_total();
    const double q = 4.0 * om * om + gt * gt;
    SiResult r;
    r.method = SiMethod::Linearized;
    r.delta = 2.0 * ga * ga * om / q +
              8.0 * g0 * g0 * om * (q + ga * ga) / (q * q) * nbar;
    r.delta_normalized = r.delta / om;
    r.delta_coarse = 2.0 * g0 * g0 * nbar / om;
    r.valid = std::abs(r.delta_normalized) <= 0.1;
    return r;
}

// Dimensionless form delta(n) = Omega psi (1 + alpha n) / (theta^2 + (1 - beta n)^2).
inline SiResult si_normalized_form(const DimGroups& g, double omega, double nbar) {
    if (!(omega > 0.0))
        throw ValidationError("si_normalized_form: omega must be > 0");
    if (!(nbar >= 0.0))
        throw ValidationError("si_normalized_form: nbar must be >= 0");
    const double v = 1.0 - g.beta * nbar;
    SiResult r;
    r.method = SiMethod::Dimensionless;
    r.delta = omega * g.psi * (1.0 + g.alpha * nbar) / (g.theta * g.theta + v * v);
    r.delta_normalized = r.delta / omega;
    r.valid = std::abs(r.delta_normalized) <= 0.1;
    return r;
}

inline SiLimits si_limits(const OmParams& p) {
    p.validate();
    const double om = p.mech_freq, ga = p.mech_decay, gt = p.gamma_total();
    SiLimits l;
    l.delta_at_zero = 2.0 * ga * ga * om / (4.0 * om * om + gt * gt);
    if (p.coupling > 0.0)
        l.tail_coefficient = om * om * om / (2.0 * p.coupling * p.coupling);
    return l;
}

namespace detail {

// Bracketed golden-section maximization of f over [lo, hi] (log axis).
template <typename F>
double golden_max_log(F f, double lo, double hi, double rel_tol = 1e-9) {
    const double gr = 0.6180339887498949;
    double a = std::log(lo), b = std::log(hi);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = f(std::exp(x1)), f2 = f(std::exp(x2));
    while (b - a > rel_tol) {
        if (f1 < f2) {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a); f2 = f(std::exp(x2));
        } else {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a); f1 = f(std::exp(x1));
        }
    }
    return std::exp(0.5 * (a + b));
}

} // namespace detail

// Optimum photon number and maximum attainable shift, from the
// dimensionless groups alone.
inline RegimeReport optimum_from_groups(const DimGroups& g, double omega) {
    if (!(g.alpha > 0.0) || !(g.beta > 0.0))
        throw CouplingZero("optimum: coupling must be > 0");
    RegimeReport rep;
    const double ab = g.alpha + g.beta;
    rep.nbar_max = std::sqrt(ab * ab + g.alpha * g.alpha * g.theta * g.theta) /
                       (g.alpha * g.beta) -
                   1.0 / g.alpha;
    rep.nbar_max_approx = 1.0 / g.beta;
    rep.delta_max = si_normalized_form(g, omega, rep.nbar_max).delta;
    rep.delta_max_approx =
        g.gamma_total > 0.0
            ? 4.0 * omega * omega * omega / (g.gamma_total * g.gamma_total)
            : std::numeric_limits<double>::infinity();
    rep.nbar_linewidth = g.theta * rep.nbar_max;
    rep.regime = Regime::WeaklyNonlinear;
    rep.asymptotic_delta = rep.delta_max;

    // independent cross-check: coarse log scan, then golden-section refine
    auto f = [&](double n) { return si_normalized_form(g, omega, n).delta; };
    const double lo = 1e-3 / g.beta, hi = 1e3 / g.beta;
    double best = lo, fbest = f(lo);
    const int scan = 200;
    for (int i = 1; i <= scan; ++i) {
        const double n = lo * std::pow(hi / lo, double(i) / scan);
        const double v = f(n);
        if (v > fbest) { fbest = v; best = n; }
    }
    const double step = std::pow(hi / lo, 1.0 / scan);
    rep.nbar_max_numeric = detail::golden_max_log(f, best / step, best * step, 1e-10);
    return rep;
}

inline RegimeReport optimum(const OmParams& p) {
    p.validate();
    if (p.coupling <= 0.0)
        throw CouplingZero("optimum: coupling must be > 0");
    return optimum_from_groups(dimensionless_groups(p), p.mech_freq);
}

// Three-way classification with the per-regime scaling value. The margin
// is the order-of-magnitude buffer on each side of the optimum.
inline RegimeReport classify_regime(const OmParams& p, double nbar, double margin = 10.0) {
    if (!(nbar >= 0.0))
        throw ValidationError("classify_regime: nbar must be >= 0");
    RegimeReport rep = optimum(p);
    const DimGroups g = dimensionless_groups(p);
    const double lo = (1.0 - g.theta) * rep.nbar_max / margin;
    const double hi = (1.0 + g.theta) * rep.nbar_max * margin;
    const double ratio = nbar / rep.nbar_max;
    if (nbar < lo) {
        rep.regime = Regime::FullyLinear;
        rep.asymptotic_delta = ratio * rep.delta_max;
    } else if (nbar > hi) {
        rep.regime = Regime::StronglyNonlinear;
        rep.asymptotic_delta = rep.delta_max / ratio;
    } else {
        rep.regime = Regime::WeaklyNonlinear;
        const double d = (ratio - 1.0) / g.theta;
        rep.asymptotic_delta = rep.delta_max / (1.0 + d * d);
    }
    return rep;
}

// Scattered-population asymmetry between the two side-bands.
inline AsymmetryResult population_asymmetry(const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("population_asymmetry: nbar must be >= 0");
    const DimGroups g = dimensionless_groups(p);
    const double om = p.mech_freq;
    const double w = om * om + 0.25 * p.mech_decay * p.mech_decay;
    AsymmetryResult a;
    a.population_difference = om * nbar / w * si_full(p, nbar).delta;
    const double v = 1.0 - g.beta * nbar;
    a.normalized = g.psi * (1.0 + g.alpha * nbar) / (g.theta * g.theta + v * v);
    return a;
}

// Weak-coupling estimate of the normalized shift for a single scattering
// line of frequency Omega; useful for multi-line spectra.
inline RamanSi raman_line_si(double omega, double gamma_m, double kappa) {
    if (!(omega > 0.0) || !(gamma_m >= 0.0) || !(kappa >= 0.0))
        throw ValidationError("raman_line_si: omega > 0, gamma_m >= 0, kappa >= 0 required");
    const double gt = kappa + gamma_m;
    RamanSi r;
    r.value = 0.5 * gamma_m * gamma_m / (omega * omega + 0.25 * gt * gt);
    r.coarse = 0.5 * gamma_m * gamma_m / (omega * omega);
    return r;
}

} // namespace sideband
