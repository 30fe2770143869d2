#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "sideband/closed_form.hpp"
#include "sideband/params.hpp"

namespace sideband {

// One balanced configuration of the side-band system. The frequency shift
// is stored with its decay-like imaginary part; the physical shift is the
// real part. Gauge: a0 is real and non-negative.
struct HbState {
    double delta = 0.0;    // rad/s
    double delta_im = 0.0; // rad/s, diagnostic
    complexd a0, ab, ar;   // optical amplitudes (sqrt-photon units)
    complexd bb, br;       // phonon doublet amplitudes
    std::optional<complexd> abb, arr; // second-order optical amplitudes
};

struct HbOptions {
    double tol = 1e-9;
    int max_iter = 60;
    std::optional<double> delta_init; // rad/s; default comes from si_linearized
    double fd_step = 1e-7;            // relative finite-difference step
};

struct HbSolution {
    HbState state;
    double residual_norm = 0.0; // over the solved (blue-branch) equations
    int iterations = 0;
    bool converged = false;

    // red-branch solve (reported separately; the two branches need not
    // produce identical shifts)
    double delta_red = 0.0;
    double delta_red_im = 0.0;
    double red_residual_norm = 0.0; // red equations evaluated at the blue shift
    double line1_residual = 0.0;    // carrier-line gap (over-determined at mean field)

    // second-order extension
    double delta2 = 0.0;          // measured order-2 inequivalence
    double amp_ratio_blue = 0.0;  // |abb| / |ab|
    double amp_ratio_red = 0.0;   // |arr| / |ar|
};

namespace detail {

inline double x0_dynamical(const OmParams& p, double nbar) {
    const double w = p.mech_freq * p.mech_freq + 0.25 * p.mech_decay * p.mech_decay;
    return -2.0 * p.coupling * nbar * p.mech_freq / w;
}

struct HbEquations {
    const OmParams& p;
    double nbar;
    double x0e; // dynamical displacement

    complexd blue_phonon(const complexd& dc, const complexd& ab, const complexd& bb,
                         const complexd& a0) const {
        return (complexd(0.0, 1.0) * dc + p.mech_decay) * bb +
               complexd(0.0, 2.0 * p.coupling) * std::conj(a0) * ab;
    }
    complexd blue_optical(const complexd& dc, const complexd& ab, const complexd& bb,
                          const complexd& a0) const {
        const complexd prop(0.5 * p.optical_decay,
                            -p.mech_freq) ;
        return (prop + complexd(0.0, 0.5) * dc) * ab -
               complexd(0.0, p.coupling) * (ab * x0e + a0 * bb);
    }
    complexd red_phonon(const complexd& dc, const complexd& ar, const complexd& br,
                        const complexd& a0) const {
        return (complexd(0.0, -1.0) * dc + p.mech_decay) * br +
               complexd(0.0, 2.0 * p.coupling) * std::conj(ar) * a0;
    }
    complexd red_optical(const complexd& dc, const complexd& ar, const complexd& br,
                         const complexd& a0) const {
        const complexd prop(0.5 * p.optical_decay, p.mech_freq);
        return (prop + complexd(0.0, 0.5) * dc) * ar -
               complexd(0.0, p.coupling) * (ar * x0e + a0 * std::conj(br));
    }
    complexd carrier(const HbState& s) const {
        return 0.5 * p.optical_decay * s.a0 -
               complexd(0.0, p.coupling) *
                   (s.a0 * x0e + s.ab * std::conj(s.bb) + s.ar * s.br);
    }
};

// Dense Gaussian elimination with partial pivoting; n is tiny here.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> rhs) {
    const int n = static_cast<int>(rhs.size());
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (piv != col) {
            for (int c = 0; c < n; ++c) std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(rhs[col], rhs[piv]);
        }
        const double d = a[col * n + col];
        if (!(std::abs(d) > 1e-280))
            throw JacobianSingular("harmonic balance: singular Jacobian");
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r * n + col] / d;
            if (f == 0.0) continue;
            for (int c = col; c < n; ++c) a[r * n + c] -= f * a[col * n + c];
            rhs[r] -= f * rhs[col];
        }
    }
    std::vector<double> x(n);
    for (int r = n - 1; r >= 0; --r) {
        double s = rhs[r];
        for (int c = r + 1; c < n; ++c) s -= a[r * n + c] * x[c];
        x[r] = s / a[r * n + r];
    }
    return x;
}

// Damped Newton on R^n with finite-difference Jacobian. Step is halved
// until the residual decreases, max 20 halvings.
struct NewtonOutcome {
    std::vector<double> x;
    double norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

inline NewtonOutcome newton_solve(
    const std::function<std::vector<double>(const std::vector<double>&)>& fn,
    std::vector<double> x, const std::vector<double>& fd_floor, double tol, int max_iter,
    double fd_rel) {
    const int n = static_cast<int>(x.size());
    auto norm_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double c : v) s += c * c;
        return std::sqrt(s);
    };
    std::vector<double> r = fn(x);
    double rn = norm_of(r);
    NewtonOutcome out;
    int it = 0;
    for (; it < max_iter && rn > tol; ++it) {
        std::vector<double> jac(n * n);
        for (int j = 0; j < n; ++j) {
            const double h = fd_rel * (std::abs(x[j]) + fd_floor[j]);
            std::vector<double> xp = x;
            xp[j] += h;
            const std::vector<double> rp = fn(xp);
            for (int i = 0; i < n; ++i) jac[i * n + j] = (rp[i] - r[i]) / h;
        }
        std::vector<double> neg(r);
        for (double& c : neg) c = -c;
        const std::vector<double> step = solve_dense(jac, neg);
        double lambda = 1.0;
        bool accepted = false;
        for (int halving = 0; halving <= 20; ++halving) {
            std::vector<double> xt = x;
            for (int j = 0; j < n; ++j) xt[j] += lambda * step[j];
            const std::vector<double> rt = fn(xt);
            const double rtn = norm_of(rt);
            if (rtn < rn) {
                x = xt; r = rt; rn = rtn;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if (!accepted) break; // stalled; report best point
    }
    out.x = x;
    out.norm = rn;
    out.iterations = it;
    out.converged = rn <= tol;
    return out;
}

} // namespace detail

// Stacked residual of all balanced lines at the given state, split into
// real components and normalized per line group:
//   [0..1] blue phonon, [2..3] blue optical   (scale: Omega * (|ab|+|bb|))
//   [4..5] red phonon,  [6..7] red optical    (scale: Omega * (|ar|+|br|))
//   [8..9] carrier                            (scale: Omega * |a0|)
// The carrier line is over-determined at mean field and stays nonzero.
inline std::array<double, 10> hb_residual(const HbState& s, const OmParams& p, double nbar) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("hb_residual: nbar must be >= 0");
    const detail::HbEquations eq{p, nbar, detail::x0_dynamical(p, nbar)};
    const complexd dc(s.delta, s.delta_im);
    const double om = p.mech_freq;
    const double tiny = 1e-300;
    const double sb = om * (std::abs(s.ab) + std::abs(s.bb)) + tiny;
    const double sr = om * (std::abs(s.ar) + std::abs(s.br)) + tiny;
    const double sc = om * std::abs(s.a0) + tiny;

    const complexd r0 = eq.blue_phonon(dc, s.ab, s.bb, s.a0) / sb;
    const complexd r1 = eq.blue_optical(dc, s.ab, s.bb, s.a0) / sb;
    const complexd r2 = eq.red_phonon(dc, s.ar, s.br, s.a0) / sr;
    const complexd r3 = eq.red_optical(dc, s.ar, s.br, s.a0) / sr;
    const complexd r4 = eq.carrier(s) / sc;
    return {r0.real(), r0.imag(), r1.real(), r1.imag(), r2.real(),
            r2.imag(), r3.real(), r3.imag(), r4.real(), r4.imag()};
}

// State with the given shift and amplitudes back-substituted through the
// phonon lines; the pinned side-band scale is (g0 sqrt(n)/Omega) * a0.
inline HbState hb_initial_state(const OmParams& p, double nbar, double delta,
                                double delta_im = 0.0) {
    HbState s;
    s.delta = delta;
    s.delta_im = delta_im;
    const double a0 = std::sqrt(std::max(0.0, nbar));
    s.a0 = a0;
    const double pin = p.coupling * nbar / p.mech_freq;
    s.ab = pin;
    s.ar = pin;
    const complexd dc(delta, delta_im);
    const complexd i2g(0.0, 2.0 * p.coupling);
    s.bb = -(i2g * s.a0 * s.ab) / (complexd(0.0, 1.0) * dc + p.mech_decay);
    s.br = -(i2g * std::conj(s.ar) * s.a0) / (complexd(0.0, -1.0) * dc + p.mech_decay);
    return s;
}

// Solves the blue-branch system (phonon and optical lines) for the complex
// shift and bb with the side-band scale pinned, then the red branch for its
// own shift. The reported delta is the blue-branch value; the red branch and
// the carrier line are surfaced as diagnostics.
inline HbSolution hb_solve(const OmParams& p, double nbar, const HbOptions& opts = {}) {
    p.validate();
    if (!(nbar >= 0.0))
        throw ValidationError("hb_solve: nbar must be >= 0");
    HbSolution sol;

    if (p.coupling == 0.0 || nbar == 0.0) {
        // no scattering: side-band amplitudes vanish and the balance is
        // degenerate; report the quadratic-root convention for the shift
        const auto [res, roots] = si_quadratic(p, nbar);
        sol.state.delta = res.delta;
        sol.state.delta_im = roots.selected.imag();
        sol.state.a0 = std::sqrt(nbar);
        sol.delta_red = res.delta;
        sol.delta_red_im = roots.selected.imag();
        sol.converged = true;
        const auto r = hb_residual(sol.state, p, nbar);
        sol.line1_residual = std::hypot(r[8], r[9]);
        return sol;
    }

    const detail::HbEquations eq{p, nbar, detail::x0_dynamical(p, nbar)};
    const double om = p.mech_freq;
    const double a0 = std::sqrt(nbar);
    const double pin = p.coupling * nbar / om;
    const double d0 = opts.delta_init ? *opts.delta_init : si_linearized(p, nbar).delta;

    const complexd ipg(0.0, 2.0 * p.coupling);
    const complexd bb0 = -(ipg * a0 * pin) / (complexd(0.0, 1.0) * complexd(d0, 0.0) + p.mech_decay);

    auto blue_fn = [&](const std::vector<double>& x) {
        const complexd dc(x[0], x[1]);
        const complexd bb(x[2], x[3]);
        const double sc = om * (pin + std::abs(bb)) + 1e-300;
        const complexd rp = eq.blue_phonon(dc, pin, bb, a0) / sc;
        const complexd ro = eq.blue_optical(dc, pin, bb, a0) / sc;
        return std::vector<double>{rp.real(), rp.imag(), ro.real(), ro.imag()};
    };
    const std::vector<double> floor_b{om, om, std::abs(bb0), std::abs(bb0)};
    auto blue = detail::newton_solve(blue_fn, {d0, 0.0, bb0.real(), bb0.imag()}, floor_b,
                                     opts.tol, opts.max_iter, opts.fd_step);

    const complexd br0 =
        -(ipg * pin * a0) / (complexd(0.0, -1.0) * complexd(blue.x[0], 0.0) + p.mech_decay);
    auto red_fn = [&](const std::vector<double>& x) {
        const complexd dc(x[0], x[1]);
        const complexd br(x[2], x[3]);
        const double sc = om * (pin + std::abs(br)) + 1e-300;
        const complexd rp = eq.red_phonon(dc, pin, br, a0) / sc;
        const complexd ro = eq.red_optical(dc, pin, br, a0) / sc;
        return std::vector<double>{rp.real(), rp.imag(), ro.real(), ro.imag()};
    };
    const std::vector<double> floor_r{om, om, std::abs(br0), std::abs(br0)};
    auto red = detail::newton_solve(red_fn, {blue.x[0], blue.x[1], br0.real(), br0.imag()},
                                    floor_r, opts.tol, opts.max_iter, opts.fd_step);

    sol.state.delta = blue.x[0];
    sol.state.delta_im = blue.x[1];
    sol.state.a0 = a0;
    sol.state.ab = pin;
    sol.state.ar = pin;
    sol.state.bb = complexd(blue.x[2], blue.x[3]);
    sol.state.br = complexd(red.x[2], red.x[3]);
    sol.iterations = blue.iterations + red.iterations;
    sol.converged = blue.converged && red.converged;
    sol.delta_red = red.x[0];
    sol.delta_red_im = red.x[1];

    const auto r = hb_residual(sol.state, p, nbar);
    sol.residual_norm = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]);
    sol.red_residual_norm = std::sqrt(r[4] * r[4] + r[5] * r[5] + r[6] * r[6] + r[7] * r[7]);
    sol.line1_residual = std::hypot(r[8], r[9]);
    return sol;
}

// First-order solve extended with the second-order side-bands. The order-2
// amplitudes are driven by first-order products; each order-2 line frequency
// is the power-weighted mean of its driving shifts, and the measured order-2
// inequivalence is the sum of the two line shifts.
inline HbSolution hb_solve_order2(const OmParams& p, double nbar, const HbOptions& opts = {}) {
    HbSolution sol = hb_solve(p, nbar, opts);
    const double om = p.mech_freq, ka = p.optical_decay, ga = p.mech_decay;
    const double g0 = p.coupling;
    const double x0e = detail::x0_dynamical(p, nbar);
    const HbState& s = sol.state;

    if (g0 == 0.0 || nbar == 0.0) {
        sol.state.abb = complexd(0.0, 0.0);
        sol.state.arr = complexd(0.0, 0.0);
        return sol;
    }

    const double db = sol.state.delta;
    const double dr = sol.delta_red;
    const complexd ig(0.0, g0);

    // driven order-2 optical amplitudes
    const complexd den_b = complexd(0.5 * ka, -2.0 * om + db) - ig * x0e;
    const complexd den_r = complexd(0.5 * ka, 2.0 * om + dr) - ig * x0e;
    const complexd abb = ig * s.ab * s.bb / den_b;
    const complexd arr = ig * s.ar * std::conj(s.br) / den_r;

    // order-2 phonon responses (non-resonant)
    const complexd den_pb = complexd(0.5 * ga, -om + db);
    const complexd den_pr = complexd(0.5 * ga, -(om + dr));
    const complexd bbb = -ig * (s.a0 * abb + std::conj(s.ar) * s.ab) / den_pb;
    const complexd brr = -ig * (std::conj(arr) * s.a0 + std::conj(s.ar) * s.ab) / den_pr;

    // power-weighted line shifts
    const double cross = 0.5 * (db - dr);
    auto wmean = [](double w1, double f1, double w2, double f2) {
        const double w = w1 + w2;
        return w > 0.0 ? (w1 * f1 + w2 * f2) / w : f1;
    };
    const double v1b = std::norm(g0 * s.a0 * abb), v2b = std::norm(g0 * std::conj(s.ar) * s.ab);
    const double ub = wmean(v1b, db, v2b, cross);
    const double w1b = std::norm(g0 * s.ab * s.bb), w2b = std::norm(g0 * s.a0 * bbb);
    const double s_blue = wmean(w1b, db, w2b, ub);

    const double v1r = std::norm(g0 * std::conj(arr) * s.a0),
                 v2r = std::norm(g0 * std::conj(s.ar) * s.ab);
    const double ur = wmean(v1r, dr, v2r, -cross);
    const double w1r = std::norm(g0 * s.ar * std::conj(s.br)), w2r = std::norm(g0 * s.a0 * brr);
    const double s_red = wmean(w1r, dr, w2r, ur);

    sol.state.abb = abb;
    sol.state.arr = arr;
    sol.delta2 = s_blue + s_red;
    sol.amp_ratio_blue = std::abs(abb) / std::abs(s.ab);
    sol.amp_ratio_red = std::abs(arr) / std::abs(s.ar);
    return sol;
}

} // namespace sideband
