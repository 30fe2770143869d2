#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sideband/langevin.hpp"
#include "sideband/spectral.hpp"

namespace sideband {

using json = nlohmann::json;

// Shortest round-trippable decimal form; keeps outputs byte-stable.
inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_spectrum_csv(std::ostream& os, const Spectrum& s,
                               const std::string& comment = {}) {
    if (!comment.empty()) os << "# " << comment << "\n";
    os << "# f, S" << (s.sigma.empty() ? "" : ", sigma") << "\n";
    for (std::size_t i = 0; i < s.freq.size(); ++i) {
        os << fmt_g17(s.freq[i]) << "," << fmt_g17(s.value[i]);
        if (!s.sigma.empty()) os << "," << fmt_g17(s.sigma[i]);
        os << "\n";
    }
}

inline void write_spectrum_csv(const std::string& path, const Spectrum& s,
                               const std::string& comment = {}) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    write_spectrum_csv(os, s, comment);
}

struct SpectrumReadResult {
    Spectrum spectrum;
    bool resorted = false;
};

// Two or three columns (f, S[, sigma]); '#' starts a comment; comma or
// whitespace separated. Descending grids are re-sorted, not rejected.
inline SpectrumReadResult read_spectrum_csv(std::istream& is) {
    SpectrumReadResult out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        for (char& c : line)
            if (c == ',' || c == ';' || c == '\t') c = ' ';
        std::istringstream ss(line);
        std::vector<double> cols;
        double v;
        while (ss >> v) cols.push_back(v);
        if (cols.empty()) {
            std::string rest;
            ss.clear();
            ss >> rest;
            if (!rest.empty())
                throw ValidationError("spectrum CSV: malformed line " + std::to_string(lineno));
            continue;
        }
        if (cols.size() < 2 || cols.size() > 3 || !ss.eof())
            throw ValidationError("spectrum CSV: expected 2 or 3 columns at line " +
                                  std::to_string(lineno));
        if (cols.size() == 3) {
            if (out.spectrum.sigma.size() != out.spectrum.freq.size())
                throw ValidationError("spectrum CSV: inconsistent column count at line " +
                                      std::to_string(lineno));
            out.spectrum.sigma.push_back(cols[2]);
        } else if (!out.spectrum.sigma.empty()) {
            throw ValidationError("spectrum CSV: inconsistent column count at line " +
                                  std::to_string(lineno));
        }
        out.spectrum.freq.push_back(cols[0]);
        out.spectrum.value.push_back(cols[1]);
    }
    if (out.spectrum.freq.size() < 2)
        throw ValidationError("spectrum CSV: fewer than two samples");
    out.resorted = out.spectrum.ensure_sorted();
    return out;
}

inline SpectrumReadResult read_spectrum_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open spectrum file: " + path);
    return read_spectrum_csv(is);
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
    os << "# t, Re a, Im a, Re b, Im b\n";
    for (std::size_t i = 0; i < tr.t.size(); ++i)
        os << fmt_g17(tr.t[i]) << "," << fmt_g17(tr.a[i].real()) << ","
           << fmt_g17(tr.a[i].imag()) << "," << fmt_g17(tr.b[i].real()) << ","
           << fmt_g17(tr.b[i].imag()) << "\n";
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    write_trajectory_csv(os, tr);
}

inline json si_estimate_to_json(const SiEstimate& e) {
    return json{{"delta_hat", e.delta_hat},
                {"delta_normalized", e.delta_hat_normalized},
                {"ci_low", e.ci_low},
                {"ci_high", e.ci_high},
                {"fit_rms", e.fit_rms},
                {"n_peaks_used", e.n_peaks_used}};
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw ValidationError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

} // namespace sideband
