#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sideband/errors.hpp"
#include "sideband/params.hpp"

namespace sideband {

// Flat sectioned key-value store; JSON configs are flattened into the same
// shape so both formats share one validation path.
class KeyValues {
  public:
    void set(const std::string& sec, const std::string& key, const std::string& value) {
        data_[sec][key] = value;
    }
    bool has(const std::string& sec, const std::string& key) const {
        auto s = data_.find(sec);
        return s != data_.end() && s->second.count(key) > 0;
    }
    bool has_section(const std::string& sec) const { return data_.count(sec) > 0; }

    std::string require(const std::string& sec, const std::string& key) const {
        if (!has(sec, key))
            throw ValidationError("config: missing required key " + qualify(sec, key));
        return data_.at(sec).at(key);
    }
    std::optional<std::string> get(const std::string& sec, const std::string& key) const {
        if (!has(sec, key)) return std::nullopt;
        return data_.at(sec).at(key);
    }
    double require_double(const std::string& sec, const std::string& key) const {
        return to_double(require(sec, key), sec, key);
    }
    double get_double(const std::string& sec, const std::string& key, double fallback) const {
        auto v = get(sec, key);
        return v ? to_double(*v, sec, key) : fallback;
    }
    std::optional<double> get_double(const std::string& sec, const std::string& key) const {
        auto v = get(sec, key);
        if (!v) return std::nullopt;
        return to_double(*v, sec, key);
    }
    long get_long(const std::string& sec, const std::string& key, long fallback) const {
        auto v = get(sec, key);
        if (!v) return fallback;
        return static_cast<long>(to_double(*v, sec, key));
    }
    bool get_bool(const std::string& sec, const std::string& key, bool fallback) const {
        auto v = get(sec, key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw ValidationError("config: boolean expected for " + qualify(sec, key));
    }

  private:
    static std::string qualify(const std::string& sec, const std::string& key) {
        return sec.empty() ? key : sec + "." + key;
    }
    static double to_double(const std::string& s, const std::string& sec,
                            const std::string& key) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ValidationError("config: cannot parse number for " + qualify(sec, key) +
                                  ": '" + s + "'");
        }
    }
    std::map<std::string, std::map<std::string, std::string>> data_;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline void flatten_json(const nlohmann::json& j, const std::string& sec, KeyValues& kv) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it->is_object()) {
            if (!sec.empty())
                throw ValidationError("config: JSON nesting deeper than one section at " +
                                      it.key());
            flatten_json(*it, it.key(), kv);
        } else if (it->is_string()) {
            kv.set(sec, it.key(), it->get<std::string>());
        } else {
            kv.set(sec, it.key(), it->dump());
        }
    }
}

} // namespace detail

inline KeyValues parse_config_text(const std::string& text) {
    KeyValues kv;
    std::istringstream is(text);
    std::string line, sec;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ValidationError("config: bad section header at line " +
                                      std::to_string(lineno));
            sec = detail::trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValidationError("config: expected key = value at line " +
                                  std::to_string(lineno));
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw ValidationError("config: empty key at line " + std::to_string(lineno));
        kv.set(sec, key, value);
    }
    return kv;
}

inline KeyValues load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot open config file: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const std::exception& e) {
            throw ValidationError(std::string("config: JSON parse error: ") + e.what());
        }
        KeyValues kv;
        detail::flatten_json(j, "", kv);
        return kv;
    }
    return parse_config_text(text);
}

enum class Units { Rad, Hz };

struct SweepSpec {
    std::string variable;
    double from = 0.0, to = 0.0;
    long points = 0;
    bool log_scale = false;
};

struct RunConfig {
    Units units = Units::Rad;
    OmParams params;
    std::optional<DriveParams> drive;
    std::optional<double> nbar;
    std::optional<SweepSpec> sweep;
    KeyValues raw; // module-specific sections read on demand
    std::uint64_t seed = 0;
    int workers = 0; // 0 = machine parallelism
    std::string out_dir;
    std::string format = "csv";
    double unit_scale = 1.0; // 2*pi for hz inputs
};

// Builds the typed configuration. The units key is mandatory: rates may be
// given either as angular values or as plain Hz that get multiplied by 2*pi.
inline RunConfig build_run_config(const KeyValues& kv,
                                  const std::optional<std::string>& units_override = {}) {
    RunConfig rc;
    rc.raw = kv;
    std::string units = units_override ? *units_override : kv.require("", "units");
    if (units == "hz")
        rc.units = Units::Hz;
    else if (units == "rad")
        rc.units = Units::Rad;
    else
        throw ValidationError("config: units must be 'hz' or 'rad', got '" + units + "'");
    rc.unit_scale = rc.units == Units::Hz ? 2.0 * pi : 1.0;

    const std::string P = "parameters";
    rc.params.mech_freq = rc.unit_scale * kv.require_double(P, "mech_freq");
    rc.params.optical_decay = rc.unit_scale * kv.require_double(P, "optical_decay");
    rc.params.mech_decay = rc.unit_scale * kv.require_double(P, "mech_decay");
    rc.params.coupling = rc.unit_scale * kv.require_double(P, "coupling");
    rc.params.detuning = rc.unit_scale * kv.get_double(P, "detuning", 0.0);

    if (kv.has_section("drive")) {
        DriveParams d;
        d.pump_power = kv.require_double("drive", "power");
        d.pump_freq = rc.unit_scale * kv.require_double("drive", "pump_freq");
        d.external_coupling = kv.get_double("drive", "external_coupling", 1.0);
        d.validate();
        rc.drive = d;
    }
    rc.nbar = kv.get_double("si", "nbar");

    if (kv.has_section("sweep")) {
        SweepSpec sw;
        sw.variable = kv.require("sweep", "variable");
        sw.from = kv.require_double("sweep", "from");
        sw.to = kv.require_double("sweep", "to");
        sw.points = kv.get_long("sweep", "points", 0);
        const std::string scale = kv.get("sweep", "scale").value_or("linear");
        if (scale == "log")
            sw.log_scale = true;
        else if (scale != "linear")
            throw ValidationError("config: sweep.scale must be linear or log");
        if (sw.points < 1) throw ValidationError("config: sweep.points must be >= 1");
        if (sw.log_scale && !(sw.from > 0.0 && sw.to > 0.0))
            throw ValidationError("config: log sweep needs positive endpoints");
        rc.sweep = sw;
    }

    rc.seed = static_cast<std::uint64_t>(kv.get_long("", "seed", 0));
    rc.workers = static_cast<int>(kv.get_long("", "workers", 0));
    rc.out_dir = kv.get("output", "dir").value_or("");
    rc.format = kv.get("output", "format").value_or("csv");
    if (rc.format != "csv" && rc.format != "json")
        throw ValidationError("config: output.format must be csv or json");
    return rc;
}

} // namespace sideband
