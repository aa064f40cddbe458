#pragma once

#include "elda/fbp.hpp"
#include "elda/filter_bank.hpp"
#include "elda/geometry.hpp"
#include "elda/graph.hpp"
#include "elda/regularizers.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace elda {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Single structured-text configuration: `key = value` lines with dotted
// sections, '#' comments. Every key must be registered; unknown keys are
// collected and reported together.
class Config {
  public:
    static const std::map<std::string, std::string>& registry() {
        static const std::map<std::string, std::string> defaults = {
            {"geometry.preset", "full"}, // full | desk | custom
            {"geometry.sad_mm", "250"},
            {"geometry.dcd_mm", "250"},
            {"geometry.n_detectors", "512"},
            {"geometry.detector_width_mm", "0.72"},
            {"geometry.n_views", "1024"},
            {"geometry.fov_mm", "170"},
            {"geometry.image_n", "256"},
            {"lambda", "0.1"},
            {"kappa", "4"},
            {"graph.mode", "frozen"},  // exact | frozen
            {"graph.storage", "auto"}, // auto | dense | windowed
            {"graph.window_radius", "8"},
            {"filters.preset", "tv"}, // tv | dct8 | seeded-random; ignored when path set
            {"filters.path", ""},
            {"filters.layers", "4"},
            {"filters.channels", "48"},
            {"filters.seed", "42"},
            {"solver.rho", "0.5"},
            {"solver.gamma", "0.5"},
            {"solver.eps0", "0.001"},
            {"solver.sigma_red", "1.0"},
            {"solver.c", "10"},
            {"solver.iota", "0.001"},
            {"solver.tau_desc", "0.001"},
            {"solver.eps_tol", "1e-8"},
            {"solver.max_iters", "19"},
            {"solver.max_backtracks", "60"},
            {"solver.alpha", "auto"}, // auto | positive number
            {"solver.beta", "alpha"}, // alpha | positive number
            {"solver.grad_mode", "exact"}, // exact | inexact
            {"solver.power_iters", "30"},
            {"dose.I0", "1e5"}, // single value or comma-separated list
            {"dose.sigma_e2", "10"},
            {"dose.seed", "7"},
            {"sim.mu_scale", "0.1"},
            {"sim.clamp_floor", "1.0"},
            {"fbp.filter", "ramlak"}, // ramlak | hann
            {"png.hu_lo", "-160"},
            {"png.hu_hi", "240"},
            {"png.mu_water", "0.02"},
        };
        return defaults;
    }

    static Config defaults() {
        Config c;
        c.values_ = registry();
        return c;
    }

    static Config load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open " + path.string());
        Config c = defaults();
        std::vector<std::string> unknown;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: " + path.string() + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (!registry().count(key)) {
                unknown.push_back(key);
                continue;
            }
            c.values_[key] = value;
        }
        if (!unknown.empty()) {
            std::string msg = "config: unknown key";
            if (unknown.size() > 1) msg += "s";
            for (const auto& k : unknown) msg += " '" + k + "'";
            throw ConfigError(msg);
        }
        return c;
    }

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
        return it->second;
    }

    void set(const std::string& key, const std::string& value) {
        if (!registry().count(key)) throw ConfigError("config: unknown key '" + key + "'");
        values_[key] = value;
    }

    Scalar num(const std::string& key) const {
        const std::string& s = str(key);
        try {
            std::size_t pos = 0;
            const Scalar v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' is not a number: '" + s + "'");
        }
    }

    Index integer(const std::string& key) const {
        const Scalar v = num(key);
        const Index i = static_cast<Index>(v);
        if (static_cast<Scalar>(i) != v)
            throw ConfigError("config: key '" + key + "' is not an integer");
        return i;
    }

    std::vector<Scalar> num_list(const std::string& key) const {
        const std::string& s = str(key);
        std::vector<Scalar> out;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            try {
                std::size_t pos = 0;
                out.push_back(std::stod(item, &pos));
                if (pos != item.size()) throw std::invalid_argument(item);
            } catch (const std::exception&) {
                throw ConfigError("config: key '" + key + "' has a bad list entry: '" + item +
                                  "'");
            }
        }
        if (out.empty()) throw ConfigError("config: key '" + key + "' is empty");
        return out;
    }

    void dump(std::ostream& os) const {
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

  private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

// --- resolution helpers --------------------------------------------------------

inline FanBeamGeometry resolve_geometry(const Config& cfg) {
    const std::string preset = cfg.str("geometry.preset");
    if (preset == "desk") return FanBeamGeometry::desk_preset();
    if (preset == "full") return FanBeamGeometry::full_preset();
    if (preset != "custom")
        throw ConfigError("config: geometry.preset must be desk, full or custom");
    return FanBeamGeometry::with_uniform_views(
        cfg.num("geometry.sad_mm"), cfg.num("geometry.dcd_mm"),
        cfg.integer("geometry.n_detectors"), cfg.num("geometry.detector_width_mm"),
        cfg.integer("geometry.n_views"), cfg.num("geometry.fov_mm"));
}

inline FilterBank resolve_filters(const Config& cfg, const std::string& override_spec = "") {
    const std::string spec =
        !override_spec.empty() ? override_spec
        : !cfg.str("filters.path").empty() ? cfg.str("filters.path")
                                           : cfg.str("filters.preset");
    if (spec == "seeded-random")
        return xavier_bank(cfg.integer("filters.layers"), cfg.integer("filters.channels"),
                           static_cast<std::uint64_t>(cfg.integer("filters.seed")));
    return resolve_filter_bank(spec);
}

inline RegularizerConfig resolve_regularizer(const Config& cfg) {
    RegularizerConfig r;
    r.lambda = cfg.num("lambda");
    r.kappa = cfg.integer("kappa");
    const std::string mode = cfg.str("graph.mode");
    if (mode == "exact")
        r.graph_mode = GraphMode::exact;
    else if (mode == "frozen")
        r.graph_mode = GraphMode::frozen;
    else
        throw ConfigError("config: graph.mode must be exact or frozen");
    const std::string storage = cfg.str("graph.storage");
    if (storage == "auto") {
        r.storage_auto = true;
    } else if (storage == "dense") {
        r.graph_storage = GraphStorage::dense;
        r.storage_auto = false;
    } else if (storage == "windowed") {
        r.graph_storage = GraphStorage::windowed;
        r.storage_auto = false;
    } else {
        throw ConfigError("config: graph.storage must be auto, dense or windowed");
    }
    r.window_radius = cfg.integer("graph.window_radius");
    validate(r);
    return r;
}

inline FbpFilter resolve_fbp_filter(const Config& cfg) {
    const std::string f = cfg.str("fbp.filter");
    if (f == "ramlak") return FbpFilter::ramlak;
    if (f == "hann") return FbpFilter::hann;
    throw ConfigError("config: fbp.filter must be ramlak or hann");
}

} // namespace elda
