#ifndef OMSQZ_CONFIG_HPP
#define OMSQZ_CONFIG_HPP

// Run configuration: flat `key = value` lines grouped under `[section]`
// headers. '#' starts a comment. Unknown sections and keys are errors.
// Mechanical modes use numbered sections [mode.1], [mode.2], ...; if any is
// present the list replaces the default modes.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "omsqz/budget.hpp"
#include "omsqz/corrlab.hpp"
#include "omsqz/error.hpp"
#include "omsqz/format.hpp"

namespace omsqz {

struct BudgetSettings {
    double quad_start_deg = 0.0;
    double quad_step_deg = 0.5;
    std::uint64_t quad_count = 90;
    double freq_start = 10e3;
    double freq_stop = 150e3;
    std::uint64_t freq_count = 400;
    std::string freq_spacing = "log";
    double excess_loss = 0.22;
    double expected_excess_loss = 0.0;
    double phase_noise_ref_deg = 17.0;
    double phase_noise_amplitude = 0.02;
    double phase_noise_f_ref = 30e3;
    double phase_noise_exponent = -2.0;
    std::string phase_noise_file;
    double feedback_amplitude = 1e-37;
    double feedback_f_ref = 1.0;
    double feedback_exponent = 0.0;
    std::string feedback_file;
    double rin_amplitude = 8e-9;
    double rin_coupling = 0.1;
    double dark_noise_db = -12.0;
    std::string measured_grid;
    std::uint64_t threads = 1;

    friend bool operator==(const BudgetSettings&, const BudgetSettings&) = default;
};

struct CorrSettings {
    std::string mode = "synthesize";      // synthesize | ingest
    std::string input;
    std::string input_format = "binary";  // binary | text
    double fs = 262144.0;
    std::uint64_t n_samples = std::uint64_t(1) << 22;
    double quadrature_deg = 12.3;
    double alpha = 1.0;
    double beta = 1.0;
    double dark_db = -12.0;
    bool measure_dark = true;
    double sigmas = 3.0;
    EstimatorConfig estimator{.segment_length = 1024};

    friend bool operator==(const CorrSettings&, const CorrSettings&) = default;
};

struct RunSettings {
    std::string scenario = "default";  // default | expected
    std::uint64_t seed = 1;
    std::string out = "out";

    friend bool operator==(const RunSettings&, const RunSettings&) = default;
};

struct RunConfig {
    ExperimentParams experiment;
    BudgetSettings budget;
    CorrSettings corr;
    RunSettings run;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

using FieldTable = std::vector<std::pair<std::string, Field>>;

inline Field real(double& x) {
    return {[&x](const std::string& v) {
                if (!fmt::parse_double(v, x)) throw ConfigError("expected a number, got '" + v + "'");
            },
            [&x] { return fmt::exact(x); }};
}

inline Field count(std::uint64_t& x) {
    return {[&x](const std::string& v) {
                std::uint64_t r = 0;
                const auto res = std::from_chars(v.data(), v.data() + v.size(), r);
                if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
                    throw ConfigError("expected a non-negative integer, got '" + v + "'");
                x = r;
            },
            [&x] { return std::to_string(x); }};
}

inline Field small_count(unsigned& x) {
    return {[&x](const std::string& v) {
                unsigned r = 0;
                const auto res = std::from_chars(v.data(), v.data() + v.size(), r);
                if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
                    throw ConfigError("expected a non-negative integer, got '" + v + "'");
                x = r;
            },
            [&x] { return std::to_string(x); }};
}

inline Field size(std::size_t& x) {
    return {[&x](const std::string& v) {
                std::size_t r = 0;
                const auto res = std::from_chars(v.data(), v.data() + v.size(), r);
                if (res.ec != std::errc() || res.ptr != v.data() + v.size() || v.empty())
                    throw ConfigError("expected a non-negative integer, got '" + v + "'");
                x = r;
            },
            [&x] { return std::to_string(x); }};
}

inline Field text(std::string& x) {
    return {[&x](const std::string& v) { x = v; }, [&x] { return x; }};
}

inline Field choice(std::string& x, std::vector<std::string> allowed) {
    return {[&x, allowed](const std::string& v) {
                if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
                    throw ConfigError("unexpected value '" + v + "'");
                x = v;
            },
            [&x] { return x; }};
}

inline Field flag(bool& x) {
    return {[&x](const std::string& v) {
                if (v == "true") x = true;
                else if (v == "false") x = false;
                else throw ConfigError("expected true or false, got '" + v + "'");
            },
            [&x] { return std::string(x ? "true" : "false"); }};
}

inline Field damping(DampingModel& x) {
    return {[&x](const std::string& v) {
                if (v == "structural") x = DampingModel::structural;
                else if (v == "viscous") x = DampingModel::viscous;
                else throw ConfigError("expected structural or viscous, got '" + v + "'");
            },
            [&x] { return std::string(x == DampingModel::structural ? "structural" : "viscous"); }};
}

inline Field window(Window& x) {
    return {[&x](const std::string& v) {
                if (v == "hann") x = Window::hann;
                else if (v == "rectangular") x = Window::rectangular;
                else throw ConfigError("expected hann or rectangular, got '" + v + "'");
            },
            [&x] { return std::string(x == Window::hann ? "hann" : "rectangular"); }};
}

inline std::vector<std::pair<std::string, FieldTable>> sections(RunConfig& c) {
    auto& cav = c.experiment.cavity;
    auto& det = c.experiment.detection;
    auto& b = c.budget;
    auto& k = c.corr;
    auto& e = c.corr.estimator;
    return {
        {"run",
         {{"scenario", choice(c.run.scenario, {"default", "expected"})},
          {"seed", count(c.run.seed)},
          {"out", text(c.run.out)}}},
        {"cavity",
         {{"length", real(cav.length)},
          {"wavelength", real(cav.wavelength)},
          {"t_in_ppm", real(cav.t_in_ppm)},
          {"t_out_ppm", real(cav.t_out_ppm)},
          {"loss_ppm", real(cav.loss_ppm)},
          {"detuning", real(cav.detuning)},
          {"p_circ", real(cav.p_circ)}}},
        {"environment", {{"temperature", real(c.experiment.env.temperature)}}},
        {"detection",
         {{"bs1_transmission", real(det.bs1_transmission)},
          {"bs2_reflectivity", real(det.bs2.power_reflectivity)},
          {"visibility", real(det.visibility)},
          {"signal_power", real(det.signal_power)},
          {"detected_power", real(det.detected_power)},
          {"max_lo_power", real(det.max_lo_power)}}},
        {"budget",
         {{"quad_start_deg", real(b.quad_start_deg)},
          {"quad_step_deg", real(b.quad_step_deg)},
          {"quad_count", count(b.quad_count)},
          {"freq_start", real(b.freq_start)},
          {"freq_stop", real(b.freq_stop)},
          {"freq_count", count(b.freq_count)},
          {"freq_spacing", choice(b.freq_spacing, {"log", "linear"})},
          {"excess_loss", real(b.excess_loss)},
          {"expected_excess_loss", real(b.expected_excess_loss)},
          {"phase_noise_ref_deg", real(b.phase_noise_ref_deg)},
          {"phase_noise_amplitude", real(b.phase_noise_amplitude)},
          {"phase_noise_f_ref", real(b.phase_noise_f_ref)},
          {"phase_noise_exponent", real(b.phase_noise_exponent)},
          {"phase_noise_file", text(b.phase_noise_file)},
          {"feedback_amplitude", real(b.feedback_amplitude)},
          {"feedback_f_ref", real(b.feedback_f_ref)},
          {"feedback_exponent", real(b.feedback_exponent)},
          {"feedback_file", text(b.feedback_file)},
          {"rin_amplitude", real(b.rin_amplitude)},
          {"rin_coupling", real(b.rin_coupling)},
          {"dark_noise_db", real(b.dark_noise_db)},
          {"measured_grid", text(b.measured_grid)},
          {"threads", count(b.threads)}}},
        {"corr",
         {{"mode", choice(k.mode, {"synthesize", "ingest"})},
          {"input", text(k.input)},
          {"input_format", choice(k.input_format, {"binary", "text"})},
          {"fs", real(k.fs)},
          {"n_samples", count(k.n_samples)},
          {"quadrature_deg", real(k.quadrature_deg)},
          {"alpha", real(k.alpha)},
          {"beta", real(k.beta)},
          {"dark_db", real(k.dark_db)},
          {"measure_dark", flag(k.measure_dark)},
          {"sigmas", real(k.sigmas)},
          {"segment_length", size(e.segment_length)},
          {"overlap", real(e.overlap)},
          {"window", window(e.window)},
          {"threads", small_count(e.threads)}}},
    };
}

inline FieldTable mode_fields(MechanicalMode& m) {
    return {{"mass", real(m.mass)},
            {"f0", real(m.f0)},
            {"q", real(m.q)},
            {"damping", damping(m.damping)}};
}

inline void apply(FieldTable& table, const std::string& key, const std::string& value) {
    for (auto& [k, f] : table) {
        if (k == key) {
            f.set(value);
            return;
        }
    }
    throw ConfigError("unknown key '" + key + "'");
}

}  // namespace detail

/// Check every value against the invariants of the type it feeds.
inline void validate(const RunConfig& c) {
    c.experiment.validate();
    const auto& b = c.budget;
    if (b.quad_count == 0 || b.freq_count == 0) throw ConfigError("budget grid is empty");
    if (!(b.quad_step_deg > 0)) throw ConfigError("budget.quad_step_deg must be positive");
    if (!(b.freq_start > 0 && b.freq_stop > b.freq_start))
        throw ConfigError("budget frequency range must satisfy 0 < freq_start < freq_stop");
    if (!(b.expected_excess_loss >= 0 && b.expected_excess_loss < 1))
        throw ConfigError("budget.expected_excess_loss must lie in [0, 1)");
    if (!(b.phase_noise_amplitude >= 0) || !(b.feedback_amplitude >= 0))
        throw ConfigError("technical noise amplitudes must be >= 0");
    if (!(b.phase_noise_f_ref > 0) || !(b.feedback_f_ref > 0))
        throw ConfigError("reference frequencies must be positive");
    const auto& k = c.corr;
    if (!(k.fs > 0)) throw ConfigError("corr.fs must be positive");
    if (k.mode == "ingest" && k.input.empty()) throw ConfigError("corr.input is required in ingest mode");
    if (!(k.sigmas > 0)) throw ConfigError("corr.sigmas must be positive");
    if (!(k.alpha > 0) || !(k.beta > 0)) throw ConfigError("corr gains must be positive");
    try {
        k.estimator.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("corr: ") + e.what());
    }
    if (k.mode == "synthesize" && (k.n_samples < 2 * k.estimator.segment_length || k.n_samples % 2))
        throw ConfigError("corr.n_samples must be even and at least two segments");
}

inline RunConfig parse_config(std::istream& in, const std::string& name = "config") {
    RunConfig c;
    auto tables = detail::sections(c);
    std::map<int, MechanicalMode> modes;
    std::map<std::string, int> seen;  // "section.key" -> line
    std::string line, section;
    int lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw ConfigError(name + ":" + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail("malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (section.rfind("mode.", 0) == 0) {
                int idx = 0;
                const std::string num = section.substr(5);
                const auto r = std::from_chars(num.data(), num.data() + num.size(), idx);
                if (r.ec != std::errc() || r.ptr != num.data() + num.size() || idx < 1)
                    fail("mode sections are [mode.N] with N >= 1");
                if (modes.count(idx)) fail("duplicate section [" + section + "]");
                modes[idx] = MechanicalMode{};
                continue;
            }
            const bool known = std::any_of(tables.begin(), tables.end(),
                                           [&](const auto& t) { return t.first == section; });
            if (!known) fail("unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (section.empty()) fail("key '" + key + "' outside a section");
        const std::string full = section + "." + key;
        if (auto it = seen.find(full); it != seen.end())
            fail("duplicate key '" + key + "' (first on line " + std::to_string(it->second) + ")");
        seen[full] = lineno;
        try {
            if (section.rfind("mode.", 0) == 0) {
                int idx = std::stoi(section.substr(5));
                auto table = detail::mode_fields(modes[idx]);
                detail::apply(table, key, value);
            } else {
                for (auto& [s, table] : tables)
                    if (s == section) detail::apply(table, key, value);
            }
        } catch (const ConfigError& e) {
            fail("[" + section + "] " + e.what());
        }
    }
    if (!modes.empty()) {
        int expect = 1;
        c.experiment.modes.clear();
        for (auto& [idx, m] : modes) {
            if (idx != expect++) {
                throw ConfigError(name + ": mode sections must be numbered 1.." + std::to_string(modes.size()));
            }
            c.experiment.modes.push_back(m);
        }
    }
    try {
        validate(c);
    } catch (const std::exception& e) {
        throw ConfigError(name + ": " + e.what());
    }
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_config(in, path);
}

/// Every key, with numbers in shortest round-trip form.
inline std::string serialize_config(const RunConfig& cfg) {
    RunConfig c = cfg;
    std::ostringstream os;
    for (auto& [name, table] : detail::sections(c)) {
        os << '[' << name << "]\n";
        for (auto& [k, f] : table) os << k << " = " << f.get() << '\n';
        os << '\n';
    }
    for (std::size_t i = 0; i < c.experiment.modes.size(); ++i) {
        os << "[mode." << (i + 1) << "]\n";
        for (auto& [k, f] : detail::mode_fields(c.experiment.modes[i])) os << k << " = " << f.get() << '\n';
        os << '\n';
    }
    return os.str();
}

/// Budget configuration described by the settings, with reference spectra loaded.
inline BudgetConfig make_budget_config(const RunConfig& c) {
    const auto& b = c.budget;
    BudgetConfig bc;
    bc.angles = BudgetConfig::degree_sweep(b.quad_start_deg, b.quad_step_deg, b.quad_count);
    bc.freqs = b.freq_spacing == "log" ? FrequencyGrid::logarithmic(b.freq_start, b.freq_stop, b.freq_count)
                                       : FrequencyGrid::linear(b.freq_start, b.freq_stop, b.freq_count);
    bc.excess_loss = b.excess_loss;
    bc.phase_noise_ref_angle = b.phase_noise_ref_deg * constants::deg_to_rad;
    bc.phase_noise = b.phase_noise_file.empty()
                         ? ReferenceSpectrum::power_law(b.phase_noise_amplitude, b.phase_noise_f_ref,
                                                        b.phase_noise_exponent)
                         : ReferenceSpectrum::read_file(b.phase_noise_file);
    bc.feedback_displacement =
        b.feedback_file.empty()
            ? ReferenceSpectrum::power_law(b.feedback_amplitude, b.feedback_f_ref, b.feedback_exponent)
            : ReferenceSpectrum::read_file(b.feedback_file);
    bc.rin_amplitude = b.rin_amplitude;
    bc.rin_coupling = b.rin_coupling;
    bc.dark_noise_db = b.dark_noise_db;
    bc.threads = unsigned(std::max<std::uint64_t>(1, b.threads));
    bc.validate();
    return bc;
}

}  // namespace omsqz

#endif  // OMSQZ_CONFIG_HPP
