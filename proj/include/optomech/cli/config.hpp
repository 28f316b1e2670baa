#pragma once

// Run configuration: an INI-style text file of `key = value` lines grouped
// in [sections]. Keys carry their unit in the name (_hz, _dbm, _s, _db).
// Unknown sections and keys are rejected with a line diagnostic.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "optomech/dynamics/classify.hpp"
#include "optomech/dynamics/integrator.hpp"
#include "optomech/dynamics/psd.hpp"
#include "optomech/errors.hpp"
#include "optomech/model.hpp"
#include "optomech/stability.hpp"

namespace optomech::cli {

/// Malformed configuration text. Maps to exit code 2.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, std::size_t line, const std::string& what)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct Entry {
    std::string section;
    std::string key;
    std::string value;
    std::size_t line = 0;

    std::string name() const { return section + "." + key; }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Splits text into entries. `#` and `;` start comments.
inline std::vector<Entry> tokenize(const std::string& text, const std::string& source) {
    std::vector<Entry> out;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string_view line(raw);
        const auto cut = line.find_first_of("#;");
        if (cut != std::string_view::npos) line = line.substr(0, cut);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source, lineno, "unterminated section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            if (section.empty()) throw ConfigError(source, lineno, "empty section name");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(source, lineno, "expected 'key = value'");
        Entry e;
        e.section = section;
        e.key = std::string(detail::trim(line.substr(0, eq)));
        e.value = std::string(detail::trim(line.substr(eq + 1)));
        e.line = lineno;
        if (e.key.empty()) throw ConfigError(source, lineno, "missing key");
        if (section.empty()) throw ConfigError(source, lineno, "key '" + e.key + "' outside any section");
        if (e.value.empty()) throw ConfigError(source, lineno, "missing value for '" + e.name() + "'");
        out.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Typed configuration

enum class TimeDomainMode { nonlinear, linear, compare };

inline const char* to_string(TimeDomainMode m) {
    switch (m) {
        case TimeDomainMode::nonlinear: return "nonlinear";
        case TimeDomainMode::linear: return "linear";
        case TimeDomainMode::compare: return "compare";
    }
    return "?";
}

/// One pump segment: off, on at the [pump] setting, or on at a given power.
struct ScheduleSegment {
    double duration_s = 0.0;
    bool on = false;
    std::optional<double> power_dbm;
};

struct PumpConfig {
    double detuning_hz = -6.32e6;
    std::optional<double> power_dbm;
    std::optional<double> amplitude;     // E, rad/s·√photon
    std::optional<double> coupling_hz;   // target g; implies from_shifted_resonance
    bool from_shifted_resonance = false;
    double attenuation_db = 0.0;
};

struct SpectrumConfig {
    double probe_start_hz = -8e6;  // offsets from the bare cavity frequency
    double probe_stop_hz = 8e6;
    double probe_step_hz = 5e3;
    std::optional<double> pump_sweep_start_hz;  // pump detuning sweep for 2-D maps
    std::optional<double> pump_sweep_stop_hz;
    std::optional<double> pump_sweep_step_hz;
};

struct TimeDomainConfig {
    TimeDomainMode mode = TimeDomainMode::nonlinear;
    double duration_s = 200e-6;
    double record_from_s = 0.0;
    double probe_from_pump_hz = 6.32e6;  // Ω/2π
    double probe_amplitude = 1.0;        // Sp for the linear solution
    double probe_ratio = 1e-3;           // probe/pump amplitude in compare mode
    double kick = 1e-3;                  // √photon
    std::vector<ScheduleSegment> schedule;
};

struct PhaseMapConfig {
    double duration_s = 200e-6;
    double kick = 1e-3;
};

struct RunConfig {
    model::DeviceParams device;
    PumpConfig pump;
    SpectrumConfig spectrum;
    stability::GridSpec grid;
    std::vector<double> kerr_batch_hz;  // stability: one map per entry
    dynamics::Tolerances tolerances;
    double sample_dt_s = 0.0;           // 0: derived from the fastest scale
    TimeDomainConfig timedomain;
    PhaseMapConfig phasemap;
    dynamics::WelchOptions psd;
    dynamics::ClassifierOptions classifier;
    std::vector<Entry> entries;         // as parsed, for hashing

    /// Pump drive at the given axis power, honouring attenuation and options.
    model::PumpDrive pump_at(double axis_dbm, model::SweepDirection dir) const {
        auto p = model::PumpDrive::from_power(pump.detuning_hz, units::dbm_to_watts(axis_dbm - pump.attenuation_db), dir);
        p.from_shifted_resonance = pump.from_shifted_resonance;
        return p;
    }
};

namespace detail {

inline double parse_double(const Entry& e, const std::string& source) {
    double v = 0.0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    if (b != end && *b == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, end, v);
    if (ec != std::errc() || ptr != end) throw ConfigError(source, e.line, "'" + e.name() + "': not a number: " + e.value);
    if (!std::isfinite(v)) throw ConfigError(source, e.line, "'" + e.name() + "': must be finite");
    return v;
}

inline std::vector<double> parse_list(const Entry& e, const std::string& source) {
    std::vector<double> out;
    std::string_view rest(e.value);
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        Entry item = e;
        item.value = std::string(trim(rest.substr(0, comma)));
        out.push_back(parse_double(item, source));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

inline bool parse_bool(const Entry& e, const std::string& source) {
    if (e.value == "true" || e.value == "yes" || e.value == "1") return true;
    if (e.value == "false" || e.value == "no" || e.value == "0") return false;
    throw ConfigError(source, e.line, "'" + e.name() + "': expected true or false");
}

inline std::size_t parse_count(const Entry& e, const std::string& source) {
    const double v = parse_double(e, source);
    if (v < 1.0 || v != std::floor(v) || v > 1e9) throw ConfigError(source, e.line, "'" + e.name() + "': expected a positive integer");
    return static_cast<std::size_t>(v);
}

}  // namespace detail

/// Parses and validates configuration text. Throws ConfigError for syntax,
/// unknown keys and duplicates; InvalidArgument (naming the field) for
/// values outside module preconditions.
inline RunConfig parse_config(const std::string& text, const std::string& source = "config") {
    RunConfig cfg;
    cfg.entries = tokenize(text, source);
    using Setter = std::function<void(const Entry&)>;
    const auto num = [&](double& target) { return Setter([&target, &source](const Entry& e) { target = detail::parse_double(e, source); }); };
    const auto opt = [&](std::optional<double>& target) {
        return Setter([&target, &source](const Entry& e) { target = detail::parse_double(e, source); });
    };
    const auto flag = [&](bool& target) { return Setter([&target, &source](const Entry& e) { target = detail::parse_bool(e, source); }); };
    const auto count = [&](std::size_t& target) {
        return Setter([&target, &source](const Entry& e) { target = detail::parse_count(e, source); });
    };

    std::map<std::string, Setter> table{
        {"device.cavity_freq_hz", num(cfg.device.cavity_freq_hz)},
        {"device.mech_freq_hz", num(cfg.device.mech_freq_hz)},
        {"device.input_rate_hz", num(cfg.device.input_rate_hz)},
        {"device.output_rate_hz", num(cfg.device.output_rate_hz)},
        {"device.internal_rate_hz", num(cfg.device.internal_rate_hz)},
        {"device.mech_damping_hz", num(cfg.device.mech_damping_hz)},
        {"device.coupling0_hz", num(cfg.device.coupling0_hz)},
        {"device.kerr_hz", num(cfg.device.kerr_hz)},
        {"device.zero_point_m", [&](const Entry& e) { cfg.device.zero_point_m = detail::parse_double(e, source); }},

        {"pump.detuning_hz", num(cfg.pump.detuning_hz)},
        {"pump.power_dbm", opt(cfg.pump.power_dbm)},
        {"pump.amplitude", opt(cfg.pump.amplitude)},
        {"pump.coupling_hz", opt(cfg.pump.coupling_hz)},
        {"pump.from_shifted_resonance", flag(cfg.pump.from_shifted_resonance)},
        {"pump.attenuation_db", num(cfg.pump.attenuation_db)},

        {"spectrum.probe_start_hz", num(cfg.spectrum.probe_start_hz)},
        {"spectrum.probe_stop_hz", num(cfg.spectrum.probe_stop_hz)},
        {"spectrum.probe_step_hz", num(cfg.spectrum.probe_step_hz)},
        {"spectrum.pump_sweep_start_hz", opt(cfg.spectrum.pump_sweep_start_hz)},
        {"spectrum.pump_sweep_stop_hz", opt(cfg.spectrum.pump_sweep_stop_hz)},
        {"spectrum.pump_sweep_step_hz", opt(cfg.spectrum.pump_sweep_step_hz)},

        {"grid.detuning_start_hz", num(cfg.grid.detuning_start_hz)},
        {"grid.detuning_stop_hz", num(cfg.grid.detuning_stop_hz)},
        {"grid.detuning_step_hz", num(cfg.grid.detuning_step_hz)},
        {"grid.power_start_dbm", num(cfg.grid.power_start_dbm)},
        {"grid.power_stop_dbm", num(cfg.grid.power_stop_dbm)},
        {"grid.power_step_dbm", num(cfg.grid.power_step_dbm)},
        {"grid.attenuation_db", num(cfg.grid.attenuation_db)},

        {"stability.kerr_batch_hz", [&](const Entry& e) { cfg.kerr_batch_hz = detail::parse_list(e, source); }},

        {"integrator.rel_tol", num(cfg.tolerances.rel)},
        {"integrator.abs_tol", num(cfg.tolerances.abs)},
        {"integrator.max_step_s", num(cfg.tolerances.max_step)},
        {"integrator.max_steps", count(cfg.tolerances.max_steps)},
        {"integrator.sample_dt_s", num(cfg.sample_dt_s)},

        {"timedomain.mode",
         [&](const Entry& e) {
             if (e.value == "nonlinear") cfg.timedomain.mode = TimeDomainMode::nonlinear;
             else if (e.value == "linear") cfg.timedomain.mode = TimeDomainMode::linear;
             else if (e.value == "compare") cfg.timedomain.mode = TimeDomainMode::compare;
             else throw ConfigError(source, e.line, "'timedomain.mode': expected nonlinear, linear or compare");
         }},
        {"timedomain.duration_s", num(cfg.timedomain.duration_s)},
        {"timedomain.record_from_s", num(cfg.timedomain.record_from_s)},
        {"timedomain.probe_from_pump_hz", num(cfg.timedomain.probe_from_pump_hz)},
        {"timedomain.probe_amplitude", num(cfg.timedomain.probe_amplitude)},
        {"timedomain.probe_ratio", num(cfg.timedomain.probe_ratio)},
        {"timedomain.kick", num(cfg.timedomain.kick)},

        {"phasemap.duration_s", num(cfg.phasemap.duration_s)},
        {"phasemap.kick", num(cfg.phasemap.kick)},

        {"psd.transient_fraction", num(cfg.psd.transient_fraction)},
        {"psd.segments", count(cfg.psd.segments)},
        {"psd.overlap", num(cfg.psd.overlap)},

        {"classifier.static_floor", num(cfg.classifier.static_floor)},
        {"classifier.flatness_threshold", num(cfg.classifier.flatness_threshold)},
        {"classifier.comb_threshold", num(cfg.classifier.comb_threshold)},
        {"classifier.peak_prominence_db", num(cfg.classifier.peak_prominence_db)},
    };

    std::map<std::string, std::size_t> seen;
    for (const Entry& e : cfg.entries) {
        if (e.section == "schedule") {
            if (e.key != "segment") throw ConfigError(source, e.line, "unknown key '" + e.name() + "'");
            // segment = duration_s, power_dbm | on | off
            const auto comma = e.value.find(',');
            if (comma == std::string::npos) throw ConfigError(source, e.line, "'schedule.segment': expected 'duration_s, power_dbm|on|off'");
            Entry dur = e;
            dur.value = std::string(detail::trim(std::string_view(e.value).substr(0, comma)));
            Entry pow = e;
            pow.value = std::string(detail::trim(std::string_view(e.value).substr(comma + 1)));
            ScheduleSegment seg;
            seg.duration_s = detail::parse_double(dur, source);
            if (!(seg.duration_s > 0.0)) throw ConfigError(source, e.line, "'schedule.segment': duration must be > 0");
            if (pow.value == "on") {
                seg.on = true;
            } else if (pow.value != "off") {
                seg.on = true;
                seg.power_dbm = detail::parse_double(pow, source);
            }
            cfg.timedomain.schedule.push_back(seg);
            continue;
        }
        const auto it = table.find(e.name());
        if (it == table.end()) throw ConfigError(source, e.line, "unknown key '" + e.name() + "'");
        if (const auto prev = seen.find(e.name()); prev != seen.end()) {
            throw ConfigError(source, e.line, "duplicate key '" + e.name() + "' (first on line " + std::to_string(prev->second) + ")");
        }
        seen.emplace(e.name(), e.line);
        it->second(e);
    }

    // Semantic validation against module preconditions.
    try {
        cfg.device.validate();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument("device." + e.field(), std::string(e.what()).substr(e.field().size() + 2));
    }
    for (double k : cfg.kerr_batch_hz) {
        if (k < 0.0) throw InvalidArgument("stability.kerr_batch_hz", "entries must be >= 0");
    }
    const int pump_sources = static_cast<int>(cfg.pump.power_dbm.has_value()) + static_cast<int>(cfg.pump.amplitude.has_value()) +
                             static_cast<int>(cfg.pump.coupling_hz.has_value());
    if (pump_sources > 1) throw InvalidArgument("pump", "give at most one of power_dbm, amplitude, coupling_hz");
    if (cfg.pump.amplitude && *cfg.pump.amplitude < 0.0) throw InvalidArgument("pump.amplitude", "must be >= 0");
    if (cfg.pump.coupling_hz && *cfg.pump.coupling_hz < 0.0) throw InvalidArgument("pump.coupling_hz", "must be >= 0");
    if (!(cfg.spectrum.probe_step_hz > 0.0) || cfg.spectrum.probe_stop_hz < cfg.spectrum.probe_start_hz) {
        throw InvalidArgument("spectrum.probe_step_hz", "need start <= stop and step > 0");
    }
    const int sweep_keys = static_cast<int>(cfg.spectrum.pump_sweep_start_hz.has_value()) +
                           static_cast<int>(cfg.spectrum.pump_sweep_stop_hz.has_value()) +
                           static_cast<int>(cfg.spectrum.pump_sweep_step_hz.has_value());
    if (sweep_keys != 0 && sweep_keys != 3) throw InvalidArgument("spectrum.pump_sweep", "give start, stop and step together");
    if (sweep_keys == 3 && (!(*cfg.spectrum.pump_sweep_step_hz > 0.0) ||
                            *cfg.spectrum.pump_sweep_stop_hz < *cfg.spectrum.pump_sweep_start_hz)) {
        throw InvalidArgument("spectrum.pump_sweep_step_hz", "need start <= stop and step > 0");
    }
    if (!(cfg.grid.detuning_step_hz > 0.0) || cfg.grid.detuning_stop_hz < cfg.grid.detuning_start_hz) {
        throw InvalidArgument("grid.detuning_step_hz", "need start <= stop and step > 0");
    }
    if (!(cfg.grid.power_step_dbm > 0.0) || cfg.grid.power_stop_dbm < cfg.grid.power_start_dbm) {
        throw InvalidArgument("grid.power_step_dbm", "need start <= stop and step > 0");
    }
    if (!(cfg.tolerances.rel > 0.0)) throw InvalidArgument("integrator.rel_tol", "must be > 0");
    if (!(cfg.tolerances.abs > 0.0)) throw InvalidArgument("integrator.abs_tol", "must be > 0");
    if (!(cfg.tolerances.max_step > 0.0)) throw InvalidArgument("integrator.max_step_s", "must be > 0");
    if (cfg.sample_dt_s < 0.0) throw InvalidArgument("integrator.sample_dt_s", "must be >= 0");
    if (!(cfg.timedomain.duration_s > 0.0)) throw InvalidArgument("timedomain.duration_s", "must be > 0");
    if (cfg.timedomain.record_from_s < 0.0 || cfg.timedomain.record_from_s >= cfg.timedomain.duration_s) {
        throw InvalidArgument("timedomain.record_from_s", "must lie in [0, duration_s)");
    }
    if (!(cfg.timedomain.probe_ratio > 0.0)) throw InvalidArgument("timedomain.probe_ratio", "must be > 0");
    if (cfg.timedomain.kick < 0.0) throw InvalidArgument("timedomain.kick", "must be >= 0");
    if (!(cfg.phasemap.duration_s > 0.0)) throw InvalidArgument("phasemap.duration_s", "must be > 0");
    if (cfg.phasemap.kick < 0.0) throw InvalidArgument("phasemap.kick", "must be >= 0");
    if (!(cfg.psd.transient_fraction >= 0.0 && cfg.psd.transient_fraction < 1.0)) {
        throw InvalidArgument("psd.transient_fraction", "must be in [0, 1)");
    }
    if (!(cfg.psd.overlap >= 0.0 && cfg.psd.overlap < 1.0)) throw InvalidArgument("psd.overlap", "must be in [0, 1)");
    if (!(cfg.classifier.static_floor > 0.0)) throw InvalidArgument("classifier.static_floor", "must be > 0");
    if (!(cfg.classifier.flatness_threshold > 0.0 && cfg.classifier.flatness_threshold < 1.0)) {
        throw InvalidArgument("classifier.flatness_threshold", "must be in (0, 1)");
    }
    if (!(cfg.classifier.comb_threshold > 0.0 && cfg.classifier.comb_threshold < 1.0)) {
        throw InvalidArgument("classifier.comb_threshold", "must be in (0, 1)");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

}  // namespace optomech::cli
