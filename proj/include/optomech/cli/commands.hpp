#pragma once

// Subcommands: parse → validate → compute → emit. Each returns the files it
// wrote; failures surface as ConfigError / InvalidArgument (exit 2) or
// NumericalError (exit 3).

#include <atomic>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "optomech/cli/config.hpp"
#include "optomech/cli/output.hpp"
#include "optomech/dynamics/classify.hpp"
#include "optomech/dynamics/psd.hpp"
#include "optomech/dynamics/trajectory.hpp"
#include "optomech/dynamics/transient.hpp"
#include "optomech/linresp.hpp"
#include "optomech/parallel.hpp"
#include "optomech/pump.hpp"
#include "optomech/stability.hpp"

namespace optomech::cli {

struct CommandOptions {
    std::filesystem::path out_dir = ".";
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    model::SweepDirection sweep = model::SweepDirection::up;
    bool resume = false;
    std::optional<std::size_t> stop_after;  // phasemap: stop after this many freshly computed columns
};

struct CommandResult {
    std::vector<std::filesystem::path> files;
    bool complete = true;
    std::vector<std::string> notes;  // one-line summaries for the console
};

/// Numerical failure at a grid cell; the message names the coordinates.
class CellError : public NumericalError {
public:
    CellError(double detuning_hz, double power_dbm, const std::string& what)
        : NumericalError("cell (detuning_hz=" + fmt(detuning_hz) + ", power_dbm=" + fmt(power_dbm) + "): " + what) {}
};

namespace detail {

/// The [pump] block as a PumpDrive, or nullopt when no strength is given.
inline std::optional<model::PumpDrive> configured_pump(const RunConfig& cfg, model::SweepDirection dir) {
    const auto& p = cfg.pump;
    if (p.power_dbm) return cfg.pump_at(*p.power_dbm, dir);
    if (p.amplitude) {
        auto d = model::PumpDrive::from_amplitude(p.detuning_hz, *p.amplitude, dir);
        d.from_shifted_resonance = p.from_shifted_resonance;
        return d;
    }
    if (p.coupling_hz) {
        // Amplitude that puts n_d = (g/g0)² photons in the cavity at the
        // requested detuning from the shifted resonance.
        const model::Rates r = cfg.device.rates();
        const double n = model::photons_for_coupling(cfg.device.coupling0_hz, *p.coupling_hz);
        const double a = units::to_angular(p.detuning_hz);
        const double hk = 0.5 * r.kappa();
        auto d = model::PumpDrive::from_amplitude(p.detuning_hz, std::sqrt(n * (a * a + hk * hk)), dir);
        d.from_shifted_resonance = true;
        return d;
    }
    return std::nullopt;
}

inline model::PumpDrive require_pump(const RunConfig& cfg, model::SweepDirection dir) {
    auto p = configured_pump(cfg, dir);
    if (!p) throw InvalidArgument("pump", "one of power_dbm, amplitude, coupling_hz is required");
    return *p;
}

inline std::string kerr_tag(double kerr_hz) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "kerr_%gmHz", kerr_hz * 1e3);
    return buf;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Seed for a phase-map cell; independent of scheduling.
inline std::uint64_t cell_seed(std::uint64_t seed, std::size_t i_det, std::size_t i_pow) {
    return detail::splitmix64(detail::splitmix64(seed ^ (static_cast<std::uint64_t>(i_det) << 32)) + i_pow);
}

// ---------------------------------------------------------------------------
// spectrum

inline CommandResult cmd_spectrum(const RunConfig& cfg, const CommandOptions& opt) {
    const std::string hash = config_hash(cfg, "spectrum", opt.seed, opt.sweep);
    const auto& sc = cfg.spectrum;
    std::vector<double> probe;
    for (double off : stability::grid_values(sc.probe_start_hz, sc.probe_stop_hz, sc.probe_step_hz)) {
        probe.push_back(cfg.device.cavity_freq_hz + off);
    }
    CommandResult res;

    if (sc.pump_sweep_start_hz) {
        if (!cfg.pump.power_dbm && !cfg.pump.amplitude) {
            throw InvalidArgument("spectrum.pump_sweep", "requires pump.power_dbm or pump.amplitude");
        }
        const auto detunings = stability::grid_values(*sc.pump_sweep_start_hz, *sc.pump_sweep_stop_hz, *sc.pump_sweep_step_hz);
        std::vector<linresp::TransmissionTrace> traces(detunings.size());
        const double norm = linresp::bare_peak_transmission(cfg.device);
        parallel_for(detunings.size(), opt.workers, [&](std::size_t i) {
            RunConfig local = cfg;
            local.pump.detuning_hz = detunings[i];
            traces[i] = linresp::spectrum(probe, cfg.device, linresp::dress(cfg.device, detail::require_pump(local, opt.sweep)));
        });
        CsvBuilder csv({"pump_freq_hz", "probe_freq_hz", "abs_T", "abs_T_norm"});
        for (const auto& tr : traces) {
            for (std::size_t k = 0; k < tr.freqs_hz.size(); ++k) {
                csv.row(tr.pump.pump_freq_hz, tr.freqs_hz[k], std::abs(tr.t[k]), std::abs(tr.t[k]) / norm);
            }
        }
        const auto path = opt.out_dir / "spectrum_map.csv";
        write_atomic(path, header("spectrum", hash, {"layout=long", "rows=" + std::to_string(detunings.size() * probe.size())}) + csv.str());
        res.files.push_back(path);
        res.notes.push_back("spectrum map: " + std::to_string(detunings.size()) + " pump settings x " +
                            std::to_string(probe.size()) + " probe points");
        return res;
    }

    linresp::DressedPump pump;
    if (cfg.pump.coupling_hz) {
        pump = linresp::dress_at_coupling(cfg.device, *cfg.pump.coupling_hz, cfg.pump.detuning_hz);
    } else if (auto p = detail::configured_pump(cfg, opt.sweep)) {
        pump = linresp::dress(cfg.device, *p);
    } else {
        pump = linresp::dress_at_coupling(cfg.device, 0.0, cfg.pump.detuning_hz);
    }
    const auto trace = linresp::spectrum(probe, cfg.device, pump);
    CsvBuilder csv({"freq_hz", "re_T", "im_T", "abs_T", "abs_T_norm"});
    for (std::size_t k = 0; k < trace.freqs_hz.size(); ++k) {
        csv.row(trace.freqs_hz[k], trace.t[k].real(), trace.t[k].imag(), std::abs(trace.t[k]), trace.normalized_at(k));
    }
    std::vector<std::string> extra{"pump_freq_hz=" + fmt(pump.pump_freq_hz), "pump_photons=" + fmt(pump.photons),
                                   "coupling_hz=" + fmt(pump.coupling_hz), "shifted_cavity_hz=" + fmt(pump.shifted_cavity_hz),
                                   "normalization=" + fmt(trace.normalization)};
    const auto peaks = linresp::find_peaks(trace);
    if (peaks.size() >= 2) {
        const double split = std::abs(peaks[0].freq_hz - peaks[1].freq_hz);
        extra.push_back("peak_splitting_hz=" + fmt(split));
        res.notes.push_back("peak splitting " + fmt(split) + " Hz (" + fmt(split / cfg.device.mech_freq_hz) + " x mech_freq)");
    }
    const auto path = opt.out_dir / "spectrum.csv";
    write_atomic(path, header("spectrum", hash, extra) + csv.str());
    res.files.push_back(path);
    res.notes.push_back("pump photons " + fmt(pump.photons) + ", coupling " + fmt(pump.coupling_hz) + " Hz");
    return res;
}

// ---------------------------------------------------------------------------
// stability

inline CommandResult cmd_stability(const RunConfig& cfg, const CommandOptions& opt) {
    const std::string hash = config_hash(cfg, "stability", opt.seed, opt.sweep);
    std::vector<double> kerrs = cfg.kerr_batch_hz;
    if (kerrs.empty()) kerrs.push_back(cfg.device.kerr_hz);
    CommandResult res;
    for (double kerr : kerrs) {
        model::DeviceParams params = cfg.device;
        params.kerr_hz = kerr;
        const auto map = stability::scan_phase_map(cfg.grid, params, opt.sweep, opt.workers);
        const std::vector<std::string> extra{"kerr_hz=" + fmt(kerr), "sweep=" + std::string(model::to_string(opt.sweep)),
                                             "attenuation_db=" + fmt(cfg.grid.attenuation_db)};
        CsvBuilder csv({"detuning_hz", "power_dbm", "class", "max_re_lambda", "n_branches"});
        std::size_t unstable = 0;
        for (std::size_t i = 0; i < map.detunings_hz.size(); ++i) {
            for (std::size_t k = 0; k < map.powers_dbm.size(); ++k) {
                const auto& c = map.at(i, k);
                if (c.cls == stability::PhaseClass::unstable) ++unstable;
                csv.row(map.detunings_hz[i], map.powers_dbm[k], stability::to_string(c.cls), c.max_re_lambda, c.n_branches);
            }
        }
        const auto tag = detail::kerr_tag(kerr);
        const auto map_path = opt.out_dir / ("phase_map_" + tag + ".csv");
        write_atomic(map_path, header("stability", hash, extra) + csv.str());

        CsvBuilder bcsv({"detuning_hz", "threshold_dbm", "threshold_P"});
        for (const auto& b : stability::extract_boundary(map, params)) {
            bcsv.row(b.detuning_hz, b.threshold_dbm, b.threshold_dimensionless);
        }
        const auto b_path = opt.out_dir / ("boundary_" + tag + ".csv");
        write_atomic(b_path, header("stability", hash, extra) + bcsv.str());
        res.files.push_back(map_path);
        res.files.push_back(b_path);
        res.notes.push_back(tag + ": " + std::to_string(unstable) + " unstable of " + std::to_string(map.cells.size()) + " cells");
    }
    return res;
}

// ---------------------------------------------------------------------------
// timedomain

namespace detail {

struct BuiltSchedule {
    dynamics::PumpSchedule nonlinear;
    std::vector<dynamics::TransientSegment> linear;
    State initial{};
    double max_coupling = 0.0;  // rad/s
    double max_detuning = 0.0;  // rad/s, magnitude
};

/// Turns the configured schedule (or a constant [pump] over the duration)
/// into nonlinear and linearized segment lists. The pump frequency is that
/// of the first on-segment; off-segments keep the frame.
inline BuiltSchedule build_schedule(const RunConfig& cfg, model::SweepDirection dir) {
    std::vector<ScheduleSegment> segs = cfg.timedomain.schedule;
    if (segs.empty()) segs.push_back({cfg.timedomain.duration_s, true, std::nullopt});

    BuiltSchedule out;
    std::optional<double> bare_detuning;  // rad/s, fixed by the first on-segment
    bool first = true;
    for (const auto& s : segs) {
        dynamics::PumpSegment nl;
        nl.duration = s.duration_s;
        dynamics::TransientSegment lin;
        lin.duration = s.duration_s;
        if (s.on) {
            model::PumpDrive pump = s.power_dbm ? cfg.pump_at(*s.power_dbm, dir) : require_pump(cfg, dir);
            if (bare_detuning) {
                pump.detuning_hz = units::to_hz(*bare_detuning);
                pump.from_shifted_resonance = false;
            }
            const auto rp = model::resolve_pump(cfg.device, pump);
            if (!bare_detuning) bare_detuning = rp.drive.detuning;
            nl.drive = rp.drive;
            lin.coupling = units::to_angular(model::coupling_rate(cfg.device.coupling0_hz, rp.photons));
            lin.detuning = rp.drive.detuning + units::to_angular(model::total_static_shift(rp.photons, cfg.device));
            if (first) out.initial = rp.fixed_point.state;
        } else {
            nl.drive = {0.0, 0.0};  // detuning filled below
        }
        out.nonlinear.segments.push_back(nl);
        out.linear.push_back(lin);
        first = false;
    }
    const double frame = bare_detuning.value_or(units::to_angular(cfg.pump.detuning_hz));
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (!segs[i].on) {
            out.nonlinear.segments[i].drive.detuning = frame;
            out.linear[i].detuning = frame;
        }
        out.max_coupling = std::max(out.max_coupling, out.linear[i].coupling);
        out.max_detuning = std::max(out.max_detuning, std::abs(out.linear[i].detuning));
    }
    return out;
}

inline double total_duration(const RunConfig& cfg) {
    if (cfg.timedomain.schedule.empty()) return cfg.timedomain.duration_s;
    double t = 0.0;
    for (const auto& s : cfg.timedomain.schedule) t += s.duration_s;
    return t;
}

}  // namespace detail

inline CommandResult cmd_timedomain(const RunConfig& cfg, const CommandOptions& opt) {
    const std::string hash = config_hash(cfg, "timedomain", opt.seed, opt.sweep);
    const model::Rates r = cfg.device.rates();
    const auto& td = cfg.timedomain;
    const auto sched = detail::build_schedule(cfg, opt.sweep);
    const double t_end = detail::total_duration(cfg);
    const double dt = cfg.sample_dt_s > 0.0 ? cfg.sample_dt_s
                                            : dynamics::default_sample_dt(sched.max_detuning, r.mech_freq, sched.max_coupling);
    CommandResult res;
    const std::vector<std::string> extra{"mode=" + std::string(to_string(td.mode)), "sample_dt_s=" + fmt(dt)};

    if (td.mode == TimeDomainMode::nonlinear) {
        const auto start = dynamics::kicked_state(sched.initial, opt.seed, td.kick);
        const auto traj = dynamics::integrate(start, r, sched.nonlinear, 0.0, t_end, dt, cfg.tolerances, td.record_from_s);
        CsvBuilder csv({"t_s", "x", "y", "p", "q"});
        for (std::size_t i = 0; i < traj.times.size(); ++i) {
            const auto& s = traj.states[i];
            csv.row(traj.times[i], s[0], s[1], s[2], s[3]);
        }
        auto meta = extra;
        meta.push_back("steps=" + std::to_string(traj.stats.steps));
        meta.push_back("rejected=" + std::to_string(traj.stats.rejected));
        meta.push_back("max_error_estimate=" + fmt(traj.stats.max_error_estimate));
        const auto tpath = opt.out_dir / "trajectory.csv";
        write_atomic(tpath, header("timedomain", hash, meta) + csv.str());
        res.files.push_back(tpath);

        const auto psd = dynamics::output_psd(traj, r, cfg.psd);
        CsvBuilder pcsv({"freq_hz", "psd_db"});
        for (std::size_t k = 0; k < psd.freqs_hz.size(); ++k) {
            pcsv.row(psd.freqs_hz[k], 10.0 * std::log10(std::max(psd.density[k], 1e-300)));
        }
        const auto ppath = opt.out_dir / "psd.csv";
        write_atomic(ppath, header("timedomain", hash, {"bin_width_hz=" + fmt(psd.bin_width_hz), "window=" + std::string(psd.window),
                                                         "segments=" + std::to_string(psd.segments)}) + pcsv.str());
        res.files.push_back(ppath);

        const auto rc = dynamics::classify_response(psd, cfg.device.mech_freq_hz, cfg.classifier);
        CsvBuilder ccsv({"class", "comb_spacing_hz", "flatness", "ambiguous"});
        ccsv.row(dynamics::to_string(rc.label), rc.comb_spacing_hz.value_or(std::nan("")), rc.flatness, rc.ambiguous ? 1 : 0);
        const auto cpath = opt.out_dir / "response.csv";
        write_atomic(cpath, header("timedomain", hash) + ccsv.str());
        res.files.push_back(cpath);
        res.notes.push_back(std::string("response: ") + dynamics::to_string(rc.label));
        return res;
    }

    if (td.mode == TimeDomainMode::linear) {
        dynamics::TransientProbe probe;
        probe.offset = units::to_angular(td.probe_from_pump_hz);
        probe.amplitude = td.probe_amplitude;
        dynamics::TransientOptions topt;
        topt.sample_dt = dt;
        topt.tol = cfg.tolerances;
        auto segs = sched.linear;
        const auto out = dynamics::transient_linear_response(r, segs, probe, topt);
        CsvBuilder csv({"t_s", "I", "Q", "abs"});
        for (std::size_t i = 0; i < out.t.size(); ++i) {
            if (out.t[i] < td.record_from_s) continue;
            csv.row(out.t[i], out.cavity[i].real(), out.cavity[i].imag(), std::abs(out.cavity[i]));
        }
        std::size_t fallback = 0;
        for (bool b : out.integrated) fallback += b ? 1 : 0;
        auto meta = extra;
        meta.push_back("probe_from_pump_hz=" + fmt(td.probe_from_pump_hz));
        meta.push_back("integrated_segments=" + std::to_string(fallback));
        const auto path = opt.out_dir / "quadratures.csv";
        write_atomic(path, header("timedomain", hash, meta) + csv.str());
        res.files.push_back(path);
        return res;
    }

    // compare: linear solution against the nonlinear equations driven by pump + probe.
    if (sched.linear.size() != 1 || !(td.schedule.empty() || td.schedule.front().on)) {
        throw InvalidArgument("schedule", "compare mode needs a constant pump (no schedule or one on-segment)");
    }
    const auto rp = model::resolve_pump(cfg.device, detail::require_pump(cfg, opt.sweep));
    const auto& fp = rp.fixed_point;
    const double phi = std::atan2(fp.y(), fp.x());
    const double ep = td.probe_ratio * rp.drive.amplitude;
    const double om = units::to_angular(td.probe_from_pump_hz);
    const Drive drive = rp.drive;
    auto rhs = [&r, drive, ep, om](double t, const State& s) {
        State f = dynamics::eom_rhs(s, r, drive);
        f[kX] += ep * std::cos(om * t);
        f[kY] -= ep * std::sin(om * t);
        return f;
    };
    const auto grid = dynamics::sample_grid(0.0, t_end, dt, 0.0);
    std::vector<std::complex<double>> nl;
    nl.reserve(grid.size());
    const std::complex<double> rot = std::exp(std::complex<double>(0.0, -phi));
    const std::complex<double> base(fp.x(), fp.y());
    State s = fp.state;
    auto stepper = dynamics::make_stepper<4>(rhs, cfg.tolerances);
    stepper.integrate(s, 0.0, t_end, grid, [&](double, const State& y) {
        nl.push_back((std::complex<double>(y[kX], y[kY]) - base) * rot);
    });

    dynamics::TransientSegment seg{t_end, r.coupling0 * std::sqrt(fp.photons()),
                                   rp.drive.detuning + units::to_angular(model::total_static_shift(fp.photons(), cfg.device))};
    dynamics::TransientProbe probe;
    probe.offset = om;
    probe.amplitude = std::complex<double>(0.0, 1.0) * ep * rot;
    dynamics::TransientOptions topt;
    topt.sample_dt = dt;
    topt.drop_fast_terms = false;
    topt.start_steady = false;
    topt.tol = cfg.tolerances;
    const auto lin = dynamics::transient_linear_response(r, {seg}, probe, topt);

    const std::size_t n = std::min(nl.size(), lin.state.size());
    double max_dev = 0.0, max_lin = 0.0;
    CsvBuilder csv({"t_s", "I_lin", "Q_lin", "I_nl", "Q_nl"});
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = lin.state[i](0);
        max_dev = std::max(max_dev, std::abs(a - nl[i]));
        max_lin = std::max(max_lin, std::abs(a));
        if (grid[i] >= td.record_from_s) csv.row(grid[i], a.real(), a.imag(), nl[i].real(), nl[i].imag());
    }
    const auto path = opt.out_dir / "compare.csv";
    write_atomic(path, header("timedomain", hash, extra) + csv.str());
    CsvBuilder scsv({"max_abs_deviation", "max_abs_linear", "relative_deviation", "probe_ratio"});
    const double rel = max_lin > 0.0 ? max_dev / max_lin : 0.0;
    scsv.row(max_dev, max_lin, rel, td.probe_ratio);
    const auto spath = opt.out_dir / "compare_summary.csv";
    write_atomic(spath, header("timedomain", hash, extra) + scsv.str());
    res.files.push_back(path);
    res.files.push_back(spath);
    res.notes.push_back("linear vs nonlinear relative deviation " + fmt(rel));
    return res;
}

// ---------------------------------------------------------------------------
// phasemap

struct ResponseCell {
    double detuning_hz = 0.0;
    double power_dbm = 0.0;
    stability::PhaseClass linear = stability::PhaseClass::indeterminate;
    double max_re_lambda = 0.0;
    std::size_t n_branches = 0;
    dynamics::ResponseClass response;
};

/// One detuning column: fixed points by continuation along the sweep, then a
/// kicked nonlinear run and PSD classification per cell.
inline std::vector<ResponseCell> phasemap_column(const RunConfig& cfg, const model::DeviceParams& params, std::size_t i_det,
                                                 double detuning_hz, const std::vector<double>& powers,
                                                 model::SweepDirection dir, std::uint64_t seed) {
    const model::Rates r = params.rates();
    std::vector<ResponseCell> col(powers.size());
    std::optional<double> prev_p;
    const std::size_t n = powers.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = dir == model::SweepDirection::up ? k : n - 1 - k;
        ResponseCell& cell = col[i];
        cell.detuning_hz = detuning_hz;
        cell.power_dbm = powers[i];
        try {
            const auto pump = model::PumpDrive::from_power(detuning_hz, units::dbm_to_watts(powers[i] - cfg.grid.attenuation_db), dir);
            const Drive d{units::to_angular(detuning_hz), pump.drive_amplitude(r)};
            const auto pc = stability::classify_point(r, d, prev_p);
            prev_p = pc.occupied().p();
            cell.linear = pc.cls;
            cell.max_re_lambda = pc.occupied_verdict().max_re;
            cell.n_branches = pc.fixed_points.size();
            const double g = r.coupling0 * std::sqrt(pc.occupied().photons());
            const double dt = cfg.sample_dt_s > 0.0 ? cfg.sample_dt_s : dynamics::default_sample_dt(d.detuning, r.mech_freq, g);
            const double t1 = cfg.phasemap.duration_s;
            const double record_from = cfg.psd.transient_fraction * t1;
            const auto start = dynamics::kicked_state(pc.occupied().state, cell_seed(seed, i_det, i), cfg.phasemap.kick);
            const auto traj = dynamics::integrate(start, r, d, 0.0, t1, dt, cfg.tolerances, record_from);
            dynamics::WelchOptions w = cfg.psd;
            w.transient_fraction = 0.0;
            cell.response = dynamics::classify_response(dynamics::output_psd(traj, r, w), params.mech_freq_hz, cfg.classifier);
        } catch (const InvalidArgument&) {
            throw;
        } catch (const std::exception& e) {
            throw CellError(detuning_hz, powers[i], e.what());
        }
    }
    return col;
}

inline std::vector<std::string> response_columns() {
    return {"detuning_hz", "power_dbm", "class", "max_re_lambda", "n_branches", "comb_spacing_hz", "flatness", "ambiguous", "linear_class"};
}

inline std::string response_rows(const std::vector<ResponseCell>& col) {
    std::string body;
    for (const auto& c : col) {
        body += fmt(c.detuning_hz) + "," + fmt(c.power_dbm) + "," + dynamics::to_string(c.response.label) + "," +
                fmt(c.max_re_lambda) + "," + std::to_string(c.n_branches) + "," +
                fmt(c.response.comb_spacing_hz.value_or(std::nan(""))) + "," + fmt(c.response.flatness) + "," +
                (c.response.ambiguous ? "1" : "0") + "," + stability::to_string(c.linear) + "\n";
    }
    return body;
}

inline std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::size_t i_det) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "column_%05zu.csv", i_det);
    return out_dir / "checkpoints" / buf;
}

/// Rows of a checkpoint if it exists, matches the hash and has `rows` lines.
inline std::optional<std::string> load_checkpoint(const std::filesystem::path& path, const std::string& hash, std::size_t rows) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    const std::string text = read_file(path);
    const std::string tag = "# config_hash=" + hash + "\n";
    const auto pos = text.find(tag);
    if (pos != 0) return std::nullopt;
    std::string body = text.substr(tag.size());
    if (static_cast<std::size_t>(std::count(body.begin(), body.end(), '\n')) != rows) return std::nullopt;
    return body;
}

inline CommandResult cmd_phasemap(const RunConfig& cfg, const CommandOptions& opt) {
    const std::string hash = config_hash(cfg, "phasemap", opt.seed, opt.sweep);
    const auto detunings = cfg.grid.detunings();
    const auto powers = cfg.grid.powers();
    std::vector<std::string> bodies(detunings.size());
    std::vector<char> done(detunings.size(), 0);

    if (opt.resume) {
        for (std::size_t i = 0; i < detunings.size(); ++i) {
            if (auto body = load_checkpoint(checkpoint_path(opt.out_dir, i), hash, powers.size())) {
                bodies[i] = std::move(*body);
                done[i] = 1;
            }
        }
    }
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < detunings.size(); ++i) {
        if (!done[i]) todo.push_back(i);
    }

    std::atomic<std::size_t> finished{0};
    std::atomic<bool> stop{false};
    parallel_for(todo.size(), opt.workers, [&](std::size_t j) {
        if (stop.load()) return;
        const std::size_t i = todo[j];
        const auto col = phasemap_column(cfg, cfg.device, i, detunings[i], powers, opt.sweep, opt.seed);
        bodies[i] = response_rows(col);
        write_atomic(checkpoint_path(opt.out_dir, i), "# config_hash=" + hash + "\n" + bodies[i]);
        done[i] = 1;
        const std::size_t n = ++finished;
        if (opt.stop_after && n >= *opt.stop_after) stop.store(true);
    });

    CommandResult res;
    for (char d : done) {
        if (!d) res.complete = false;
    }
    if (!res.complete) {
        res.notes.push_back("stopped after " + std::to_string(finished.load()) + " columns; rerun with --resume");
        return res;
    }
    std::string body;
    {
        CsvBuilder head(response_columns());
        body = head.str();
    }
    for (const auto& b : bodies) body += b;
    const auto path = opt.out_dir / "response_map.csv";
    write_atomic(path, header("phasemap", hash, {"sweep=" + std::string(model::to_string(opt.sweep)),
                                                 "duration_s=" + fmt(cfg.phasemap.duration_s),
                                                 "attenuation_db=" + fmt(cfg.grid.attenuation_db)}) + body);
    res.files.push_back(path);
    res.notes.push_back("response map: " + std::to_string(detunings.size() * powers.size()) + " cells");
    return res;
}

}  // namespace optomech::cli
