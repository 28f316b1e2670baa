#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "optomech/cli/commands.hpp"

using namespace optomech;
using namespace optomech::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("optomech_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

fs::path write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

struct Run {
    int code;
    std::string output;
};

Run run_cli(const std::string& args) {
    const std::string cmd = std::string(OPTOMECH_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = ::pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

// Data rows of a CSV: comments and the column header stripped.
std::vector<std::string> rows(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        out.push_back(line);
    }
    return out;
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> f;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    return f;
}

std::size_t error_line(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return 0;
}

}  // namespace

TEST_CASE("config syntax errors carry line numbers") {
    CHECK(error_line("[device]\nkerr_hz = 0\nbogus = 1\n") == 3);
    CHECK(error_line("[device]\nkerr_hz = 0\n\nkerr_hz = 1\n") == 4);
    CHECK(error_line("kerr_hz = 0\n") == 1);
    CHECK(error_line("[device\n") == 1);
    CHECK(error_line("[device]\nkerr_hz\n") == 2);
    CHECK(error_line("[device]\nkerr_hz = fast\n") == 2);
    CHECK(error_line("[timedomain]\nmode = chaotic\n") == 2);
    CHECK(error_line("[schedule]\nsegment = 1e-6\n") == 2);
    CHECK(error_line("[schedule]\nsegment = -1e-6, on\n") == 2);
    CHECK(error_line("# comment\n[device]\nkerr_hz = 1e-3 ; trailing\n") == 0);
}

TEST_CASE("config values and semantic validation") {
    const auto cfg = parse_config("[device]\nkerr_hz = 0\n[pump]\npower_dbm = -20\n[schedule]\nsegment = 1e-6, off\nsegment = 2e-6, -10\n");
    CHECK(cfg.device.kerr_hz == 0.0);
    CHECK(cfg.pump.power_dbm == -20.0);
    REQUIRE(cfg.timedomain.schedule.size() == 2);
    CHECK_FALSE(cfg.timedomain.schedule[0].on);
    CHECK(cfg.timedomain.schedule[1].power_dbm == -10.0);

    try {
        parse_config("[device]\ninput_rate_hz = 0\noutput_rate_hz = 0\ninternal_rate_hz = 0\n");
        FAIL("expected InvalidArgument");
    } catch (const InvalidArgument& e) {
        CHECK(e.field().rfind("device.", 0) == 0);
    }
    CHECK_THROWS_AS(parse_config("[pump]\npower_dbm = -20\namplitude = 1\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_config("[grid]\npower_step_dbm = 0\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_config("[stability]\nkerr_batch_hz = 0, -1\n"), InvalidArgument);
    CHECK_THROWS_AS(parse_config("[spectrum]\npump_sweep_start_hz = 1\n"), InvalidArgument);
}

TEST_CASE("exit codes") {
    const auto dir = scratch("exit");
    const auto bad_syntax = write_text(dir / "a.ini", "[device]\nunknown = 1\n");
    auto r = run_cli("spectrum -c " + bad_syntax.string() + " -o " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find(":2:") != std::string::npos);

    const auto no_loss = write_text(dir / "b.ini", "[device]\ninput_rate_hz = 0\noutput_rate_hz = 0\ninternal_rate_hz = 0\n");
    r = run_cli("spectrum -c " + no_loss.string() + " -o " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find("device.") != std::string::npos);

    const auto bad_sched = write_text(dir / "c.ini", "[timedomain]\nmode = linear\n[schedule]\nsegment = 1e-6, sometimes\n");
    r = run_cli("timedomain -c " + bad_sched.string() + " -o " + dir.string());
    CHECK(r.code == 2);

    const auto no_pump = write_text(dir / "d.ini", "[timedomain]\nmode = nonlinear\n");
    r = run_cli("timedomain -c " + no_pump.string() + " -o " + dir.string());
    CHECK(r.code == 2);
    CHECK(r.output.find("pump") != std::string::npos);

    r = run_cli("spectrum -c " + (dir / "missing.ini").string());
    CHECK(r.code != 0);
    fs::remove_all(dir);
}

TEST_CASE("spectrum command") {
    const auto dir = scratch("spectrum");
    CommandOptions opt;
    opt.out_dir = dir;
    SECTION("single probe frequency") {
        const auto cfg = parse_config("[pump]\ncoupling_hz = 1e6\n[spectrum]\nprobe_start_hz = 6e6\nprobe_stop_hz = 6e6\n");
        const auto res = cmd_spectrum(cfg, opt);
        REQUIRE(res.files.size() == 1);
        const auto body = rows(res.files[0]);
        REQUIRE(body.size() == 1);
        CHECK(split(body[0]).size() == 5);
    }
    SECTION("pump sweep map") {
        const auto cfg = parse_config(
            "[pump]\npower_dbm = -20\n[spectrum]\nprobe_start_hz = -1e6\nprobe_stop_hz = 1e6\nprobe_step_hz = 100e3\n"
            "pump_sweep_start_hz = -7e6\npump_sweep_stop_hz = -6e6\npump_sweep_step_hz = 250e3\n");
        const auto res = cmd_spectrum(cfg, opt);
        REQUIRE(res.files.size() == 1);
        CHECK(rows(res.files[0]).size() == 21 * 5);
    }
    SECTION("pump sweep needs a power or amplitude") {
        const auto cfg = parse_config("[pump]\ncoupling_hz = 1e6\n[spectrum]\npump_sweep_start_hz = -7e6\npump_sweep_stop_hz = -6e6\n"
                                      "pump_sweep_step_hz = 250e3\n");
        CHECK_THROWS_AS(cmd_spectrum(cfg, opt), InvalidArgument);
    }
    fs::remove_all(dir);
}

TEST_CASE("stability command") {
    const auto dir = scratch("stability");
    CommandOptions opt;
    opt.out_dir = dir;
    SECTION("one map and boundary per Kerr value") {
        const auto cfg = parse_config(
            "[grid]\ndetuning_start_hz = -7e6\ndetuning_stop_hz = -5e6\ndetuning_step_hz = 500e3\npower_start_dbm = -40\n"
            "power_stop_dbm = -10\npower_step_dbm = 1\n[stability]\nkerr_batch_hz = 0, 5e-3, 12.5e-3\n");
        const auto res = cmd_stability(cfg, opt);
        CHECK(res.files.size() == 6);
        for (const char* tag : {"kerr_0mHz", "kerr_5mHz", "kerr_12.5mHz"}) {
            CHECK(fs::exists(dir / (std::string("boundary_") + tag + ".csv")));
            CHECK(rows(dir / (std::string("phase_map_") + tag + ".csv")).size() == 5 * 31);
        }
    }
    SECTION("vanishing power is stable everywhere") {
        const auto cfg = parse_config(
            "[grid]\ndetuning_start_hz = -10e6\ndetuning_stop_hz = 10e6\ndetuning_step_hz = 1e6\npower_start_dbm = -200\n"
            "power_stop_dbm = -190\npower_step_dbm = 5\n");
        const auto res = cmd_stability(cfg, opt);
        const auto body = rows(res.files[0]);
        REQUIRE(body.size() == 21 * 3);
        for (const auto& row : body) CHECK(split(row)[2] == "stable");
    }
    SECTION("sweep direction only matters where branches coexist") {
        const std::string text =
            "[device]\nkerr_hz = 100\n[grid]\ndetuning_start_hz = -12e6\ndetuning_stop_hz = 12e6\ndetuning_step_hz = 1e6\n"
            "power_start_dbm = -110\npower_stop_dbm = -80\npower_step_dbm = 1\n";
        const auto cfg = parse_config(text);
        const auto up_dir = dir / "up", down_dir = dir / "down";
        fs::create_directories(up_dir);
        fs::create_directories(down_dir);
        opt.out_dir = up_dir;
        const auto up = rows(cmd_stability(cfg, opt).files[0]);
        opt.out_dir = down_dir;
        opt.sweep = model::SweepDirection::down;
        const auto down = rows(cmd_stability(cfg, opt).files[0]);
        REQUIRE(up.size() == down.size());
        std::size_t differing = 0;
        for (std::size_t i = 0; i < up.size(); ++i) {
            if (up[i] == down[i]) continue;
            ++differing;
            INFO(up[i] << " vs " << down[i]);
            CHECK(split(up[i])[2] == "bistable");
            CHECK(split(down[i])[2] == "bistable");
        }
        CHECK(differing > 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("timedomain command") {
    const auto dir = scratch("timedomain");
    CommandOptions opt;
    opt.out_dir = dir;
    SECTION("linear pulse") {
        const auto cfg = parse_config(
            "[pump]\ncoupling_hz = 1.55e6\n[timedomain]\nmode = linear\nprobe_from_pump_hz = 6.692e6\n[schedule]\n"
            "segment = 1e-6, off\nsegment = 2e-6, on\nsegment = 1e-6, off\n[integrator]\nsample_dt_s = 1e-8\n");
        const auto res = cmd_timedomain(cfg, opt);
        REQUIRE(res.files.size() == 1);
        CHECK(rows(res.files[0]).size() == 401);
    }
    SECTION("compare mode writes a summary") {
        const auto cfg = parse_config(
            "[device]\nkerr_hz = 0\n[pump]\ncoupling_hz = 1.55e6\n[timedomain]\nmode = compare\nduration_s = 2e-6\n"
            "probe_from_pump_hz = 6.692e6\nprobe_ratio = 1e-3\n");
        const auto res = cmd_timedomain(cfg, opt);
        REQUIRE(fs::exists(dir / "compare_summary.csv"));
        const auto body = rows(dir / "compare_summary.csv");
        REQUIRE(body.size() == 1);
        const auto f = split(body[0]);
        CHECK(std::stod(f[2]) < 0.01);
        CHECK(std::stod(f[3]) == 1e-3);
    }
    SECTION("compare mode rejects a switched pump") {
        const auto cfg = parse_config(
            "[pump]\ncoupling_hz = 1e6\n[timedomain]\nmode = compare\n[schedule]\nsegment = 1e-6, off\nsegment = 1e-6, on\n");
        CHECK_THROWS_AS(cmd_timedomain(cfg, opt), InvalidArgument);
    }
    fs::remove_all(dir);
}

TEST_CASE("phasemap single cell equals a direct classification") {
    const auto dir = scratch("phasemap1");
    const auto cfg = parse_config(
        "[device]\nkerr_hz = 0\n[grid]\ndetuning_start_hz = -6.32e6\ndetuning_stop_hz = -6.32e6\npower_start_dbm = -25\n"
        "power_stop_dbm = -25\n[phasemap]\nduration_s = 100e-6\n");
    CommandOptions opt;
    opt.out_dir = dir;
    opt.seed = 7;
    const auto res = cmd_phasemap(cfg, opt);
    REQUIRE(res.complete);
    const auto body = rows(dir / "response_map.csv");
    REQUIRE(body.size() == 1);

    const auto r = cfg.device.rates();
    const auto pump = model::PumpDrive::from_power(-6.32e6, units::dbm_to_watts(-25.0));
    const Drive d{units::to_angular(-6.32e6), pump.drive_amplitude(r)};
    const auto pc = stability::classify_point(r, d);
    const double dt = dynamics::default_sample_dt(d.detuning, r.mech_freq, r.coupling0 * std::sqrt(pc.occupied().photons()));
    const auto start = dynamics::kicked_state(pc.occupied().state, cell_seed(7, 0, 0), 1e-3);
    const auto traj = dynamics::integrate(start, r, d, 0.0, 100e-6, dt, {}, 50e-6);
    dynamics::WelchOptions w;
    w.transient_fraction = 0.0;
    const auto direct = dynamics::classify_response(dynamics::output_psd(traj, r, w), cfg.device.mech_freq_hz);
    const auto f = split(body[0]);
    CHECK(f[2] == dynamics::to_string(direct.label));
    CHECK(f[2] == "self_oscillation");
    CHECK(f[5] == fmt(*direct.comb_spacing_hz));
    fs::remove_all(dir);
}

TEST_CASE("phasemap determinism and resume") {
    const auto dir = scratch("phasemap");
    const std::string text =
        "[device]\nkerr_hz = 0\n[grid]\ndetuning_start_hz = -6.8e6\ndetuning_stop_hz = -6.2e6\ndetuning_step_hz = 300e3\n"
        "power_start_dbm = -34\npower_stop_dbm = -22\npower_step_dbm = 6\n[phasemap]\nduration_s = 40e-6\n";
    const auto cfg = parse_config(text);
    auto run = [&](const std::string& name, std::size_t workers, std::optional<std::size_t> stop, bool resume) {
        CommandOptions opt;
        opt.out_dir = dir / name;
        fs::create_directories(opt.out_dir);
        opt.workers = workers;
        opt.seed = 3;
        opt.stop_after = stop;
        opt.resume = resume;
        return cmd_phasemap(cfg, opt);
    };
    REQUIRE(run("serial", 1, std::nullopt, false).complete);
    REQUIRE(run("parallel", 2, std::nullopt, false).complete);
    const auto serial = read_file(dir / "serial" / "response_map.csv");
    CHECK(rows(dir / "serial" / "response_map.csv").size() == 9);
    CHECK(serial == read_file(dir / "parallel" / "response_map.csv"));

    const auto partial = run("resumed", 1, 1, false);
    CHECK_FALSE(partial.complete);
    CHECK_FALSE(fs::exists(dir / "resumed" / "response_map.csv"));
    CHECK(fs::exists(dir / "resumed" / "checkpoints" / "column_00000.csv"));
    REQUIRE(run("resumed", 2, std::nullopt, true).complete);
    CHECK(serial == read_file(dir / "resumed" / "response_map.csv"));

    // A checkpoint from a different configuration is recomputed, not reused.
    write_text(dir / "resumed" / "checkpoints" / "column_00001.csv", "# config_hash=0000\nstale\n");
    REQUIRE(run("resumed", 1, std::nullopt, true).complete);
    CHECK(serial == read_file(dir / "resumed" / "response_map.csv"));
    fs::remove_all(dir);
}
