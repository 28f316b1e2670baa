// optomech: command-line front end.
//
//   optomech spectrum   --config run.ini --out results/
//   optomech stability  --config run.ini --out results/ --sweep down
//   optomech timedomain --config run.ini --out results/ --seed 3
//   optomech phasemap   --config run.ini --out results/ --workers 4 --resume
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "optomech/cli/commands.hpp"

namespace {

struct Args {
    std::string config;
    std::string out = ".";
    std::size_t workers = 1;
    std::uint64_t seed = 0;
    std::string sweep = "up";
    bool resume = false;
    std::size_t stop_after = 0;
};

void add_common(CLI::App* sub, Args& a) {
    sub->add_option("--config,-c", a.config, "configuration file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out,-o", a.out, "output directory");
    sub->add_option("--workers,-j", a.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", a.seed, "random seed for initial kicks");
    sub->add_option("--sweep", a.sweep, "power sweep direction")->check(CLI::IsMember({"up", "down"}));
}

}  // namespace

int main(int argc, char** argv) {
    using namespace optomech;
    CLI::App app{"Semiclassical simulator of a pumped microwave optomechanical cavity"};
    app.require_subcommand(1);
    Args a;

    auto* spectrum = app.add_subcommand("spectrum", "probe transmission of the pump-dressed cavity");
    auto* stab = app.add_subcommand("stability", "fixed-point stability phase map and threshold boundary");
    auto* td = app.add_subcommand("timedomain", "nonlinear trajectory, linearized transient, or their comparison");
    auto* pm = app.add_subcommand("phasemap", "dynamical response map from PSD classification");
    for (auto* s : {spectrum, stab, td, pm}) add_common(s, a);
    pm->add_flag("--resume", a.resume, "reuse matching column checkpoints");
    pm->add_option("--stop-after", a.stop_after, "stop after this many columns")->group("");

    CLI11_PARSE(app, argc, argv);

    cli::CommandOptions opt;
    opt.out_dir = a.out;
    opt.workers = a.workers;
    opt.seed = a.seed;
    opt.sweep = a.sweep == "down" ? model::SweepDirection::down : model::SweepDirection::up;
    opt.resume = a.resume;
    if (a.stop_after > 0) opt.stop_after = a.stop_after;

    try {
        const auto cfg = cli::load_config(a.config);
        cli::CommandResult res;
        if (spectrum->parsed()) res = cli::cmd_spectrum(cfg, opt);
        else if (stab->parsed()) res = cli::cmd_stability(cfg, opt);
        else if (td->parsed()) res = cli::cmd_timedomain(cfg, opt);
        else res = cli::cmd_phasemap(cfg, opt);
        for (const auto& n : res.notes) std::cout << n << "\n";
        for (const auto& f : res.files) std::cout << "wrote " << f.string() << "\n";
        return 0;
    } catch (const cli::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: invalid " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
