#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "optomech/dynamics/lyapunov.hpp"
#include "optomech/units.hpp"

using namespace optomech;
using namespace optomech::dynamics;
using Catch::Approx;

namespace {

model::DeviceParams device() {
    model::DeviceParams p;
    p.kerr_hz = 0.0;
    return p;
}

model::PumpDrive pump_at(double dbm) { return model::PumpDrive::from_power(-6.32e6, units::dbm_to_watts(dbm)); }

}  // namespace

TEST_CASE("stable cell: exponent equals the leading eigenvalue real part") {
    const auto p = device();
    const auto rp = model::resolve_pump(p, pump_at(-35.0));
    const auto pc = stability::classify_point(p.rates(), rp.drive);
    REQUIRE(pc.cls == stability::PhaseClass::stable);
    const double lead = pc.occupied_verdict().max_re;
    LyapunovOptions opt;
    opt.transient = 20e-6;
    opt.duration = 400e-6;
    const auto res = lyapunov_max(p, pump_at(-35.0), opt);
    INFO("exponent " << res.exponent << " lead " << lead);
    CHECK(res.exponent == Approx(lead).epsilon(0.05));
    CHECK(res.renormalizations == 400);
    CHECK(res.history_t.size() == res.history_estimate.size());
}

TEST_CASE("limit cycle: exponent consistent with zero") {
    LyapunovOptions opt;
    const auto res = lyapunov_max(device(), pump_at(-25.0), opt);
    INFO("exponent " << res.exponent << " z " << res.z_score());
    CHECK(std::abs(res.z_score()) < 3.0);
}

TEST_CASE("chaotic cell: positive exponent") {
    LyapunovOptions opt;
    opt.duration = 200e-6;
    const auto res = lyapunov_max(device(), pump_at(-4.0), opt);
    INFO("exponent " << res.exponent << " z " << res.z_score());
    CHECK(res.exponent > 0.0);
    CHECK(res.z_score() > 3.0);
}

TEST_CASE("lyapunov preconditions") {
    const auto p = device();
    LyapunovOptions opt;
    opt.renorm_interval = 0.0;
    CHECK_THROWS_AS(lyapunov_max(p, pump_at(-35.0), opt), InvalidArgument);
    opt.renorm_interval = 1e-6;
    opt.duration = 10e-6;
    CHECK_THROWS_AS(lyapunov_max(p, pump_at(-35.0), opt), NumericalError);
    opt.duration = 100e-6;
    opt.batches = 1;
    CHECK_THROWS_AS(lyapunov_max(p, pump_at(-35.0), opt), InvalidArgument);
}
