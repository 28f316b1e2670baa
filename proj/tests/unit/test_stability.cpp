#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <random>

#include "optomech/dynamics/equations.hpp"
#include "optomech/stability.hpp"

using namespace optomech;
using Catch::Approx;

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Draw {
    model::Rates r;
    Drive d;
};

// Random device and pump around the nominal operating point, with αc ≠ 0 in most draws.
Draw random_draw(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    model::DeviceParams p;
    p.mech_freq_hz = 1e6 + 19e6 * u(rng);
    p.input_rate_hz = 1e4 + 4e5 * u(rng);
    p.output_rate_hz = 1e4 + 4e5 * u(rng);
    p.internal_rate_hz = 1e4 + 4e5 * u(rng);
    p.mech_damping_hz = 1.0 + 1e3 * u(rng);
    p.coupling0_hz = 10.0 + 990.0 * u(rng);
    p.kerr_hz = u(rng) < 0.2 ? 0.0 : 0.05 * u(rng);
    const double det = -3.0 * p.mech_freq_hz * u(rng) + 0.5 * p.mech_freq_hz;
    const double dbm = -70.0 + 60.0 * u(rng);
    const model::Rates r = p.rates();
    const auto pump = model::PumpDrive::from_power(det, units::dbm_to_watts(dbm));
    return {r, Drive{kTwoPi * det, pump.drive_amplitude(r)}};
}

Eigen::Matrix4d finite_difference_jacobian(const State& s, const model::Rates& r, const Drive& d) {
    Eigen::Matrix4d fd;
    for (int j = 0; j < 4; ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(s[static_cast<std::size_t>(j)]));
        State a = s, b = s;
        a[static_cast<std::size_t>(j)] += h;
        b[static_cast<std::size_t>(j)] -= h;
        const State fa = dynamics::eom_rhs(a, r, d), fb = dynamics::eom_rhs(b, r, d);
        for (int i = 0; i < 4; ++i) fd(i, j) = (fa[static_cast<std::size_t>(i)] - fb[static_cast<std::size_t>(i)]) / (2.0 * h);
    }
    return fd;
}

model::Rates default_rates(double kerr_hz = 5e-3) {
    model::DeviceParams p;
    p.kerr_hz = kerr_hz;
    return p.rates();
}

}  // namespace

TEST_CASE("cubic root solver") {
    using stability::real_cubic_roots;
    SECTION("three distinct roots") {
        // (x − 1)(x − 2)(x + 3) = x³ − 7x + 6
        const auto r = real_cubic_roots(1.0, 0.0, -7.0, 6.0);
        REQUIRE(r.size() == 3);
        CHECK(r[0].value == Approx(-3.0).epsilon(1e-14));
        CHECK(r[1].value == Approx(1.0).epsilon(1e-14));
        CHECK(r[2].value == Approx(2.0).epsilon(1e-14));
    }
    SECTION("one real root") {
        // x³ + x + 1 has a single real root near −0.6823
        const auto r = real_cubic_roots(1.0, 0.0, 1.0, 1.0);
        REQUIRE(r.size() == 1);
        CHECK(r[0].value == Approx(-0.6823278038280193).epsilon(1e-13));
    }
    SECTION("double root is merged and flagged") {
        // (x − 1)²(x + 2)
        const auto r = real_cubic_roots(1.0, 0.0, -3.0, 2.0);
        REQUIRE(r.size() == 2);
        CHECK(r[0].value == Approx(-2.0));
        CHECK(r[1].value == Approx(1.0).epsilon(1e-6));
        CHECK(r[1].degenerate);
    }
    SECTION("lower degree") {
        const auto r = real_cubic_roots(0.0, 1.0, 0.0, -4.0);
        REQUIRE(r.size() == 2);
        CHECK(r[0].value == Approx(-2.0));
        CHECK(r[1].value == Approx(2.0));
        CHECK_THROWS_AS(real_cubic_roots(0.0, 0.0, 0.0, 0.0), NumericalError);
        CHECK(real_cubic_roots(0.0, 0.0, 0.0, 1.0).empty());
    }
    SECTION("widely scaled coefficients") {
        // roots 1e-3, 1e3, 1e6
        const double a = 1e-3, b = 1e3, c = 1e6;
        const auto r = real_cubic_roots(1.0, -(a + b + c), a * b + b * c + a * c, -a * b * c);
        REQUIRE(r.size() == 3);
        CHECK(r[0].value == Approx(a).epsilon(1e-9));
        CHECK(r[1].value == Approx(b).epsilon(1e-12));
        CHECK(r[2].value == Approx(c).epsilon(1e-12));
    }
}

TEST_CASE("cubic coefficients") {
    auto r = default_rates(0.0);
    const double w = r.mech_freq + r.mech_damping * r.mech_damping / (4.0 * r.mech_freq);
    SECTION("zero drive") {
        const auto c = stability::eom_coefficients(r, Drive{-kTwoPi * 6e6, 0.0});
        CHECK(c.c0 == 0.0);
        const auto fps = stability::fixed_points(r, Drive{-kTwoPi * 6e6, 0.0});
        REQUIRE(fps.size() == 1);
        for (double v : fps[0].state) CHECK(v == 0.0);
    }
    SECTION("without cavity Kerr the slope is 2·g0") {
        const auto c = stability::eom_coefficients(r, Drive{-kTwoPi * 6e6, 1e9});
        CHECK(c.slope == 2.0 * r.coupling0);
        CHECK(c.c3 == Approx(4.0 * r.coupling0 * r.coupling0 * w).epsilon(1e-15));
    }
    SECTION("with cavity Kerr") {
        r = default_rates(12.5e-3);
        const Drive d{-kTwoPi * 6e6, 3e9};
        const auto c = stability::eom_coefficients(r, d);
        CHECK(c.slope == Approx(2.0 * r.coupling0 + r.kerr / r.coupling0 * w).epsilon(1e-15));
        CHECK(c.c2 == Approx(2.0 * c.slope * d.detuning * w).epsilon(1e-15));
        CHECK(c.c1 == Approx((d.detuning * d.detuning + r.kappa() * r.kappa() / 4.0) * w).epsilon(1e-15));
        CHECK(c.c0 == Approx(-r.coupling0 * d.amplitude * d.amplitude).epsilon(1e-15));
    }
    SECTION("g0 = 0 is rejected") {
        r.coupling0 = 0.0;
        CHECK_THROWS_AS(stability::eom_coefficients(r, Drive{0.0, 1.0}), InvalidArgument);
    }
}

TEST_CASE("fixed points over random draws") {
    std::mt19937_64 rng(2024);
    std::size_t multi = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto [r, d] = random_draw(rng);
        const auto fps = stability::fixed_points(r, d);
        REQUIRE(!fps.empty());
        REQUIRE(fps.size() <= 3);
        if (fps.size() == 2) CHECK(std::any_of(fps.begin(), fps.end(), [](const auto& f) { return f.degenerate; }));
        if (fps.size() > 1) ++multi;
        for (std::size_t k = 0; k < fps.size(); ++k) {
            const auto& fp = fps[k];
            if (k > 0) CHECK(fp.p() >= fps[k - 1].p());
            CHECK(dynamics::relative_residual(fp.state, r, d) < 1e-9);
            CHECK(fp.q() == r.mech_damping / (2.0 * r.mech_freq) * fp.p());
            const auto c = stability::eom_coefficients(r, d);
            const double scale = std::abs(c.c3 * std::pow(fp.p(), 3)) + std::abs(c.c2 * fp.p() * fp.p()) +
                                 std::abs(c.c1 * fp.p()) + std::abs(c.c0);
            CHECK(std::abs(c(fp.p())) <= 1e-9 * scale);
            // Newton from a perturbed start returns to the same root.
            const std::array<double, 4> coeff{c.c0, c.c1, c.c2, c.c3};
            if (!fp.degenerate) {
                const double again = stability::detail::polish_root(coeff, fp.p() * (1.0 + 1e-6));
                CHECK(again == Approx(fp.p()).epsilon(1e-8));
            }
        }
    }
    CHECK(multi > 0);
}

TEST_CASE("weak drive follows the perturbative photon number") {
    const auto r = default_rates(0.0);
    const Drive d{-kTwoPi * 6.32e6, 1e4};
    const auto fps = stability::fixed_points(r, d);
    REQUIRE(fps.size() == 1);
    const double w = r.mech_freq + r.mech_damping * r.mech_damping / (4.0 * r.mech_freq);
    const double oracle = r.coupling0 * d.amplitude * d.amplitude /
                          ((d.detuning * d.detuning + r.kappa() * r.kappa() / 4.0) * w);
    CHECK(fps[0].p() == Approx(oracle).epsilon(1e-9));
}

TEST_CASE("Kerr-only branch for g0 = 0") {
    auto r = default_rates(1.0);
    r.coupling0 = 0.0;
    const Drive d{-kTwoPi * 1e6, 5e9};
    const auto fps = stability::fixed_points(r, d);
    REQUIRE(!fps.empty());
    for (const auto& fp : fps) {
        CHECK(fp.p() == 0.0);
        CHECK(dynamics::relative_residual(fp.state, r, d) < 1e-9);
        // n = E²/((Δ + αc·n)² + κ²/4)
        const double n = fp.photons();
        const double a = d.detuning + r.kerr * n;
        CHECK(n == Approx(d.amplitude * d.amplitude / (a * a + r.kappa() * r.kappa() / 4.0)).epsilon(1e-9));
    }
}

TEST_CASE("Jacobian against finite differences and the trace rule") {
    std::mt19937_64 rng(99);
    for (int i = 0; i < 1000; ++i) {
        const auto [r, d] = random_draw(rng);
        for (const auto& fp : stability::fixed_points(r, d)) {
            const Eigen::Matrix4d s = stability::jacobian(fp, r, d);
            const Eigen::Matrix4d fd = finite_difference_jacobian(fp.state, r, d);
            const double rel = (s - fd).cwiseAbs().maxCoeff() / s.cwiseAbs().maxCoeff();
            CHECK(rel < 1e-6);
            // Exact up to rounding of the four diagonal terms.
            const double diag = s.diagonal().cwiseAbs().sum();
            CHECK(std::abs(s.trace() + r.kappa() + r.mech_damping) <= 8.0 * 2.220446049250313e-16 * diag);
        }
    }
}

TEST_CASE("uncoupled Jacobian spectrum") {
    auto r = default_rates(0.0);
    r.coupling0 = 0.0;
    const Drive d{-kTwoPi * 3e6, 0.0};
    const auto fp = stability::fixed_points(r, d).front();
    const auto v = stability::verdict(fp, r, d);
    CHECK(v.label == stability::Label::stable);
    std::vector<double> re, im;
    for (const auto& l : v.eigenvalues) {
        re.push_back(l.real());
        im.push_back(std::abs(l.imag()));
    }
    std::sort(re.begin(), re.end());
    std::sort(im.begin(), im.end());
    CHECK(re[0] == Approx(-r.kappa() / 2));
    CHECK(re[3] == Approx(-r.mech_damping / 2));
    CHECK(im[0] == Approx(std::abs(d.detuning)));
    CHECK(im[3] == Approx(r.mech_freq));
}

TEST_CASE("Jacobian without cavity Kerr reduces to the simpler matrix") {
    const auto r = default_rates(0.0);
    const Drive d{-kTwoPi * 6e6, 2e10};
    const auto fp = stability::fixed_points(r, d).front();
    const double a = d.detuning + 2 * r.coupling0 * fp.p();
    Eigen::Matrix4d expect;
    expect << -r.kappa() / 2, -a, -2 * r.coupling0 * fp.y(), 0,
              a, -r.kappa() / 2, 2 * r.coupling0 * fp.x(), 0,
              0, 0, -r.mech_damping / 2, r.mech_freq,
              2 * r.coupling0 * fp.x(), 2 * r.coupling0 * fp.y(), -r.mech_freq, -r.mech_damping / 2;
    CHECK((stability::jacobian(fp, r, d) - expect).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("verdict labels") {
    const auto r = default_rates();
    const Drive zero{-kTwoPi * 6.32e6, 0.0};
    CHECK(stability::verdict(stability::fixed_points(r, zero).front(), r, zero).label == stability::Label::stable);
    CHECK(stability::marginal_tolerance(r) == Approx(1e-6 * r.mech_freq));
    CHECK(std::string(stability::to_string(stability::Label::marginal)) == "marginal");
    CHECK(std::string(stability::to_string(stability::PhaseClass::bistable)) == "bistable");
}

TEST_CASE("linear cavity is unconditionally stable") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 200; ++i) {
        auto [r, d] = random_draw(rng);
        r.kerr = 0.0;
        r.coupling0 = 1e-9;
        // keep γm/2 outside the marginal band 1e-6·ωm
        r.mech_damping = kTwoPi * 100.0;
        CHECK(stability::classify_point(r, d).cls == stability::PhaseClass::stable);
    }
}

TEST_CASE("point classification") {
    model::DeviceParams p;
    const auto r = p.rates();
    CHECK(stability::classify_point(r, Drive{-kTwoPi * 6.32e6, 0.0}).cls == stability::PhaseClass::stable);
    const auto hot = model::PumpDrive::from_power(-6.32e6, units::dbm_to_watts(-20.0));
    CHECK(stability::classify_point(p, hot).cls == stability::PhaseClass::unstable);
}

TEST_CASE("phase map") {
    model::DeviceParams p;
    stability::GridSpec g;
    g.detuning_start_hz = -7.5e6;
    g.detuning_stop_hz = -5.0e6;
    g.detuning_step_hz = 500e3;
    g.power_start_dbm = -40.0;
    g.power_stop_dbm = -20.0;
    g.power_step_dbm = 0.5;

    SECTION("1x1 grid equals classify_point") {
        stability::GridSpec one = g;
        one.detuning_stop_hz = one.detuning_start_hz;
        one.power_stop_dbm = one.power_start_dbm = -28.0;
        const auto map = stability::scan_phase_map(one, p, model::SweepDirection::up);
        REQUIRE(map.cells.size() == 1);
        const auto pc = stability::classify_point(p, model::PumpDrive::from_power(-7.5e6, units::dbm_to_watts(-28.0)));
        CHECK(map.cells[0].cls == pc.cls);
        CHECK(map.cells[0].max_re_lambda == pc.occupied_verdict().max_re);
    }

    SECTION("sweep direction only matters in bistable cells") {
        const auto up = stability::scan_phase_map(g, p, model::SweepDirection::up, 2);
        const auto down = stability::scan_phase_map(g, p, model::SweepDirection::down, 2);
        for (std::size_t i = 0; i < up.cells.size(); ++i) {
            CHECK(up.cells[i].cls == down.cells[i].cls);
            if (up.cells[i].cls == stability::PhaseClass::stable || up.cells[i].n_branches == 1) {
                CHECK(up.cells[i].p == Approx(down.cells[i].p).epsilon(1e-12));
            }
        }
    }

    SECTION("boundary is single-valued and brackets the threshold") {
        p.kerr_hz = 0.0;
        const auto map = stability::scan_phase_map(g, p, model::SweepDirection::up);
        const auto b = stability::extract_boundary(map, p);
        REQUIRE(b.size() == map.detunings_hz.size());
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (!std::isfinite(b[i].threshold_dbm)) continue;
            // Everything below the threshold in this column is not unstable.
            const auto k = static_cast<std::size_t>(std::lround((b[i].threshold_dbm - g.power_start_dbm) / g.power_step_dbm));
            for (std::size_t j = 0; j < k; ++j) CHECK(map.at(i, j).cls != stability::PhaseClass::unstable);
            const auto below = stability::classify_point(
                p, model::PumpDrive::from_power(b[i].detuning_hz, units::dbm_to_watts(b[i].threshold_dbm - g.power_step_dbm)));
            const auto at = stability::classify_point(p, model::PumpDrive::from_power(b[i].detuning_hz, units::dbm_to_watts(b[i].threshold_dbm)));
            CHECK(below.cls != stability::PhaseClass::unstable);
            CHECK(at.cls == stability::PhaseClass::unstable);
            CHECK(b[i].threshold_dimensionless > 0.0);
        }
    }

    SECTION("grid validation") {
        CHECK_THROWS_AS(stability::grid_values(0.0, 1.0, 0.0), InvalidArgument);
        CHECK_THROWS_AS(stability::grid_values(1.0, 0.0, 0.1), InvalidArgument);
        const auto v = stability::grid_values(-40.0, -10.0, 0.1);
        CHECK(v.size() == 301);
        CHECK(v.back() == Approx(-10.0));
    }
}
