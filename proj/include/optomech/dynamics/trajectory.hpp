#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "optomech/dynamics/equations.hpp"
#include "optomech/dynamics/integrator.hpp"
#include "optomech/errors.hpp"

namespace optomech::dynamics {

struct PumpSegment {
    double duration = std::numeric_limits<double>::infinity();  // s
    Drive drive;
};

/// Piecewise-constant pump. The last segment extends to infinity.
struct PumpSchedule {
    std::vector<PumpSegment> segments;

    static PumpSchedule constant(const Drive& d) { return {{PumpSegment{std::numeric_limits<double>::infinity(), d}}}; }

    void validate() const {
        if (segments.empty()) throw InvalidArgument("schedule", "at least one segment required");
        for (const auto& s : segments) {
            if (!(s.duration > 0.0)) throw InvalidArgument("schedule", "segment durations must be > 0");
            if (!std::isfinite(s.drive.amplitude) || s.drive.amplitude < 0.0 || !std::isfinite(s.drive.detuning)) {
                throw InvalidArgument("schedule", "segment drive must be finite with E >= 0");
            }
        }
    }
};

struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    IntegratorStats stats;
};

/// Uniform sample grid t0 + k·dt restricted to [record_from, t1].
inline std::vector<double> sample_grid(double t0, double t1, double dt, double record_from) {
    if (!(dt > 0.0)) throw InvalidArgument("sample_dt", "must be > 0");
    if (!(t1 > t0)) throw InvalidArgument("t_span", "end must exceed start");
    const auto n = static_cast<std::size_t>(std::floor((t1 - t0) / dt * (1.0 + 1e-12))) + 1;
    std::vector<double> t;
    t.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double tk = t0 + static_cast<double>(k) * dt;
        if (tk >= record_from) t.push_back(std::min(tk, t1));
    }
    return t;
}

/// Sampling interval resolving the fastest scale: 1/(20·max(|Δ|, ωm, 2g)), rad/s inputs.
inline double default_sample_dt(double detuning, double mech_freq, double coupling) {
    return 1.0 / (20.0 * std::max({std::abs(detuning), mech_freq, 2.0 * coupling}));
}

/// `base` displaced by `magnitude` (√photon) along a seeded random direction
/// in the cavity quadrature plane.
inline State kicked_state(const State& base, std::uint64_t seed, double magnitude = 1e-3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double phi = angle(rng);
    State s = base;
    s[kX] += magnitude * std::cos(phi);
    s[kY] += magnitude * std::sin(phi);
    return s;
}

/// Integrates the nonlinear equations from `initial` at t0 to t1 through the
/// pump schedule (segment times measured from t0), restarting the stepper at
/// every segment boundary. Samples are taken every sample_dt from t0 and
/// recorded only from `record_from` on.
inline Trajectory integrate(const State& initial, const model::Rates& r, const PumpSchedule& schedule,
                            double t0, double t1, double sample_dt, Tolerances tol = {},
                            double record_from = -std::numeric_limits<double>::infinity()) {
    schedule.validate();
    Trajectory traj;
    const std::vector<double> grid = sample_grid(t0, t1, sample_dt, std::max(record_from, t0));
    traj.times = grid;
    traj.states.reserve(grid.size());
    State y = initial;
    double seg_start = t0;
    std::size_t consumed = 0;
    for (std::size_t s = 0; s < schedule.segments.size() && seg_start < t1; ++s) {
        const bool last = s + 1 == schedule.segments.size();
        const double seg_end = last ? t1 : std::min(t1, seg_start + schedule.segments[s].duration);
        const Drive drive = schedule.segments[s].drive;
        auto stepper = make_stepper<4>([&r, drive](double, const State& st) { return eom_rhs(st, r, drive); }, tol);
        // Samples exactly on a boundary belong to the segment that ends there.
        std::span<const double> pending(grid.data() + consumed, grid.size() - consumed);
        const std::size_t used = stepper.integrate(y, seg_start, seg_end, pending, [&](double, const State& st) {
            traj.states.push_back(st);
        });
        consumed += used;
        traj.stats.steps += stepper.stats().steps;
        traj.stats.rejected += stepper.stats().rejected;
        traj.stats.max_error_estimate = std::max(traj.stats.max_error_estimate, stepper.stats().max_error_estimate);
        traj.stats.accumulated_error += stepper.stats().accumulated_error;
        seg_start = seg_end;
    }
    traj.times.resize(traj.states.size());
    return traj;
}

inline Trajectory integrate(const State& initial, const model::Rates& r, const Drive& drive, double t0, double t1,
                            double sample_dt, Tolerances tol = {},
                            double record_from = -std::numeric_limits<double>::infinity()) {
    return integrate(initial, r, PumpSchedule::constant(drive), t0, t1, sample_dt, tol, record_from);
}

}  // namespace optomech::dynamics
