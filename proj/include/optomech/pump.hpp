#pragma once

// Self-consistent pump photon number: the cavity population at the fixed
// point occupied for a given pump, including both static Kerr shifts.

#include <cmath>

#include "optomech/model.hpp"
#include "optomech/stability.hpp"
#include "optomech/units.hpp"

namespace optomech::model {

struct ResolvedPump {
    Drive drive;  // bare detuning and E, rad/s
    double photons = 0.0;
    stability::FixedPoint fixed_point;
};

/// Resolves a pump to its occupied fixed point. Without continuation history
/// the lowest-|α|² branch is taken for upward sweeps and the highest for
/// downward sweeps. When the detuning is quoted from the shifted resonance,
/// the effective detuning is fixed and the bare detuning follows from it.
inline ResolvedPump resolve_pump(const DeviceParams& params, const PumpDrive& pump) {
    params.validate();
    pump.validate();
    const Rates r = params.rates();
    ResolvedPump out;
    out.drive.amplitude = pump.drive_amplitude(r);
    if (pump.from_shifted_resonance) {
        const double a = units::to_angular(pump.detuning_hz);
        const double hk = 0.5 * r.kappa();
        const double e = out.drive.amplitude;
        const double n = e * e / (a * a + hk * hk);
        const double p = r.coupling0 * n / stability::mech_stiffness(r);
        out.drive.detuning = a - 2.0 * r.coupling0 * p - r.kerr * n;
        const auto fps = stability::fixed_points(r, out.drive);
        // Pick the branch matching the requested effective detuning.
        std::size_t best = 0;
        for (std::size_t i = 1; i < fps.size(); ++i) {
            if (std::abs(fps[i].photons() - n) < std::abs(fps[best].photons() - n)) best = i;
        }
        out.fixed_point = fps[best];
    } else {
        out.drive.detuning = units::to_angular(pump.detuning_hz);
        const auto fps = stability::fixed_points(r, out.drive);
        out.fixed_point = pump.sweep == SweepDirection::up ? fps.front() : fps.back();
    }
    out.photons = out.fixed_point.photons();
    return out;
}

inline double pump_photon_number(const DeviceParams& params, const PumpDrive& pump) {
    return resolve_pump(params, pump).photons;
}

}  // namespace optomech::model
