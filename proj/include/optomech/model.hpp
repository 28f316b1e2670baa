#pragma once

// Device parameters, pump description, and the closed-form scalar
// quantities derived from them (photon numbers, parametric coupling,
// static Kerr shifts, dimensionless power).

#include <cmath>
#include <optional>
#include <string>

#include "optomech/errors.hpp"
#include "optomech/units.hpp"

namespace optomech::model {

/// Device rates in rad/s. This is the form every numerical kernel consumes.
struct Rates {
    double cavity_freq;    // ωc
    double mech_freq;      // ωm
    double input_rate;     // κe1
    double output_rate;    // κe2
    double internal_rate;  // κi
    double mech_damping;   // γm
    double coupling0;      // g0
    double kerr;           // αc, per photon

    double kappa() const { return input_rate + output_rate + internal_rate; }
};

/// Device parameters as quoted (Hz, i.e. ω/2π). Defaults are the measured
/// values of the waveguide-cavity device; the kinetic-inductance Kerr
/// coefficient defaults to the 5 mHz/photon estimate.
struct DeviceParams {
    double cavity_freq_hz = 4.86e9;
    double mech_freq_hz = 6.32e6;
    double input_rate_hz = 90e3;
    double output_rate_hz = 190e3;
    double internal_rate_hz = 100e3;
    double mech_damping_hz = 20.0;
    double coupling0_hz = 165.0;
    double kerr_hz = 5e-3;
    std::optional<double> zero_point_m;

    /// Throws InvalidArgument naming the first offending field.
    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!std::isfinite(v) || v <= 0.0) {
                throw InvalidArgument(name, "must be finite and > 0");
            }
        };
        positive(cavity_freq_hz, "cavity_freq_hz");
        positive(mech_freq_hz, "mech_freq_hz");
        positive(input_rate_hz, "input_rate_hz");
        positive(output_rate_hz, "output_rate_hz");
        positive(internal_rate_hz, "internal_rate_hz");
        positive(mech_damping_hz, "mech_damping_hz");
        if (!std::isfinite(coupling0_hz) || coupling0_hz < 0.0) {
            throw InvalidArgument("coupling0_hz", "must be finite and >= 0");
        }
        if (!std::isfinite(kerr_hz) || kerr_hz < 0.0) {
            throw InvalidArgument("kerr_hz", "must be finite and >= 0");
        }
        if (zero_point_m && (!std::isfinite(*zero_point_m) || *zero_point_m <= 0.0)) {
            throw InvalidArgument("zero_point_m", "must be finite and > 0");
        }
    }

    Rates rates() const {
        using units::to_angular;
        return {to_angular(cavity_freq_hz), to_angular(mech_freq_hz),
                to_angular(input_rate_hz),  to_angular(output_rate_hz),
                to_angular(internal_rate_hz), to_angular(mech_damping_hz),
                to_angular(coupling0_hz),   to_angular(kerr_hz)};
    }

    static DeviceParams from_rates(const Rates& r) {
        using units::to_hz;
        DeviceParams p;
        p.cavity_freq_hz = to_hz(r.cavity_freq);
        p.mech_freq_hz = to_hz(r.mech_freq);
        p.input_rate_hz = to_hz(r.input_rate);
        p.output_rate_hz = to_hz(r.output_rate);
        p.internal_rate_hz = to_hz(r.internal_rate);
        p.mech_damping_hz = to_hz(r.mech_damping);
        p.coupling0_hz = to_hz(r.coupling0);
        p.kerr_hz = to_hz(r.kerr);
        return p;
    }
};

enum class SweepDirection { up, down };

inline const char* to_string(SweepDirection d) { return d == SweepDirection::up ? "up" : "down"; }

/// A pump tone. Exactly one of power / amplitude is authoritative; the other
/// is derived through E = sqrt(κe1·P/(ħ·ωd)).
struct PumpDrive {
    double detuning_hz = 0.0;  // Δ = ωd − ωc
    std::optional<double> power_w;
    std::optional<double> amplitude;  // E, rad/s·√photon
    SweepDirection sweep = SweepDirection::up;
    /// When set, detuning_hz is measured from the Kerr-shifted resonance
    /// instead of the bare cavity frequency.
    bool from_shifted_resonance = false;

    static PumpDrive from_power(double detuning_hz, double power_w,
                                SweepDirection dir = SweepDirection::up) {
        PumpDrive p;
        p.detuning_hz = detuning_hz;
        p.power_w = power_w;
        p.sweep = dir;
        return p;
    }

    static PumpDrive from_amplitude(double detuning_hz, double amplitude,
                                    SweepDirection dir = SweepDirection::up) {
        PumpDrive p;
        p.detuning_hz = detuning_hz;
        p.amplitude = amplitude;
        p.sweep = dir;
        return p;
    }

    void validate() const {
        if (!std::isfinite(detuning_hz)) throw InvalidArgument("detuning_hz", "must be finite");
        if (power_w.has_value() == amplitude.has_value()) {
            throw InvalidArgument("pump", "exactly one of power and amplitude must be given");
        }
        if (power_w && (!std::isfinite(*power_w) || *power_w < 0.0)) {
            throw InvalidArgument("power_w", "must be finite and >= 0");
        }
        if (amplitude && (!std::isfinite(*amplitude) || *amplitude < 0.0)) {
            throw InvalidArgument("amplitude", "must be finite and >= 0");
        }
    }

    double pump_freq(const Rates& r) const { return r.cavity_freq + units::to_angular(detuning_hz); }

    /// Drive amplitude E in rad/s·√photon.
    double drive_amplitude(const Rates& r) const {
        if (amplitude) return *amplitude;
        const double wd = pump_freq(r);
        if (wd <= 0.0) throw InvalidArgument("detuning_hz", "pump frequency must be positive");
        return std::sqrt(r.input_rate * power_w.value_or(0.0) / (units::kHbar * wd));
    }

    /// Injected power at the cavity input (W).
    double power(const Rates& r) const {
        if (power_w) return *power_w;
        const double e = amplitude.value_or(0.0);
        return e * e * units::kHbar * pump_freq(r) / r.input_rate;
    }
};

// ---------------------------------------------------------------------------
// Scalar relations. Arguments and results in Hz unless stated otherwise.

inline double total_linewidth(const DeviceParams& p) {
    return p.input_rate_hz + p.output_rate_hz + p.internal_rate_hz;
}

/// Optomechanical Kerr coefficient 2·g0²/ωm (magnitude of the red shift per photon).
inline double optomech_kerr_per_photon(double coupling0_hz, double mech_freq_hz) {
    if (!(mech_freq_hz > 0.0)) throw InvalidArgument("mech_freq_hz", "must be > 0");
    return 2.0 * coupling0_hz * coupling0_hz / mech_freq_hz;
}

/// Parametric coupling g = g0·√n_d.
inline double coupling_rate(double coupling0_hz, double photons) {
    if (!(photons >= 0.0)) throw InvalidArgument("photons", "must be >= 0");
    return coupling0_hz * std::sqrt(photons);
}

/// Inverse of coupling_rate: the pump photon number giving coupling g.
inline double photons_for_coupling(double coupling0_hz, double coupling_hz) {
    if (!(coupling0_hz > 0.0)) throw InvalidArgument("coupling0_hz", "must be > 0");
    if (!(coupling_hz >= 0.0)) throw InvalidArgument("coupling_hz", "must be >= 0");
    const double r = coupling_hz / coupling0_hz;
    return r * r;
}

/// Static mechanical displacement in units of x_zp: 2·g0·n_d/ωm.
inline double static_displacement(double photons, double coupling0_hz, double mech_freq_hz) {
    if (!(mech_freq_hz > 0.0)) throw InvalidArgument("mech_freq_hz", "must be > 0");
    return 2.0 * coupling0_hz * photons / mech_freq_hz;
}

/// Total static red shift of the cavity, (2·g0²/ωm + αc)·n_d.
inline double total_static_shift(double photons, double coupling0_hz, double mech_freq_hz,
                                 double kerr_hz) {
    return (optomech_kerr_per_photon(coupling0_hz, mech_freq_hz) + kerr_hz) * photons;
}

inline double total_static_shift(double photons, const DeviceParams& p) {
    return total_static_shift(photons, p.coupling0_hz, p.mech_freq_hz, p.kerr_hz);
}

/// P = 8·g0²·n0/ωm⁴, evaluated literally with g0 and ωm in rad/s. The result
/// is not dimensionless in any consistent unit system; it is an axis label.
inline double dimensionless_power(double coupling0_hz, double photons0, double mech_freq_hz) {
    if (mech_freq_hz == 0.0) throw InvalidArgument("mech_freq_hz", "must be nonzero");
    const double g0 = units::to_angular(coupling0_hz);
    const double wm = units::to_angular(mech_freq_hz);
    return 8.0 * g0 * g0 * photons0 / (wm * wm * wm * wm);
}

/// Lorentzian photon-number estimate without any Kerr shift:
/// (κe1·P/ħωd) / (Δ² + κ²/4).
inline double linear_photon_estimate(const DeviceParams& p, const PumpDrive& pump) {
    const Rates r = p.rates();
    const double e = pump.drive_amplitude(r);
    const double d = units::to_angular(pump.detuning_hz);
    const double k = r.kappa();
    return e * e / (d * d + 0.25 * k * k);
}

/// n0: photons with the pump on resonance, (κe1·P/ħωd)/(κ²/4).
inline double resonant_photon_number(const DeviceParams& p, const PumpDrive& pump) {
    const Rates r = p.rates();
    const double e = pump.drive_amplitude(r);
    const double k = r.kappa();
    return e * e / (0.25 * k * k);
}

/// Quantities that follow from a pump photon number n_d.
struct DerivedQuantities {
    double pump_photons = 0.0;
    double coupling_hz = 0.0;
    double optomech_kerr_hz = 0.0;  // per photon
    double total_static_shift_hz = 0.0;
    double static_displacement_zp = 0.0;
    double dimensionless_power = 0.0;
};

inline DerivedQuantities derive(const DeviceParams& p, double photons, double photons0 = 0.0) {
    DerivedQuantities d;
    d.pump_photons = photons;
    d.coupling_hz = coupling_rate(p.coupling0_hz, photons);
    d.optomech_kerr_hz = optomech_kerr_per_photon(p.coupling0_hz, p.mech_freq_hz);
    d.total_static_shift_hz = total_static_shift(photons, p);
    d.static_displacement_zp = static_displacement(photons, p.coupling0_hz, p.mech_freq_hz);
    d.dimensionless_power = dimensionless_power(p.coupling0_hz, photons0, p.mech_freq_hz);
    return d;
}

}  // namespace optomech::model
