#pragma once

// Semiclassical equations of motion of the Kerr-augmented optomechanical
// cavity in the frame rotating at the pump frequency, written for the real
// quadratures α = x + i·y (cavity) and β = p + i·q (mechanics).

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>

#include "optomech/model.hpp"

namespace optomech {

/// (x, y, p, q).
using State = std::array<double, 4>;

enum StateIndex : std::size_t { kX = 0, kY = 1, kP = 2, kQ = 3 };

/// Pump as seen by the equations of motion: bare detuning Δ = ωd − ωc and
/// drive amplitude E, both in rad/s.
struct Drive {
    double detuning = 0.0;
    double amplitude = 0.0;
};

inline double cavity_photons(const State& s) { return s[kX] * s[kX] + s[kY] * s[kY]; }
inline double phonons(const State& s) { return s[kP] * s[kP] + s[kQ] * s[kQ]; }
inline std::complex<double> cavity_amplitude(const State& s) { return {s[kX], s[kY]}; }

namespace dynamics {

/// f1..f4.
inline State eom_rhs(const State& s, const model::Rates& r, const Drive& d) {
    const double x = s[kX], y = s[kY], p = s[kP], q = s[kQ];
    const double half_kappa = 0.5 * r.kappa();
    const double half_gamma = 0.5 * r.mech_damping;
    const double n = x * x + y * y;
    const double shift = d.detuning + 2.0 * r.coupling0 * p + r.kerr * n;
    return {
        -half_kappa * x - shift * y + d.amplitude,
        shift * x - half_kappa * y,
        -half_gamma * p + r.mech_freq * q,
        r.coupling0 * n - r.mech_freq * p - half_gamma * q,
    };
}

/// Per-component sum of the magnitudes of the individual terms of f1..f4.
/// Residuals are reported relative to this scale.
inline State eom_term_scale(const State& s, const model::Rates& r, const Drive& d) {
    const double x = std::abs(s[kX]), y = std::abs(s[kY]);
    const double p = std::abs(s[kP]), q = std::abs(s[kQ]);
    const double half_kappa = 0.5 * r.kappa();
    const double half_gamma = 0.5 * r.mech_damping;
    const double n = x * x + y * y;
    const double det = std::abs(d.detuning);
    const double g2 = 2.0 * r.coupling0 * p;
    const double kn = r.kerr * n;
    return {
        half_kappa * x + det * y + g2 * y + kn * y + std::abs(d.amplitude),
        det * x + half_kappa * y + g2 * x + kn * x,
        half_gamma * p + r.mech_freq * q,
        r.coupling0 * n + r.mech_freq * p + half_gamma * q,
    };
}

/// max_i |f_i| / max(scale_i, tiny): zero for an exact fixed point.
inline double relative_residual(const State& s, const model::Rates& r, const Drive& d) {
    const State f = eom_rhs(s, r, d);
    const State sc = eom_term_scale(s, r, d);
    double worst = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double denom = sc[i] > 0.0 ? sc[i] : 1.0;
        worst = std::max(worst, std::abs(f[i]) / denom);
    }
    return worst;
}

}  // namespace dynamics
}  // namespace optomech
