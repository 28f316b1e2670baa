#pragma once

// Independent oracles shared by the unit and acceptance suites.

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstddef>
#include <random>
#include <vector>

#include "optomech/dynamics/transient.hpp"

namespace oracle {

using cd = std::complex<double>;

inline constexpr double kTwoPi = 6.283185307179586;

/// Least-squares slope of y against t.
inline double slope(const std::vector<double>& t, const std::vector<double>& y) {
    const double n = static_cast<double>(t.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sx += t[i];
        sy += y[i];
        sxx += t[i] * t[i];
        sxy += t[i] * y[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct SwapMetrics {
    std::size_t peaks = 0;
    double oscillation_hz = 0.0;  // peaks of the transient magnitude per second
    double decay_on = 0.0;        // 1/s, envelope during the pulse
    double decay_off = 0.0;       // 1/s, after the pulse
};

/// Analyses |a − a_ss| of a pulsed linear response: local maxima inside
/// [t_on + guard, t_off − guard] give the swap frequency and the envelope
/// decay; a log-linear fit over [t_off + guard, t_end − guard] gives the
/// ring-down rate.
inline SwapMetrics swap_metrics(const optomech::dynamics::TransientResult& res, double t_on, double t_off, double t_end,
                                double guard = 50e-9) {
    auto mag = [&](std::size_t j) { return std::abs(res.cavity[j] - res.steady[j]); };
    std::vector<double> tp, lp;
    for (std::size_t i = 1; i + 1 < res.t.size(); ++i) {
        const double t = res.t[i];
        if (t < t_on + guard || t > t_off - guard) continue;
        if (mag(i) > mag(i - 1) && mag(i) >= mag(i + 1)) {
            tp.push_back(t);
            lp.push_back(std::log(mag(i)));
        }
    }
    SwapMetrics m;
    m.peaks = tp.size();
    if (tp.size() >= 2) {
        m.oscillation_hz = static_cast<double>(tp.size() - 1) / (tp.back() - tp.front());
        m.decay_on = -slope(tp, lp);
    }
    std::vector<double> ta, la;
    for (std::size_t i = 0; i < res.t.size(); ++i) {
        const double t = res.t[i];
        if (t < t_off + guard || t > t_end - guard) continue;
        ta.push_back(t);
        la.push_back(std::log(mag(i)));
    }
    if (ta.size() >= 2) m.decay_off = -slope(ta, la);
    return m;
}

/// Carrier plus a comb of `harmonics` lines either side at multiples of
/// `spacing_hz`, with random phases and amplitudes falling off geometrically.
inline std::vector<cd> synthetic_comb(double spacing_hz, int harmonics, double dt, std::size_t n, std::mt19937_64& rng,
                                      double falloff = 0.6) {
    std::uniform_real_distribution<double> ph(0.0, kTwoPi), amp(0.5, 1.0);
    std::vector<cd> s(n, cd(3.0, 0.0));
    for (int k = -harmonics; k <= harmonics; ++k) {
        if (k == 0) continue;
        const double a = amp(rng) * std::pow(falloff, std::abs(k) - 1);
        const double phi = ph(rng);
        for (std::size_t i = 0; i < n; ++i) {
            s[i] += a * std::exp(cd(0.0, kTwoPi * k * spacing_hz * static_cast<double>(i) * dt + phi));
        }
    }
    return s;
}

/// Complex Gaussian noise band-limited to |f| ≤ band_hz by an FFT brick-wall
/// filter, on top of a carrier.
inline std::vector<cd> band_noise(double band_hz, double dt, std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<cd> x(n), spec;
    for (auto& v : x) v = cd(g(rng), g(rng));
    Eigen::FFT<double> fft;
    fft.fwd(spec, x);
    const double df = 1.0 / (static_cast<double>(n) * dt);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = (k <= n / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n)) * df;
        if (std::abs(f) > band_hz) spec[k] = 0.0;
    }
    std::vector<cd> y;
    fft.inv(y, spec);
    for (auto& v : y) v += cd(3.0, 0.0);
    return y;
}

}  // namespace oracle
