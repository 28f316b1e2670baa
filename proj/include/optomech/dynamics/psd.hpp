#pragma once

// Welch power spectral density of the complex output field. The field is
// complex (pump-frame envelope), so the spectrum is not symmetric: bins run
// over negative and positive offsets from the pump, ascending.

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "optomech/dynamics/trajectory.hpp"
#include "optomech/errors.hpp"
#include "optomech/model.hpp"

namespace optomech::dynamics {

struct WelchOptions {
    double transient_fraction = 0.5;  // leading fraction of the record discarded
    std::size_t segments = 4;
    double overlap = 0.5;
};

struct Psd {
    std::vector<double> freqs_hz;  // offset from the pump, ascending
    std::vector<double> density;   // power per Hz
    double bin_width_hz = 0.0;
    std::size_t segment_length = 0;
    std::size_t segments = 0;
    double overlap = 0.0;
    std::string window = "hann-periodic";

    /// Σ density · Δf.
    double total_power() const {
        double s = 0.0;
        for (double d : density) s += d;
        return s * bin_width_hz;
    }

    /// Index of the bin at zero offset (the carrier).
    std::size_t zero_bin() const { return segment_length / 2; }
};

namespace detail {

/// Largest n' <= n whose only prime factors are 2, 3, 5.
inline std::size_t smooth_length(std::size_t n) {
    for (std::size_t m = n; m > 1; --m) {
        std::size_t r = m;
        for (std::size_t f : {2u, 3u, 5u}) {
            while (r % f == 0) r /= f;
        }
        if (r == 1) return m;
    }
    return 1;
}

}  // namespace detail

/// Minimum samples accepted by welch_psd after trimming.
inline constexpr std::size_t kMinPsdSamples = 64;

/// Averaged periodogram with a periodic Hann window. Segment length is chosen
/// so that `segments` windows with the given overlap span the record, then
/// rounded down to a 2·3·5-smooth size.
inline Psd welch_psd(std::span<const std::complex<double>> signal, double dt, const WelchOptions& opt = {}) {
    if (!(dt > 0.0)) throw InvalidArgument("dt", "must be > 0");
    if (opt.segments == 0) throw InvalidArgument("segments", "must be >= 1");
    if (!(opt.overlap >= 0.0 && opt.overlap < 1.0)) throw InvalidArgument("overlap", "must be in [0, 1)");
    const double span_factor = 1.0 + static_cast<double>(opt.segments - 1) * (1.0 - opt.overlap);
    const std::size_t raw_len = static_cast<std::size_t>(std::floor(static_cast<double>(signal.size()) / span_factor));
    if (raw_len < kMinPsdSamples / 2 || signal.size() < kMinPsdSamples) {
        throw InvalidArgument("trajectory", "series shorter than the PSD minimum");
    }
    const std::size_t len = detail::smooth_length(raw_len);
    const auto hop = opt.segments > 1
                         ? static_cast<std::size_t>(std::floor(static_cast<double>(signal.size() - len) /
                                                               static_cast<double>(opt.segments - 1)))
                         : 0;

    std::vector<double> window(len);
    double wsum2 = 0.0;
    for (std::size_t n = 0; n < len; ++n) {
        window[n] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(len)));
        wsum2 += window[n] * window[n];
    }
    const double fs = 1.0 / dt;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> buf(len), spec(len);
    std::vector<double> acc(len, 0.0);
    for (std::size_t s = 0; s < opt.segments; ++s) {
        const std::size_t off = s * hop;
        for (std::size_t n = 0; n < len; ++n) buf[n] = signal[off + n] * window[n];
        fft.fwd(spec, buf);
        for (std::size_t k = 0; k < len; ++k) acc[k] += std::norm(spec[k]);
    }

    Psd psd;
    psd.segment_length = len;
    psd.segments = opt.segments;
    psd.overlap = opt.overlap;
    psd.bin_width_hz = fs / static_cast<double>(len);
    psd.freqs_hz.resize(len);
    psd.density.resize(len);
    const double norm = 1.0 / (static_cast<double>(opt.segments) * fs * wsum2);
    // fftshift: bin k of the output holds frequency (k - len/2)·Δf.
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < len; ++k) {
        const std::size_t src = (k + len - half) % len;
        psd.freqs_hz[k] = (static_cast<double>(k) - static_cast<double>(half)) * psd.bin_width_hz;
        psd.density[k] = acc[src] * norm;
    }
    return psd;
}

/// Complex output field √κe2·(x + i·y) sampled along the trajectory.
inline std::vector<std::complex<double>> output_field(const Trajectory& traj, const model::Rates& r) {
    const double amp = std::sqrt(r.output_rate);
    std::vector<std::complex<double>> f(traj.states.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = amp * cavity_amplitude(traj.states[i]);
    return f;
}

/// PSD of the output field after discarding the leading transient fraction.
inline Psd output_psd(const Trajectory& traj, const model::Rates& r, const WelchOptions& opt = {}) {
    if (traj.times.size() < 2) throw InvalidArgument("trajectory", "series shorter than the PSD minimum");
    if (!(opt.transient_fraction >= 0.0 && opt.transient_fraction < 1.0)) {
        throw InvalidArgument("transient_fraction", "must be in [0, 1)");
    }
    const double dt = traj.times[1] - traj.times[0];
    const auto field = output_field(traj, r);
    const auto skip = static_cast<std::size_t>(std::floor(opt.transient_fraction * static_cast<double>(field.size())));
    return welch_psd(std::span<const std::complex<double>>(field).subspan(skip), dt, opt);
}

}  // namespace optomech::dynamics
