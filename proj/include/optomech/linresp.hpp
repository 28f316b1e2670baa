#pragma once

// Pump-dressed linear response: the 4×4 mode-coupling matrix (no
// rotating-wave approximation) and the probe transmission it implies. The
// static Kerr shift enters only through the shifted cavity frequency.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "optomech/errors.hpp"
#include "optomech/model.hpp"
#include "optomech/parallel.hpp"
#include "optomech/pump.hpp"
#include "optomech/units.hpp"

namespace optomech::linresp {

using cd = std::complex<double>;
using Matrix4c = Eigen::Matrix<cd, 4, 4>;

inline constexpr cd kI{0.0, 1.0};

/// χa(ω) = 1/(ω − ω̃c + iκ/2), rad/s.
inline cd cavity_susceptibility(double omega, double shifted_cavity, double kappa) {
    return 1.0 / cd(omega - shifted_cavity, 0.5 * kappa);
}

/// χb(ω) = 1/(ω − ωm + iγm/2), rad/s.
inline cd mech_susceptibility(double omega, double mech_freq, double damping) {
    return 1.0 / cd(omega - mech_freq, 0.5 * damping);
}

/// Pump state seen by the probe: frequencies in Hz.
struct DressedPump {
    double pump_freq_hz = 0.0;
    double coupling_hz = 0.0;        // g = g0·√n_d
    double shifted_cavity_hz = 0.0;  // ω̃c = ωc − total static shift
    double photons = 0.0;

    double effective_detuning_hz() const { return pump_freq_hz - shifted_cavity_hz; }
};

/// Resolves the pump's occupied fixed point and the resulting (g, ω̃c).
inline DressedPump dress(const model::DeviceParams& params, const model::PumpDrive& pump) {
    const auto rp = model::resolve_pump(params, pump);
    DressedPump d;
    d.photons = rp.photons;
    d.coupling_hz = model::coupling_rate(params.coupling0_hz, rp.photons);
    d.shifted_cavity_hz = params.cavity_freq_hz - model::total_static_shift(rp.photons, params);
    d.pump_freq_hz = params.cavity_freq_hz + units::to_hz(rp.drive.detuning);
    return d;
}

/// Pump specified by its coupling g and detuning from the shifted resonance.
inline DressedPump dress_at_coupling(const model::DeviceParams& params, double coupling_hz,
                                     double effective_detuning_hz) {
    DressedPump d;
    d.photons = coupling_hz > 0.0 ? model::photons_for_coupling(params.coupling0_hz, coupling_hz) : 0.0;
    d.coupling_hz = coupling_hz;
    d.shifted_cavity_hz = params.cavity_freq_hz - model::total_static_shift(d.photons, params);
    d.pump_freq_hz = d.shifted_cavity_hz + effective_detuning_hz;
    return d;
}

/// C(ω) with ω the probe offset from the pump, rad/s throughout:
///   [ χa⁻¹(ω+ωd)    g     0               g            ]
///   [ g             χb⁻¹(ω)  g            0            ]
///   [ 0            −g    −χa⁻¹(ωd−ω)*    −g            ]
///   [ −g            0    −g              −χb⁻¹(−ω)*    ]
inline Matrix4c coupling_matrix(double omega, double pump_freq, const model::Rates& r, double g,
                                double shifted_cavity) {
    if (!std::isfinite(omega) || !std::isfinite(pump_freq) || !std::isfinite(g) || !std::isfinite(shifted_cavity)) {
        throw InvalidArgument("coupling_matrix", "non-finite input");
    }
    if (g < 0.0) throw InvalidArgument("coupling", "must be >= 0");
    const double k = r.kappa();
    const cd a_plus = cd(omega + pump_freq - shifted_cavity, 0.5 * k);
    const cd a_minus = std::conj(cd(pump_freq - omega - shifted_cavity, 0.5 * k));
    const cd b_plus = cd(omega - r.mech_freq, 0.5 * r.mech_damping);
    const cd b_minus = std::conj(cd(-omega - r.mech_freq, 0.5 * r.mech_damping));
    Matrix4c c;
    c << a_plus, g, 0.0, g,
         g, b_plus, g, 0.0,
         0.0, -g, -a_minus, -g,
         -g, 0.0, -g, -b_minus;
    return c;
}

/// Reciprocal condition estimate below which C is treated as singular.
inline constexpr double kSingularRcond = 1e-14;

/// T = i·√(κe1·κe2)·(C⁻¹)₁₁ at lab probe frequency `probe_freq_hz`.
inline cd transmission(double probe_freq_hz, const model::DeviceParams& params, const DressedPump& pump) {
    const model::Rates r = params.rates();
    const double omega = units::to_angular(probe_freq_hz - pump.pump_freq_hz);
    const Matrix4c c = coupling_matrix(omega, units::to_angular(pump.pump_freq_hz), r,
                                       units::to_angular(pump.coupling_hz), units::to_angular(pump.shifted_cavity_hz));
    Eigen::PartialPivLU<Matrix4c> lu(c);
    if (!(lu.rcond() > kSingularRcond)) throw NumericalError("transmission: singular mode-coupling matrix");
    const Eigen::Matrix<cd, 4, 1> col = lu.solve(Eigen::Matrix<cd, 4, 1>::Unit(0));
    return kI * std::sqrt(r.input_rate * r.output_rate) * col(0);
}

/// Peak |T| of the undressed cavity, 2·√(κe1·κe2)/κ; the normalization reference.
inline double bare_peak_transmission(const model::DeviceParams& params) {
    return 2.0 * std::sqrt(params.input_rate_hz * params.output_rate_hz) / model::total_linewidth(params);
}

struct TransmissionTrace {
    std::vector<double> freqs_hz;  // probe frequency, ascending
    std::vector<cd> t;
    DressedPump pump;
    double normalization = 1.0;    // bare peak |T|

    double abs_at(std::size_t i) const { return std::abs(t[i]); }
    double normalized_at(std::size_t i) const { return std::abs(t[i]) / normalization; }
};

inline void check_grid(const std::vector<double>& grid) {
    if (grid.empty()) throw InvalidArgument("probe_grid", "empty grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) throw InvalidArgument("probe_grid", "non-finite frequency");
        if (i > 0 && !(grid[i] > grid[i - 1])) throw InvalidArgument("probe_grid", "must be strictly increasing");
    }
}

inline TransmissionTrace spectrum(const std::vector<double>& probe_freqs_hz, const model::DeviceParams& params,
                                  const DressedPump& pump) {
    check_grid(probe_freqs_hz);
    TransmissionTrace tr;
    tr.freqs_hz = probe_freqs_hz;
    tr.pump = pump;
    tr.normalization = bare_peak_transmission(params);
    tr.t.reserve(probe_freqs_hz.size());
    for (double f : probe_freqs_hz) tr.t.push_back(transmission(f, params, pump));
    return tr;
}

/// Spectra over a sweep of pump detunings at fixed power, one trace per pump
/// setting, in input order.
inline std::vector<TransmissionTrace> transmission_map(const std::vector<double>& pump_detunings_hz, double power_w,
                                                       const std::vector<double>& probe_freqs_hz,
                                                       const model::DeviceParams& params,
                                                       model::SweepDirection dir = model::SweepDirection::up,
                                                       std::size_t workers = 1) {
    check_grid(probe_freqs_hz);
    if (pump_detunings_hz.empty()) throw InvalidArgument("pump_grid", "empty grid");
    std::vector<TransmissionTrace> out(pump_detunings_hz.size());
    parallel_for(pump_detunings_hz.size(), workers, [&](std::size_t i) {
        const auto pump = model::PumpDrive::from_power(pump_detunings_hz[i], power_w, dir);
        out[i] = spectrum(probe_freqs_hz, params, dress(params, pump));
    });
    return out;
}

// ---------------------------------------------------------------------------
// Peak extraction

struct Peak {
    std::size_t index;
    double freq_hz;     // refined by quadratic interpolation
    double height;
    double prominence;
};

/// Local maxima of `values` with topographic prominence at least
/// rel_prominence × max(values), sorted by prominence descending.
inline std::vector<Peak> find_peaks(const std::vector<double>& freqs, const std::vector<double>& values,
                                    double rel_prominence = 0.05) {
    const std::size_t n = values.size();
    std::vector<Peak> peaks;
    if (n < 3) return peaks;
    const double vmax = *std::max_element(values.begin(), values.end());
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(values[i] > values[i - 1] && values[i] >= values[i + 1])) continue;
        // Walk each side until a higher sample; the base is the higher of the two minima.
        double left_min = values[i];
        for (std::size_t j = i; j-- > 0;) {
            if (values[j] > values[i]) break;
            left_min = std::min(left_min, values[j]);
        }
        double right_min = values[i];
        for (std::size_t j = i + 1; j < n; ++j) {
            if (values[j] > values[i]) break;
            right_min = std::min(right_min, values[j]);
        }
        const double prom = values[i] - std::max(left_min, right_min);
        if (prom < rel_prominence * vmax) continue;
        // Vertex of the parabola through the three samples.
        const double x0 = freqs[i - 1], x1 = freqs[i], x2 = freqs[i + 1];
        const double y0 = values[i - 1], y1 = values[i], y2 = values[i + 1];
        const double d01 = (y1 - y0) / (x1 - x0);
        const double d12 = (y2 - y1) / (x2 - x1);
        const double curv = (d12 - d01) / (x2 - x0);
        double f = x1;
        if (curv < 0.0) {
            f = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
            f = std::clamp(f, x0, x2);
        }
        peaks.push_back({i, f, values[i], prom});
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) { return a.prominence > b.prominence; });
    return peaks;
}

inline std::vector<Peak> find_peaks(const TransmissionTrace& trace, double rel_prominence = 0.05) {
    std::vector<double> mag(trace.t.size());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(trace.t[i]);
    return find_peaks(trace.freqs_hz, mag, rel_prominence);
}

/// Separation (Hz) of the two most prominent maxima of |T|.
inline double peak_splitting(const TransmissionTrace& trace, double rel_prominence = 0.05) {
    const auto peaks = find_peaks(trace, rel_prominence);
    if (peaks.size() < 2) throw NumericalError("peak_splitting: fewer than two peaks");
    return std::abs(peaks[0].freq_hz - peaks[1].freq_hz);
}

}  // namespace optomech::linresp
