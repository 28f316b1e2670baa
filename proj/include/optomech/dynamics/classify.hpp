#pragma once

// Response taxonomy from the output PSD: static, self-oscillation (comb at
// ωm), period-2 (ωm/2), period-3 (ωm/3) or chaos (broadband).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "optomech/dynamics/psd.hpp"
#include "optomech/errors.hpp"

namespace optomech::dynamics {

enum class ResponseLabel { static_state, self_oscillation, period_2, period_3, chaos };

inline const char* to_string(ResponseLabel l) {
    switch (l) {
        case ResponseLabel::static_state: return "static";
        case ResponseLabel::self_oscillation: return "self_oscillation";
        case ResponseLabel::period_2: return "period_2";
        case ResponseLabel::period_3: return "period_3";
        case ResponseLabel::chaos: return "chaos";
    }
    return "?";
}

struct ClassifierOptions {
    double static_floor = 1e-10;        // AC / carrier power below which the response is static
    double flatness_threshold = 0.25;
    double comb_threshold = 0.5;
    double flatness_band = 2.0;         // in units of ωm
    double comb_band = 3.0;             // in units of ωm
    std::size_t carrier_bins = 2;       // bins either side of zero excluded
    double peak_prominence_db = 20.0;   // over the local median
    double dynamic_range_db = 80.0;     // below the strongest line
    double spacing_search = 0.2;        // fractional window around the nominal spacing
    double tie_margin = 0.05;
};

struct Candidate {
    ResponseLabel label;
    double score;
};

struct ResponseClass {
    ResponseLabel label = ResponseLabel::static_state;
    std::optional<double> comb_spacing_hz;
    double flatness = 0.0;
    double ac_to_carrier = 0.0;
    std::array<double, 3> comb_scores{};  // divisors 1, 2, 3
    std::vector<double> peaks_hz;
    bool ambiguous = false;
    std::array<Candidate, 2> top{};       // filled when ambiguous
};

namespace detail {

inline double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    return *mid;
}

struct CombFit {
    double score = 0.0;
    double spacing = 0.0;
};

/// Best harmonic grid near `nominal`: fraction of peaks within tol of a
/// nonzero multiple of the spacing, rescaled so that chance alignment
/// (coverage 2·tol/s) scores zero.
inline CombFit fit_comb(const std::vector<double>& peaks, double nominal, double df, const ClassifierOptions& opt) {
    CombFit best;
    if (peaks.empty()) return best;
    const double tol = 1.5 * df;
    const double lo = nominal * (1.0 - opt.spacing_search);
    const double hi = nominal * (1.0 + opt.spacing_search);
    const double step = 0.25 * df / std::max(1.0, std::abs(peaks.back()) / nominal);
    double best_dist = std::numeric_limits<double>::infinity();
    for (double s = lo; s <= hi; s += step) {
        const double coverage = std::min(1.0, 2.0 * tol / s);
        if (coverage >= 1.0) continue;
        std::size_t matched = 0;
        for (double f : peaks) {
            const double n = std::round(f / s);
            if (n != 0.0 && std::abs(f - n * s) <= tol) ++matched;
        }
        const double frac = static_cast<double>(matched) / static_cast<double>(peaks.size());
        const double score = (frac - coverage) / (1.0 - coverage);
        const double dist = std::abs(s - nominal);
        if (score > best.score + 1e-12 || (std::abs(score - best.score) <= 1e-12 && dist < best_dist)) {
            best = {score, s};
            best_dist = dist;
        }
    }
    if (best.score <= 0.0) return {0.0, 0.0};
    // Least-squares refinement over matched peaks.
    double num = 0.0, den = 0.0;
    for (double f : peaks) {
        const double n = std::round(f / best.spacing);
        if (n != 0.0 && std::abs(f - n * best.spacing) <= tol) {
            num += n * f;
            den += n * n;
        }
    }
    if (den > 0.0) best.spacing = num / den;
    return best;
}

}  // namespace detail

/// Classifies a PSD given the mechanical frequency (Hz). Requires bin width
/// finer than ωm/12.
inline ResponseClass classify_response(const Psd& psd, double mech_freq_hz, const ClassifierOptions& opt = {}) {
    if (!(mech_freq_hz > 0.0)) throw InvalidArgument("mech_freq", "must be > 0");
    const double df = psd.bin_width_hz;
    if (!(df > 0.0) || psd.density.size() < 8) throw InvalidArgument("psd", "empty spectrum");
    if (!(df < mech_freq_hz / 12.0)) throw InvalidArgument("psd", "resolution must be finer than mech_freq/12");

    const auto n = static_cast<std::ptrdiff_t>(psd.density.size());
    const auto zero = static_cast<std::ptrdiff_t>(psd.zero_bin());
    const auto carrier = static_cast<std::ptrdiff_t>(opt.carrier_bins);
    auto in_carrier = [&](std::ptrdiff_t k) { return std::abs(k - zero) <= carrier; };
    auto offset = [&](std::ptrdiff_t k) { return psd.freqs_hz[static_cast<std::size_t>(k)]; };
    auto dens = [&](std::ptrdiff_t k) { return psd.density[static_cast<std::size_t>(k)]; };

    ResponseClass rc;
    double carrier_power = 0.0, ac_power = 0.0;
    const double comb_limit = opt.comb_band * mech_freq_hz;
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        if (in_carrier(k)) carrier_power += dens(k);
        else if (std::abs(offset(k)) <= comb_limit) ac_power += dens(k);
    }
    rc.ac_to_carrier = carrier_power > 0.0 ? ac_power / carrier_power
                                           : (ac_power > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
    if (rc.ac_to_carrier < opt.static_floor) return rc;

    // Spectral flatness over the analysis band.
    const double flat_limit = opt.flatness_band * mech_freq_hz;
    double log_sum = 0.0, lin_sum = 0.0;
    std::size_t count = 0;
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        if (in_carrier(k) || std::abs(offset(k)) > flat_limit) continue;
        const double v = std::max(dens(k), std::numeric_limits<double>::min());
        log_sum += std::log(v);
        lin_sum += v;
        ++count;
    }
    rc.flatness = count > 0 && lin_sum > 0.0 ? std::exp(log_sum / static_cast<double>(count)) /
                                                   (lin_sum / static_cast<double>(count))
                                             : 0.0;

    // Peaks: local maxima that stand above the local median.
    const auto half = static_cast<std::ptrdiff_t>(4);
    const auto bg = std::max<std::ptrdiff_t>(20, static_cast<std::ptrdiff_t>(std::lround(0.25 * mech_freq_hz / df)));
    const double prominence = std::pow(10.0, opt.peak_prominence_db / 10.0);
    std::vector<std::pair<double, double>> raw;  // (freq, density)
    double strongest = 0.0;
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        if (in_carrier(k) || std::abs(offset(k)) > comb_limit) continue;
        const double v = dens(k);
        bool is_max = v > 0.0;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, k - half); is_max && j <= std::min(n - 1, k + half); ++j) {
            if (j != k && (dens(j) > v || (dens(j) == v && j < k))) is_max = false;
        }
        if (!is_max) continue;
        std::vector<double> window;
        for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, k - bg); j <= std::min(n - 1, k + bg); ++j) {
            if (!in_carrier(j)) window.push_back(dens(j));
        }
        if (v < prominence * detail::median_of(std::move(window))) continue;
        // Quadratic vertex in log power for a sub-bin peak position.
        double f = offset(k);
        if (k > 0 && k + 1 < n && dens(k - 1) > 0.0 && dens(k + 1) > 0.0) {
            const double a = std::log(dens(k - 1)), b = std::log(v), c = std::log(dens(k + 1));
            const double den = a - 2.0 * b + c;
            if (den < 0.0) f += 0.5 * (a - c) / den * df;
        }
        raw.emplace_back(f, v);
        strongest = std::max(strongest, v);
    }
    const double floor = strongest * std::pow(10.0, -opt.dynamic_range_db / 10.0);
    for (const auto& [f, v] : raw) {
        if (v >= floor) rc.peaks_hz.push_back(f);
    }
    std::sort(rc.peaks_hz.begin(), rc.peaks_hz.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });

    std::array<detail::CombFit, 3> fits{};
    double best_score = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        fits[i] = detail::fit_comb(rc.peaks_hz, mech_freq_hz / static_cast<double>(i + 1), df, opt);
        rc.comb_scores[i] = fits[i].score;
        best_score = std::max(best_score, fits[i].score);
    }
    constexpr std::array<ResponseLabel, 3> comb_labels{ResponseLabel::self_oscillation, ResponseLabel::period_2,
                                                       ResponseLabel::period_3};
    if (best_score > opt.comb_threshold) {
        for (std::size_t i = 0; i < 3; ++i) {
            if (fits[i].score >= best_score - opt.tie_margin) {
                rc.label = comb_labels[i];
                rc.comb_spacing_hz = fits[i].spacing;
                return rc;
            }
        }
    }
    if (rc.flatness > opt.flatness_threshold) {
        rc.label = ResponseLabel::chaos;
        return rc;
    }

    // Neither a comb nor a flat spectrum.
    std::vector<Candidate> cands{{ResponseLabel::chaos, rc.flatness / opt.flatness_threshold * opt.comb_threshold}};
    for (std::size_t i = 0; i < 3; ++i) cands.push_back({comb_labels[i], fits[i].score});
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    rc.ambiguous = true;
    rc.top = {cands[0], cands[1]};
    rc.label = cands[0].label;
    if (rc.label != ResponseLabel::chaos) {
        rc.comb_spacing_hz = fits[static_cast<std::size_t>(rc.label) - 1].spacing;
        if (*rc.comb_spacing_hz <= 0.0) rc.comb_spacing_hz = mech_freq_hz / static_cast<double>(rc.label);
    }
    return rc;
}

}  // namespace optomech::dynamics
