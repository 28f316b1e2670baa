#pragma once

// Linearized response of the pump-dressed system to a weak probe under a
// piecewise-constant pump. Per segment the state X = (a, a†, b, b†) obeys
// Ẋ = M·X + r(t) with r = (−i·Sp·e^{−iΩt}, i·Sp*·e^{iΩt}, 0, 0). The solution
// is a particular part from B(±Ω) plus homogeneous modes of M, matched
// continuously at segment boundaries, then shifted into the probe frame.

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <vector>

#include "optomech/dynamics/integrator.hpp"
#include "optomech/errors.hpp"
#include "optomech/model.hpp"
#include "optomech/pump.hpp"
#include "optomech/units.hpp"

namespace optomech::dynamics {

using cd = std::complex<double>;
using Matrix4c = Eigen::Matrix<cd, 4, 4>;
using Vector4c = Eigen::Matrix<cd, 4, 1>;

/// M for effective detuning Δ̃ and coupling g (rad/s).
inline Matrix4c drift_matrix(double detuning, double g, double mech_freq, double kappa, double damping) {
    const cd i(0.0, 1.0);
    const double hk = 0.5 * kappa, hg = 0.5 * damping;
    Matrix4c m;
    m << i * detuning - hk, 0.0, -i * g, -i * g,
         0.0, -i * detuning - hk, i * g, i * g,
         -i * g, -i * g, -i * mech_freq - hg, 0.0,
         i * g, i * g, 0.0, i * mech_freq - hg;
    return m;
}

/// B(ω) = (−iω·I − M)⁻¹.
inline Matrix4c response_matrix(const Matrix4c& m, double omega) {
    const Matrix4c a = cd(0.0, -omega) * Matrix4c::Identity() - m;
    Eigen::PartialPivLU<Matrix4c> lu(a);
    if (!(lu.rcond() > 1e-14)) throw NumericalError("response_matrix: −iω − M singular");
    return lu.inverse();
}

/// Gap between the two positive imaginary parts of M's eigenvalues (rad/s):
/// the normal-mode splitting of the dressed system.
inline double normal_mode_gap(const Matrix4c& m) {
    Eigen::ComplexEigenSolver<Matrix4c> es(m, false);
    if (es.info() != Eigen::Success) throw NumericalError("normal_mode_gap: eigen-solve failed");
    std::vector<double> pos;
    for (int k = 0; k < 4; ++k) {
        if (es.eigenvalues()(k).imag() > 0.0) pos.push_back(es.eigenvalues()(k).imag());
    }
    if (pos.size() != 2) throw NumericalError("normal_mode_gap: expected two positive-frequency modes");
    return std::abs(pos[0] - pos[1]);
}

struct TransientSegment {
    double duration = 0.0;   // s
    double coupling = 0.0;   // g, rad/s
    double detuning = 0.0;   // Δ̃, rad/s
};

/// Segment for a pump that is on: g = g0·√n_d and Δ̃ = Δ + total static shift.
inline TransientSegment pump_on_segment(const model::DeviceParams& params, const model::PumpDrive& pump,
                                        double duration) {
    const auto rp = model::resolve_pump(params, pump);
    TransientSegment s;
    s.duration = duration;
    s.coupling = units::to_angular(model::coupling_rate(params.coupling0_hz, rp.photons));
    s.detuning = rp.drive.detuning + units::to_angular(model::total_static_shift(rp.photons, params));
    return s;
}

/// Segment with the pump off; the frame still rotates at the pump frequency.
inline TransientSegment pump_off_segment(double bare_detuning_hz, double duration) {
    return {duration, 0.0, units::to_angular(bare_detuning_hz)};
}

struct TransientProbe {
    double offset = 0.0;         // Ω = ωp − ωd, rad/s
    cd amplitude{1.0, 0.0};      // Sp
};

struct TransientOptions {
    double sample_dt = 1e-9;             // s
    double condition_limit = 1e8;        // eigenvector matrix condition above which a segment is integrated
    bool drop_fast_terms = true;         // discard terms rotating near 2Ω after the frame shift
    bool start_steady = true;            // begin in the first segment's driven steady state; else at rest
    Tolerances tol{};
};

struct TransientResult {
    std::vector<double> t;
    std::vector<cd> cavity;          // demodulated cavity amplitude a·e^{iΩt}
    std::vector<cd> steady;          // its particular (steady-state) part
    std::vector<Vector4c> state;     // full pump-frame X(t)
    std::vector<bool> integrated;    // per segment: eigen path rejected, ODE used

    std::vector<double> in_phase() const {
        std::vector<double> v(cavity.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = cavity[i].real();
        return v;
    }
    std::vector<double> quadrature() const {
        std::vector<double> v(cavity.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = cavity[i].imag();
        return v;
    }
};

namespace detail {

struct SegmentSolver {
    Matrix4c m;
    Vector4c col_minus;  // −i·Sp*·… coefficient vector multiplying e^{−iΩt}
    Vector4c col_plus;   // coefficient vector multiplying e^{+iΩt}
    double omega = 0.0;

    Vector4c particular(double t) const {
        return col_minus * std::exp(cd(0.0, -omega * t)) + col_plus * std::exp(cd(0.0, omega * t));
    }
};

inline SegmentSolver make_solver(const TransientSegment& seg, const model::Rates& r, const TransientProbe& probe) {
    SegmentSolver s;
    s.m = drift_matrix(seg.detuning, seg.coupling, r.mech_freq, r.kappa(), r.mech_damping);
    s.omega = probe.offset;
    const cd i(0.0, 1.0);
    // Drive on a is −i·Sp·e^{−iΩt}; on a† its conjugate i·Sp*·e^{iΩt}.
    s.col_minus = -i * probe.amplitude * response_matrix(s.m, probe.offset).col(0);
    s.col_plus = i * std::conj(probe.amplitude) * response_matrix(s.m, -probe.offset).col(1);
    return s;
}

}  // namespace detail

/// Solves the piecewise-linear problem over the segments and samples every
/// sample_dt from t = 0. Quadratures are in units of Sp when |Sp| = 1.
inline TransientResult transient_linear_response(const model::Rates& r, const std::vector<TransientSegment>& segments,
                                                 const TransientProbe& probe, const TransientOptions& opt = {}) {
    if (segments.empty()) throw InvalidArgument("schedule", "at least one segment required");
    for (const auto& s : segments) {
        if (!(s.duration > 0.0) || !std::isfinite(s.duration)) throw InvalidArgument("schedule", "durations must be finite and > 0");
        if (!(s.coupling >= 0.0) || !std::isfinite(s.detuning)) throw InvalidArgument("schedule", "segment needs g >= 0 and finite detuning");
    }
    if (!(opt.sample_dt > 0.0)) throw InvalidArgument("sample_dt", "must be > 0");
    if (!std::isfinite(probe.offset)) throw InvalidArgument("probe", "offset must be finite");

    double total = 0.0;
    for (const auto& s : segments) total += s.duration;
    const auto n_samples = static_cast<std::size_t>(std::floor(total / opt.sample_dt * (1.0 + 1e-12))) + 1;

    TransientResult res;
    res.t.reserve(n_samples);
    res.cavity.reserve(n_samples);
    res.steady.reserve(n_samples);
    res.state.reserve(n_samples);

    const double omega = probe.offset;
    auto shift = [omega](double t) { return std::exp(cd(0.0, omega * t)); };

    auto first = detail::make_solver(segments.front(), r, probe);
    Vector4c x0 = opt.start_steady ? first.particular(0.0) : Vector4c::Zero();

    std::size_t k = 0;
    double t_start = 0.0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
        const auto& seg = segments[si];
        const bool last = si + 1 == segments.size();
        const double t_end = last ? total : t_start + seg.duration;
        const auto solver = si == 0 ? first : detail::make_solver(seg, r, probe);

        Eigen::ComplexEigenSolver<Matrix4c> es(solver.m, true);
        bool use_eigen = es.info() == Eigen::Success;
        Eigen::PartialPivLU<Matrix4c> vlu;
        if (use_eigen) {
            const Matrix4c& v = es.eigenvectors();
            Eigen::JacobiSVD<Matrix4c> svd(v);
            const auto sv = svd.singularValues();
            const double cond = sv(3) > 0.0 ? sv(0) / sv(3) : std::numeric_limits<double>::infinity();
            use_eigen = cond < opt.condition_limit;
            if (use_eigen) vlu.compute(v);
        }
        res.integrated.push_back(!use_eigen);

        const Vector4c h0 = x0 - solver.particular(t_start);
        Vector4c coeff;
        if (use_eigen) coeff = vlu.solve(h0);

        // Homogeneous part by integration of ḣ = M·h (8 real components).
        Vector<8> hy{};
        for (int c = 0; c < 4; ++c) {
            hy[static_cast<std::size_t>(2 * c)] = h0(c).real();
            hy[static_cast<std::size_t>(2 * c + 1)] = h0(c).imag();
        }
        const Matrix4c mm = solver.m;
        // Absolute tolerance in units of the initial homogeneous amplitude.
        Tolerances tol = opt.tol;
        tol.abs *= std::max(h0.norm(), std::numeric_limits<double>::min());
        auto stepper = make_stepper<8>(
            [&mm](double, const Vector<8>& y) {
                Vector4c h;
                for (int c = 0; c < 4; ++c) h(c) = cd(y[static_cast<std::size_t>(2 * c)], y[static_cast<std::size_t>(2 * c + 1)]);
                const Vector4c d = mm * h;
                Vector<8> out;
                for (int c = 0; c < 4; ++c) {
                    out[static_cast<std::size_t>(2 * c)] = d(c).real();
                    out[static_cast<std::size_t>(2 * c + 1)] = d(c).imag();
                }
                return out;
            },
            tol);
        double t_int = t_start;

        auto homogeneous = [&](double t, bool drop) -> Vector4c {
            if (use_eigen) {
                Vector4c h = Vector4c::Zero();
                for (int c = 0; c < 4; ++c) {
                    const cd lam = es.eigenvalues()(c);
                    if (drop && omega != 0.0 && lam.imag() * omega > 0.0) continue;
                    h += es.eigenvectors().col(c) * (coeff(c) * std::exp(lam * (t - t_start)));
                }
                return h;
            }
            if (t > t_int) {
                stepper.integrate(hy, t_int, t, {}, [](double, const Vector<8>&) {});
                t_int = t;
            }
            Vector4c h;
            for (int c = 0; c < 4; ++c) h(c) = cd(hy[static_cast<std::size_t>(2 * c)], hy[static_cast<std::size_t>(2 * c + 1)]);
            return h;
        };

        while (k < n_samples) {
            const double t = static_cast<double>(k) * opt.sample_dt;
            if (t > t_end * (1.0 + 1e-12) && !last) break;
            const Vector4c xp = solver.particular(t);
            const Vector4c hfull = homogeneous(t, false);
            res.t.push_back(t);
            res.state.push_back(xp + hfull);
            const cd steady_demod = opt.drop_fast_terms ? solver.col_minus(0) : xp(0) * shift(t);
            const cd hom = use_eigen ? homogeneous(t, opt.drop_fast_terms)(0) : hfull(0);
            res.steady.push_back(steady_demod);
            res.cavity.push_back(steady_demod + hom * shift(t));
            ++k;
        }
        // Continuity: the next segment starts from the full state at the boundary.
        x0 = solver.particular(t_end) + homogeneous(t_end, false);
        t_start = t_end;
    }
    return res;
}

}  // namespace optomech::dynamics
