#pragma once

// Explicit Runge–Kutta 5(4) pair of Dormand and Prince with step-size control
// and the 4th-order continuous extension used for dense output.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "optomech/errors.hpp"

namespace optomech::dynamics {

template <std::size_t N>
using Vector = std::array<double, N>;

struct Tolerances {
    double rel = 1e-9;
    double abs = 1e-12;
    double max_step = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 200'000'000;
};

struct IntegratorStats {
    std::size_t steps = 0;
    std::size_t rejected = 0;
    double max_error_estimate = 0.0;  // largest scaled local error (≤ 1 on accepted steps)
    double accumulated_error = 0.0;   // sum of max-norm local errors, absolute units
};

/// Thrown on step-size underflow or a non-finite state; carries the time of failure.
class IntegrationError : public NumericalError {
public:
    IntegrationError(const std::string& what, double t)
        : NumericalError(what + " at t = " + std::to_string(t)), time_(t) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

namespace dopri {

inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432, d3 = 87487479700.0 / 32700410799,
                        d4 = -10690763975.0 / 1880347072, d5 = 701980252875.0 / 199316789632,
                        d6 = -1453857185.0 / 822651844, d7 = 69997945.0 / 29380423;

}  // namespace dopri

/// Stepper state for one continuous stretch of integration. The right-hand
/// side must be smooth over the stretch; restart at discontinuities.
template <std::size_t N, class Rhs>
class DormandPrince {
public:
    DormandPrince(Rhs rhs, Tolerances tol) : rhs_(std::move(rhs)), tol_(tol) {}

    const IntegratorStats& stats() const { return stats_; }

    /// Integrates y from t0 to t1, calling sample(t, y_t) for each t in
    /// `sample_times` lying in [t0, t1] (sorted ascending) from the dense
    /// output. Returns the index of the first sample time not consumed.
    template <class Sample>
    std::size_t integrate(Vector<N>& y, double t0, double t1, std::span<const double> sample_times,
                          Sample&& sample) {
        std::size_t next = 0;
        while (next < sample_times.size() && sample_times[next] < t0) ++next;
        while (next < sample_times.size() && sample_times[next] == t0) sample(t0, y), ++next;
        if (t1 <= t0) return next;

        double t = t0;
        Vector<N> k1 = rhs_(t, y);
        check_finite(k1, t);
        double h = h_hint_ > 0.0 ? std::min(h_hint_, t1 - t0) : initial_step(y, k1, t, t1 - t0);
        double fac_old = 1e-4;
        bool rejected_last = false;
        Vector<N> k2, k3, k4, k5, k6, k7, ytmp, ynew;

        while (t < t1) {
            if (stats_.steps + stats_.rejected >= tol_.max_steps) throw IntegrationError("step limit exceeded", t);
            bool last = false;
            if (t + h >= t1) {
                h = t1 - t;
                last = true;
            } else if (h < 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t))) {
                throw IntegrationError("step-size underflow", t);
            }
            for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * dopri::a21 * k1[i];
            k2 = rhs_(t + dopri::c2 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * (dopri::a31 * k1[i] + dopri::a32 * k2[i]);
            k3 = rhs_(t + dopri::c3 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a41 * k1[i] + dopri::a42 * k2[i] + dopri::a43 * k3[i]);
            k4 = rhs_(t + dopri::c4 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a51 * k1[i] + dopri::a52 * k2[i] + dopri::a53 * k3[i] +
                                      dopri::a54 * k4[i]);
            k5 = rhs_(t + dopri::c5 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a61 * k1[i] + dopri::a62 * k2[i] + dopri::a63 * k3[i] +
                                      dopri::a64 * k4[i] + dopri::a65 * k5[i]);
            k6 = rhs_(t + h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ynew[i] = y[i] + h * (dopri::a71 * k1[i] + dopri::a73 * k3[i] + dopri::a74 * k4[i] +
                                      dopri::a75 * k5[i] + dopri::a76 * k6[i]);
            k7 = rhs_(t + h, ynew);

            double err = 0.0;
            double err_abs = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                const double e = h * (dopri::e1 * k1[i] + dopri::e3 * k3[i] + dopri::e4 * k4[i] +
                                      dopri::e5 * k5[i] + dopri::e6 * k6[i] + dopri::e7 * k7[i]);
                const double sc = tol_.abs + tol_.rel * std::max(std::abs(y[i]), std::abs(ynew[i]));
                err += (e / sc) * (e / sc);
                err_abs = std::max(err_abs, std::abs(e));
            }
            err = std::sqrt(err / static_cast<double>(N));
            if (!std::isfinite(err)) {
                check_finite(ynew, t + h);
                err = 1e10;
            }

            constexpr double beta = 0.04, safe = 0.9;
            constexpr double expo = 0.2 - beta * 0.75;
            const double fac11 = std::pow(std::max(err, 1e-300), expo);
            if (err <= 1.0) {
                double fac = fac11 / std::pow(fac_old, beta);
                fac = std::clamp(fac / safe, 0.1, 5.0);
                const double hnew_raw = h / fac;
                fac_old = std::max(err, 1e-4);
                ++stats_.steps;
                stats_.max_error_estimate = std::max(stats_.max_error_estimate, err);
                stats_.accumulated_error += err_abs;

                // Dense output coefficients.
                std::array<Vector<N>, 5> rc;
                for (std::size_t i = 0; i < N; ++i) {
                    const double dy = ynew[i] - y[i];
                    const double bspl = h * k1[i] - dy;
                    rc[0][i] = y[i];
                    rc[1][i] = dy;
                    rc[2][i] = bspl;
                    rc[3][i] = dy - h * k7[i] - bspl;
                    rc[4][i] = h * (dopri::d1 * k1[i] + dopri::d3 * k3[i] + dopri::d4 * k4[i] +
                                    dopri::d5 * k5[i] + dopri::d6 * k6[i] + dopri::d7 * k7[i]);
                }
                const double t_end = last ? t1 : t + h;
                while (next < sample_times.size() && sample_times[next] <= t_end) {
                    const double ts = sample_times[next];
                    Vector<N> ys;
                    if (ts == t_end) {
                        ys = ynew;
                    } else {
                        const double th = (ts - t) / h;
                        const double th1 = 1.0 - th;
                        for (std::size_t i = 0; i < N; ++i) {
                            ys[i] = rc[0][i] + th * (rc[1][i] + th1 * (rc[2][i] + th * (rc[3][i] + th1 * rc[4][i])));
                        }
                    }
                    sample(ts, ys);
                    ++next;
                }

                check_finite(ynew, t_end);
                y = ynew;
                k1 = k7;
                t = t_end;
                double hnew = std::min(hnew_raw, tol_.max_step);
                if (rejected_last) hnew = std::min(hnew, h);
                rejected_last = false;
                if (!last) h_hint_ = hnew;
                h = hnew;
            } else {
                ++stats_.rejected;
                h = h / std::min(10.0, fac11 / safe);
                rejected_last = true;
            }
        }
        return next;
    }

    /// Fixed step size, 5th-order solution only; used for convergence-order checks.
    void integrate_fixed(Vector<N>& y, double t0, double t1, std::size_t n_steps) {
        const double h = (t1 - t0) / static_cast<double>(n_steps);
        double t = t0;
        Vector<N> k1, k2, k3, k4, k5, k6, ytmp;
        for (std::size_t s = 0; s < n_steps; ++s) {
            k1 = rhs_(t, y);
            for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * dopri::a21 * k1[i];
            k2 = rhs_(t + dopri::c2 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i) ytmp[i] = y[i] + h * (dopri::a31 * k1[i] + dopri::a32 * k2[i]);
            k3 = rhs_(t + dopri::c3 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a41 * k1[i] + dopri::a42 * k2[i] + dopri::a43 * k3[i]);
            k4 = rhs_(t + dopri::c4 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a51 * k1[i] + dopri::a52 * k2[i] + dopri::a53 * k3[i] +
                                      dopri::a54 * k4[i]);
            k5 = rhs_(t + dopri::c5 * h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                ytmp[i] = y[i] + h * (dopri::a61 * k1[i] + dopri::a62 * k2[i] + dopri::a63 * k3[i] +
                                      dopri::a64 * k4[i] + dopri::a65 * k5[i]);
            k6 = rhs_(t + h, ytmp);
            for (std::size_t i = 0; i < N; ++i)
                y[i] += h * (dopri::a71 * k1[i] + dopri::a73 * k3[i] + dopri::a74 * k4[i] +
                             dopri::a75 * k5[i] + dopri::a76 * k6[i]);
            t = t0 + static_cast<double>(s + 1) * h;
            ++stats_.steps;
        }
    }

private:
    static void check_finite(const Vector<N>& v, double t) {
        for (double x : v) {
            if (!std::isfinite(x)) throw IntegrationError("non-finite state (blow-up)", t);
        }
    }

    double scaled_norm(const Vector<N>& v, const Vector<N>& ref) const {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = tol_.abs + tol_.rel * std::abs(ref[i]);
            s += (v[i] / sc) * (v[i] / sc);
        }
        return std::sqrt(s / static_cast<double>(N));
    }

    // Starting step after Hairer, Nørsett & Wanner.
    double initial_step(const Vector<N>& y, const Vector<N>& f0, double t, double span) {
        const double dnf = scaled_norm(f0, y);
        const double dny = scaled_norm(y, y);
        double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 * span : 0.01 * dny / dnf;
        h = std::min({h, span, tol_.max_step});
        Vector<N> y1;
        for (std::size_t i = 0; i < N; ++i) y1[i] = y[i] + h * f0[i];
        const Vector<N> f1 = rhs_(t + h, y1);
        Vector<N> df;
        for (std::size_t i = 0; i < N; ++i) df[i] = f1[i] - f0[i];
        const double der2 = scaled_norm(df, y) / h;
        const double der12 = std::max(der2, dnf);
        const double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 0.2);
        return std::min({100.0 * h, h1, span, tol_.max_step});
    }

    Rhs rhs_;
    Tolerances tol_;
    IntegratorStats stats_;
    double h_hint_ = 0.0;  // last proposed step, reused by the next integrate() call
};

template <std::size_t N, class Rhs>
DormandPrince<N, std::decay_t<Rhs>> make_stepper(Rhs&& rhs, Tolerances tol = {}) {
    return DormandPrince<N, std::decay_t<Rhs>>(std::forward<Rhs>(rhs), tol);
}

}  // namespace optomech::dynamics
