#pragma once

// Largest Lyapunov exponent by tangent-space propagation with periodic
// renormalization (Benettin). The tangent flow uses the evolution matrix S
// evaluated along the trajectory.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "optomech/dynamics/integrator.hpp"
#include "optomech/dynamics/trajectory.hpp"
#include "optomech/errors.hpp"
#include "optomech/pump.hpp"
#include "optomech/stability.hpp"

namespace optomech::dynamics {

struct LyapunovOptions {
    double transient = 100e-6;       // s, state-only integration before measuring
    double duration = 400e-6;        // s, measured span
    double renorm_interval = 1e-6;   // s
    std::size_t batches = 20;
    std::uint64_t seed = 0;          // initial tangent direction
    Tolerances tol{};
};

struct LyapunovResult {
    double exponent = 0.0;     // 1/s
    double std_error = 0.0;    // batch-means standard error, 1/s
    std::vector<double> history_t;         // time since measurement start
    std::vector<double> history_estimate;  // running estimate
    std::size_t renormalizations = 0;
    IntegratorStats stats;

    /// |exponent| / std_error, signed.
    double z_score() const { return std_error > 0.0 ? exponent / std_error : 0.0; }
};

inline LyapunovResult lyapunov_max(const State& initial, const model::Rates& r, const Drive& d,
                                   const LyapunovOptions& opt = {}) {
    if (!(opt.renorm_interval > 0.0)) throw InvalidArgument("renorm_interval", "must be > 0");
    if (!(opt.duration > 0.0) || !(opt.transient >= 0.0)) throw InvalidArgument("t_span", "must be positive");
    if (opt.batches < 2) throw InvalidArgument("batches", "need at least 2");
    const auto intervals = static_cast<std::size_t>(std::floor(opt.duration / opt.renorm_interval + 1e-9));
    if (intervals < 2 * opt.batches) {
        throw NumericalError("lyapunov_max: t_span too short for the requested batches");
    }

    State s = initial;
    LyapunovResult res;
    if (opt.transient > 0.0) {
        auto st = make_stepper<4>([&r, d](double, const State& y) { return eom_rhs(y, r, d); }, opt.tol);
        st.integrate(s, 0.0, opt.transient, {}, [](double, const State&) {});
        res.stats = st.stats();
    }

    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> normal;
    Vector<8> y{};
    double norm0 = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        y[i] = s[i];
        y[4 + i] = normal(rng);
        norm0 += y[4 + i] * y[4 + i];
    }
    norm0 = std::sqrt(norm0);
    for (std::size_t i = 4; i < 8; ++i) y[i] /= norm0;

    auto rhs = [&r, d](double, const Vector<8>& v) {
        const State st{v[0], v[1], v[2], v[3]};
        const State f = eom_rhs(st, r, d);
        const Eigen::Matrix4d jac = stability::jacobian(st, r, d);
        Vector<8> out;
        for (std::size_t i = 0; i < 4; ++i) {
            out[i] = f[i];
            double acc = 0.0;
            for (std::size_t j = 0; j < 4; ++j) acc += jac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * v[4 + j];
            out[4 + i] = acc;
        }
        return out;
    };
    auto stepper = make_stepper<8>(rhs, opt.tol);

    std::vector<double> logs;
    logs.reserve(intervals);
    double sum = 0.0;
    for (std::size_t k = 0; k < intervals; ++k) {
        const double t0 = static_cast<double>(k) * opt.renorm_interval;
        const double t1 = static_cast<double>(k + 1) * opt.renorm_interval;
        stepper.integrate(y, t0, t1, {}, [](double, const Vector<8>&) {});
        double nrm = 0.0;
        for (std::size_t i = 4; i < 8; ++i) nrm += y[i] * y[i];
        nrm = std::sqrt(nrm);
        if (!(nrm > 0.0) || !std::isfinite(nrm)) throw NumericalError("lyapunov_max: tangent vector degenerate");
        for (std::size_t i = 4; i < 8; ++i) y[i] /= nrm;
        logs.push_back(std::log(nrm));
        sum += logs.back();
        res.history_t.push_back(t1);
        res.history_estimate.push_back(sum / t1);
    }
    res.renormalizations = intervals;
    res.exponent = sum / (static_cast<double>(intervals) * opt.renorm_interval);

    const std::size_t per_batch = intervals / opt.batches;
    std::vector<double> batch(opt.batches, 0.0);
    for (std::size_t b = 0; b < opt.batches; ++b) {
        double acc = 0.0;
        for (std::size_t k = b * per_batch; k < (b + 1) * per_batch; ++k) acc += logs[k];
        batch[b] = acc / (static_cast<double>(per_batch) * opt.renorm_interval);
    }
    double mean = 0.0;
    for (double v : batch) mean += v;
    mean /= static_cast<double>(opt.batches);
    double var = 0.0;
    for (double v : batch) var += (v - mean) * (v - mean);
    var /= static_cast<double>(opt.batches - 1);
    res.std_error = std::sqrt(var / static_cast<double>(opt.batches));

    const auto& st = stepper.stats();
    res.stats.steps += st.steps;
    res.stats.rejected += st.rejected;
    res.stats.max_error_estimate = std::max(res.stats.max_error_estimate, st.max_error_estimate);
    res.stats.accumulated_error += st.accumulated_error;
    return res;
}

/// Starts from the occupied fixed point plus the deterministic seeded kick.
inline LyapunovResult lyapunov_max(const model::DeviceParams& params, const model::PumpDrive& pump,
                                   const LyapunovOptions& opt = {}) {
    const auto rp = model::resolve_pump(params, pump);
    return lyapunov_max(kicked_state(rp.fixed_point.state, opt.seed), params.rates(), rp.drive, opt);
}

}  // namespace optomech::dynamics
