#pragma once

// Fixed points of the Kerr-augmented semiclassical equations, their linear
// stability (sign of the real parts of the evolution-matrix eigenvalues), and
// the (detuning, power) phase map built from them.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "optomech/dynamics/equations.hpp"
#include "optomech/errors.hpp"
#include "optomech/model.hpp"
#include "optomech/parallel.hpp"
#include "optomech/units.hpp"

namespace optomech::stability {

// ---------------------------------------------------------------------------
// Cubic for the mechanical quadrature p at a fixed point

/// c3·p³ + c2·p² + c1·p + c0 = 0 together with the slope B of the effective
/// detuning A = Δ + B·p.
struct CubicCoefficients {
    double slope;
    double c3, c2, c1, c0;

    double operator()(double p) const { return ((c3 * p + c2) * p + c1) * p + c0; }
    double derivative(double p) const { return (3.0 * c3 * p + 2.0 * c2) * p + c1; }
};

/// ωm + γm²/(4ωm): the factor relating g0·|α|² to p at a fixed point.
inline double mech_stiffness(const model::Rates& r) {
    return r.mech_freq + r.mech_damping * r.mech_damping / (4.0 * r.mech_freq);
}

/// Requires g0 > 0; the closed form of B divides by g0.
inline CubicCoefficients eom_coefficients(const model::Rates& r, const Drive& d) {
    if (!(r.coupling0 > 0.0)) {
        throw InvalidArgument("coupling0", "cubic in p requires g0 > 0; use fixed_points for g0 = 0");
    }
    const double w = mech_stiffness(r);
    const double b = 2.0 * r.coupling0 + (r.kerr / r.coupling0) * w;
    const double k = r.kappa();
    CubicCoefficients c{};
    c.slope = b;
    c.c3 = b * b * w;
    c.c2 = 2.0 * b * d.detuning * w;
    c.c1 = (d.detuning * d.detuning + 0.25 * k * k) * w;
    c.c0 = -r.coupling0 * d.amplitude * d.amplitude;
    return c;
}

struct RealRoot {
    double value;
    bool degenerate;  // collapsed from a (near-)multiple root
};

namespace detail {

inline double polish_root(const std::array<double, 4>& c, double x) {
    auto f = [&](double v) { return ((c[3] * v + c[2]) * v + c[1]) * v + c[0]; };
    auto df = [&](double v) { return (3.0 * c[3] * v + 2.0 * c[2]) * v + c[1]; };
    double fx = std::abs(f(x));
    for (int it = 0; it < 12 && fx > 0.0; ++it) {
        const double slope = df(x);
        if (slope == 0.0 || !std::isfinite(slope)) break;
        const double cand = x - f(x) / slope;
        const double fc = std::abs(f(cand));
        if (!(fc < fx)) break;
        x = cand;
        fx = fc;
    }
    return x;
}

}  // namespace detail

/// Real roots of c3·x³ + c2·x² + c1·x + c0 (leading coefficients may vanish),
/// ascending. Roots are eigenvalues of the companion matrix of the rescaled
/// monic polynomial, each polished by Newton iteration. Near-coincident roots
/// are merged and marked degenerate.
inline std::vector<RealRoot> real_cubic_roots(double c3, double c2, double c1, double c0) {
    std::array<double, 4> coeff{c0, c1, c2, c3};
    int degree = 3;
    while (degree > 0 && coeff[static_cast<std::size_t>(degree)] == 0.0) --degree;
    if (degree == 0) {
        if (c0 == 0.0) throw NumericalError("real_cubic_roots: zero polynomial");
        return {};
    }
    const double lead = coeff[static_cast<std::size_t>(degree)];
    std::vector<double> monic(static_cast<std::size_t>(degree));  // a0..a_{d-1}
    for (int i = 0; i < degree; ++i) monic[static_cast<std::size_t>(i)] = coeff[static_cast<std::size_t>(i)] / lead;

    double scale = 0.0;
    for (int i = 0; i < degree; ++i) {
        const double a = std::abs(monic[static_cast<std::size_t>(i)]);
        scale = std::max(scale, std::pow(a, 1.0 / static_cast<double>(degree - i)));
    }
    std::vector<double> candidates;
    std::vector<bool> near_multiple;
    if (scale == 0.0) {
        candidates.assign(static_cast<std::size_t>(degree), 0.0);
        near_multiple.assign(static_cast<std::size_t>(degree), degree > 1);
    } else {
        Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(degree, degree);
        for (int j = 0; j < degree; ++j) {
            // u^d + Σ (a_i / s^{d-i}) u^i
            comp(0, j) = -monic[static_cast<std::size_t>(degree - 1 - j)] / std::pow(scale, j + 1);
        }
        for (int i = 1; i < degree; ++i) comp(i, i - 1) = 1.0;
        Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
        if (es.info() != Eigen::Success) throw NumericalError("real_cubic_roots: eigen-solve failed");
        constexpr double kImagTol = 1e-7;
        for (int i = 0; i < degree; ++i) {
            const std::complex<double> u = es.eigenvalues()(i);
            if (std::abs(u.imag()) <= kImagTol * std::max(1.0, std::abs(u))) {
                candidates.push_back(u.real() * scale);
                near_multiple.push_back(u.imag() != 0.0);
            }
        }
    }
    std::array<double, 4> full{coeff[0], coeff[1], coeff[2], coeff[3]};
    std::vector<RealRoot> roots;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        roots.push_back({detail::polish_root(full, candidates[i]), near_multiple[i]});
    }
    std::sort(roots.begin(), roots.end(), [](const RealRoot& a, const RealRoot& b) { return a.value < b.value; });
    // Merge collapsed multiplicities.
    const double merge_tol = 1e-6 * std::max(scale, std::numeric_limits<double>::min());
    std::vector<RealRoot> merged;
    for (const auto& rt : roots) {
        if (!merged.empty() && std::abs(rt.value - merged.back().value) <= merge_tol) {
            merged.back().degenerate = true;
            continue;
        }
        merged.push_back(rt);
    }
    return merged;
}

// ---------------------------------------------------------------------------
// Fixed points

struct FixedPoint {
    State state{};
    double residual = 0.0;  // relative residual of f1..f4
    bool degenerate = false;

    double x() const { return state[kX]; }
    double y() const { return state[kY]; }
    double p() const { return state[kP]; }
    double q() const { return state[kQ]; }
    double photons() const { return cavity_photons(state); }
};

namespace detail {

inline FixedPoint make_fixed_point(const model::Rates& r, const Drive& d, double p,
                                   double effective_detuning, bool degenerate) {
    const double hk = 0.5 * r.kappa();
    const double denom = effective_detuning * effective_detuning + hk * hk;
    FixedPoint fp;
    fp.state[kX] = hk * d.amplitude / denom;
    fp.state[kY] = effective_detuning * d.amplitude / denom;
    fp.state[kP] = p;
    fp.state[kQ] = (r.mech_damping / (2.0 * r.mech_freq)) * p;
    fp.residual = dynamics::relative_residual(fp.state, r, d);
    fp.degenerate = degenerate;
    return fp;
}

}  // namespace detail

/// All fixed points (one to three), sorted by p ascending (equivalently by
/// cavity photon number). For g0 = 0 the mechanics decouples and the photon
/// number solves the Kerr-only cubic directly.
inline std::vector<FixedPoint> fixed_points(const model::Rates& r, const Drive& d) {
    std::vector<FixedPoint> out;
    if (d.amplitude == 0.0) {
        out.push_back(detail::make_fixed_point(r, d, 0.0, d.detuning, false));
        return out;
    }
    if (r.coupling0 > 0.0) {
        const CubicCoefficients c = eom_coefficients(r, d);
        for (const auto& root : real_cubic_roots(c.c3, c.c2, c.c1, c.c0)) {
            if (root.value < 0.0) continue;  // cannot occur for c0 < 0 < c1, c3
            out.push_back(detail::make_fixed_point(r, d, root.value, d.detuning + c.slope * root.value,
                                                   root.degenerate));
        }
    } else {
        const double k = r.kappa();
        const auto roots = real_cubic_roots(r.kerr * r.kerr, 2.0 * r.kerr * d.detuning,
                                            d.detuning * d.detuning + 0.25 * k * k,
                                            -d.amplitude * d.amplitude);
        for (const auto& root : roots) {
            if (root.value < 0.0) continue;
            out.push_back(detail::make_fixed_point(r, d, 0.0, d.detuning + r.kerr * root.value,
                                                   root.degenerate));
        }
        std::sort(out.begin(), out.end(),
                  [](const FixedPoint& a, const FixedPoint& b) { return a.photons() < b.photons(); });
    }
    if (out.empty()) throw NumericalError("fixed_points: no nonnegative real root");
    return out;
}

// ---------------------------------------------------------------------------
// Linearization

/// Evolution matrix S = ∂(f1..f4)/∂(x, y, p, q), valid at any state.
inline Eigen::Matrix4d jacobian(const State& s, const model::Rates& r, const Drive& d) {
    const double x = s[kX], y = s[kY], p = s[kP];
    const double hk = 0.5 * r.kappa();
    const double hg = 0.5 * r.mech_damping;
    const double ak = r.kerr;
    const double g0 = r.coupling0;
    const double base = d.detuning + 2.0 * g0 * p;
    Eigen::Matrix4d m;
    m << -hk - 2.0 * ak * x * y, -base - ak * x * x - 3.0 * ak * y * y, -2.0 * g0 * y, 0.0,
         base + 3.0 * ak * x * x + ak * y * y, -hk + 2.0 * ak * x * y, 2.0 * g0 * x, 0.0,
         0.0, 0.0, -hg, r.mech_freq,
         2.0 * g0 * x, 2.0 * g0 * y, -r.mech_freq, -hg;
    return m;
}

inline Eigen::Matrix4d jacobian(const FixedPoint& fp, const model::Rates& r, const Drive& d) {
    return jacobian(fp.state, r, d);
}

enum class Label { stable, unstable, marginal, indeterminate };

inline const char* to_string(Label l) {
    switch (l) {
        case Label::stable: return "stable";
        case Label::unstable: return "unstable";
        case Label::marginal: return "marginal";
        case Label::indeterminate: return "indeterminate";
    }
    return "?";
}

struct StabilityVerdict {
    std::array<std::complex<double>, 4> eigenvalues{};
    double max_re = std::numeric_limits<double>::quiet_NaN();
    Label label = Label::indeterminate;
};

/// Tolerance on max Re λ below which the label is `marginal`: 1e-6·ωm.
inline double marginal_tolerance(const model::Rates& r) { return 1e-6 * r.mech_freq; }

inline StabilityVerdict verdict(const FixedPoint& fp, const model::Rates& r, const Drive& d) {
    StabilityVerdict v;
    Eigen::EigenSolver<Eigen::Matrix4d> es(jacobian(fp, r, d), false);
    if (es.info() != Eigen::Success) return v;
    double max_re = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
        v.eigenvalues[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
        max_re = std::max(max_re, es.eigenvalues()(i).real());
    }
    std::sort(v.eigenvalues.begin(), v.eigenvalues.end(), [](auto a, auto b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    v.max_re = max_re;
    const double tol = marginal_tolerance(r);
    if (!std::isfinite(max_re)) v.label = Label::indeterminate;
    else if (max_re < -tol) v.label = Label::stable;
    else if (max_re > tol) v.label = Label::unstable;
    else v.label = Label::marginal;
    if (fp.degenerate && v.label == Label::stable) v.label = Label::marginal;
    return v;
}

// ---------------------------------------------------------------------------
// Point classification with branch continuation

enum class PhaseClass { stable, unstable, bistable, indeterminate };

inline const char* to_string(PhaseClass c) {
    switch (c) {
        case PhaseClass::stable: return "stable";
        case PhaseClass::unstable: return "unstable";
        case PhaseClass::bistable: return "bistable";
        case PhaseClass::indeterminate: return "indeterminate";
    }
    return "?";
}

struct PointClassification {
    PhaseClass cls = PhaseClass::indeterminate;
    std::vector<FixedPoint> fixed_points;
    std::vector<StabilityVerdict> verdicts;
    std::size_t selected = 0;  // occupied branch

    const FixedPoint& occupied() const { return fixed_points[selected]; }
    const StabilityVerdict& occupied_verdict() const { return verdicts[selected]; }
};

/// Picks the occupied branch: nearest p to `previous_p` among stable branches
/// (all branches if none is stable); without history, the smallest-|α|² stable
/// branch.
inline std::size_t select_branch(const std::vector<FixedPoint>& fps,
                                 const std::vector<StabilityVerdict>& verdicts,
                                 std::optional<double> previous_p) {
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < fps.size(); ++i) {
        if (verdicts[i].label == Label::stable) pool.push_back(i);
    }
    if (pool.empty()) {
        for (std::size_t i = 0; i < fps.size(); ++i) pool.push_back(i);
    }
    if (!previous_p) return pool.front();
    std::size_t best = pool.front();
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i : pool) {
        const double dist = std::abs(fps[i].p() - *previous_p);
        if (dist < best_dist) {
            best_dist = dist;
            best = i;
        }
    }
    return best;
}

/// stable: exactly one stable branch; bistable: two or more; unstable: none.
inline PointClassification classify_point(const model::Rates& r, const Drive& d,
                                          std::optional<double> previous_p = std::nullopt) {
    PointClassification pc;
    pc.fixed_points = fixed_points(r, d);
    std::size_t n_stable = 0;
    bool indeterminate = false;
    for (const auto& fp : pc.fixed_points) {
        pc.verdicts.push_back(verdict(fp, r, d));
        if (pc.verdicts.back().label == Label::stable) ++n_stable;
        if (pc.verdicts.back().label == Label::indeterminate) indeterminate = true;
    }
    pc.selected = select_branch(pc.fixed_points, pc.verdicts, previous_p);
    if (n_stable >= 2) pc.cls = PhaseClass::bistable;
    else if (n_stable == 1) pc.cls = PhaseClass::stable;
    else if (indeterminate) pc.cls = PhaseClass::indeterminate;
    else pc.cls = PhaseClass::unstable;
    return pc;
}

inline PointClassification classify_point(const model::DeviceParams& params,
                                          const model::PumpDrive& pump,
                                          std::optional<double> previous_p = std::nullopt) {
    const model::Rates r = params.rates();
    const Drive d{units::to_angular(pump.detuning_hz), pump.drive_amplitude(r)};
    return classify_point(r, d, previous_p);
}

// ---------------------------------------------------------------------------
// Phase map

/// Inclusive arithmetic grid start, start+step, ..., up to stop.
inline std::vector<double> grid_values(double start, double stop, double step) {
    if (!(step > 0.0) || !std::isfinite(start) || !std::isfinite(stop) || stop < start) {
        throw InvalidArgument("grid", "need finite start <= stop and step > 0");
    }
    const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = start + static_cast<double>(i) * step;
    return v;
}

struct GridSpec {
    double detuning_start_hz = -7.5e6;
    double detuning_stop_hz = -4.5e6;
    double detuning_step_hz = 300e3;
    double power_start_dbm = -40.0;
    double power_stop_dbm = -10.0;
    double power_step_dbm = 0.1;
    double attenuation_db = 0.0;  // axis power minus this = power at the cavity

    std::vector<double> detunings() const { return grid_values(detuning_start_hz, detuning_stop_hz, detuning_step_hz); }
    std::vector<double> powers() const { return grid_values(power_start_dbm, power_stop_dbm, power_step_dbm); }
    double power_at_cavity_w(double axis_dbm) const { return units::dbm_to_watts(axis_dbm - attenuation_db); }
};

struct PhaseCell {
    PhaseClass cls = PhaseClass::indeterminate;
    double max_re_lambda = std::numeric_limits<double>::quiet_NaN();  // occupied branch, rad/s
    std::size_t n_branches = 0;
    std::size_t branch = 0;
    double p = 0.0;
    double photons = 0.0;
};

struct PhaseMap {
    std::vector<double> detunings_hz;
    std::vector<double> powers_dbm;
    model::SweepDirection direction = model::SweepDirection::up;
    double attenuation_db = 0.0;
    std::vector<PhaseCell> cells;  // detuning-major

    const PhaseCell& at(std::size_t i_det, std::size_t i_pow) const { return cells[i_det * powers_dbm.size() + i_pow]; }
    PhaseCell& at(std::size_t i_det, std::size_t i_pow) { return cells[i_det * powers_dbm.size() + i_pow]; }
};

/// One detuning column, swept in power along `dir` with branch continuation.
inline std::vector<PhaseCell> scan_column(const model::Rates& r, double detuning_hz,
                                          const std::vector<double>& powers_dbm, double attenuation_db,
                                          model::SweepDirection dir) {
    std::vector<PhaseCell> column(powers_dbm.size());
    std::optional<double> previous_p;
    const std::size_t n = powers_dbm.size();
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = dir == model::SweepDirection::up ? k : n - 1 - k;
        model::PumpDrive pump = model::PumpDrive::from_power(
            detuning_hz, units::dbm_to_watts(powers_dbm[i] - attenuation_db), dir);
        const Drive d{units::to_angular(detuning_hz), pump.drive_amplitude(r)};
        const PointClassification pc = classify_point(r, d, previous_p);
        PhaseCell& cell = column[i];
        cell.cls = pc.cls;
        cell.n_branches = pc.fixed_points.size();
        cell.branch = pc.selected;
        cell.max_re_lambda = pc.occupied_verdict().max_re;
        cell.p = pc.occupied().p();
        cell.photons = pc.occupied().photons();
        previous_p = cell.p;
    }
    return column;
}

inline PhaseMap scan_phase_map(const GridSpec& grid, const model::DeviceParams& params,
                               model::SweepDirection dir, std::size_t workers = 1) {
    params.validate();
    const model::Rates r = params.rates();
    PhaseMap map;
    map.detunings_hz = grid.detunings();
    map.powers_dbm = grid.powers();
    map.direction = dir;
    map.attenuation_db = grid.attenuation_db;
    map.cells.resize(map.detunings_hz.size() * map.powers_dbm.size());
    parallel_for(map.detunings_hz.size(), workers, [&](std::size_t i) {
        auto column = scan_column(r, map.detunings_hz[i], map.powers_dbm, grid.attenuation_db, dir);
        std::copy(column.begin(), column.end(), map.cells.begin() + static_cast<std::ptrdiff_t>(i * map.powers_dbm.size()));
    });
    return map;
}

struct BoundaryPoint {
    double detuning_hz;
    double threshold_dbm;  // NaN when the column never turns unstable
    double threshold_dimensionless;
};

/// Lowest axis power per detuning column whose cell is unstable.
inline std::vector<BoundaryPoint> extract_boundary(const PhaseMap& map, const model::DeviceParams& params) {
    std::vector<BoundaryPoint> out;
    const model::Rates r = params.rates();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < map.detunings_hz.size(); ++i) {
        BoundaryPoint b{map.detunings_hz[i], nan, nan};
        for (std::size_t k = 0; k < map.powers_dbm.size(); ++k) {
            if (map.at(i, k).cls == PhaseClass::unstable) {
                b.threshold_dbm = map.powers_dbm[k];
                const auto pump = model::PumpDrive::from_power(
                    map.detunings_hz[i], units::dbm_to_watts(b.threshold_dbm - map.attenuation_db));
                const double e = pump.drive_amplitude(r);
                const double k2 = 0.25 * r.kappa() * r.kappa();
                b.threshold_dimensionless = model::dimensionless_power(params.coupling0_hz, e * e / k2, params.mech_freq_hz);
                break;
            }
        }
        out.push_back(b);
    }
    return out;
}

}  // namespace optomech::stability
