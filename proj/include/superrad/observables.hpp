// Copyright 2026 The superrad Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "superrad/dynamics.hpp"
#include "superrad/errors.hpp"
#include "superrad/liouvillian.hpp"
#include "superrad/model.hpp"
#include "superrad/opkernels.hpp"
#include "superrad/symbasis.hpp"

namespace superrad {

namespace detail {

/// sum_m c_(np,nm,nz,m,m) P_(m+shift), optionally weighted by m. Elements
/// outside the sector contribute nothing.
inline cplx photon_diagonal_sum(const SymmetricState& s, int np, int nm, int nz,
                                int weight_shift = 0, bool times_m = false) {
    const SectorBasis& b = *s.sector;
    const int big_m = b.cutoff();
    cplx acc = 0.0;
    for (int m = 0; m <= big_m; ++m) {
        const int wm = m + weight_shift;
        if (wm > big_m) continue;
        const auto k = b.index_of(BasisElement{np, nm, nz, m, m});
        if (!k) continue;
        double w = photon_trace_weight(big_m, wm);
        if (times_m) w *= m;
        acc += s.coeffs[static_cast<Eigen::Index>(*k)] * w;
    }
    return acc;
}

inline cplx photon_number_complex(const SymmetricState& s) {
    return photon_diagonal_sum(s, 0, 0, 0, 1) + photon_diagonal_sum(s, 0, 0, 0, 0, true);
}

}  // namespace detail

/// Equal-time expectation values before taking the real part. For a
/// Hermitian state the imaginary parts vanish.
struct EqualTimeExpectations {
    cplx trace;
    cplx sigma_z;
    std::optional<cplx> spin_spin;
    cplx photon_number;
};

inline EqualTimeExpectations equal_time_expectations(const SymmetricState& s) {
    require_sector_zero(*s.sector, "equal_time_expectations");
    const int n = s.sector->n_atoms();
    EqualTimeExpectations out;
    out.trace = detail::photon_diagonal_sum(s, 0, 0, 0);
    out.sigma_z = detail::photon_diagonal_sum(s, 0, 0, 1) / static_cast<double>(n);
    if (n >= 2)
        out.spin_spin = detail::photon_diagonal_sum(s, 1, 1, 0) / (4.0 * n * (n - 1.0));
    out.photon_number = detail::photon_number_complex(s);
    return out;
}

/// <sigma_1^z> of a normalized delta_n = 0 state.
inline double expect_sigma_z(const SymmetricState& s) {
    require_sector_zero(*s.sector, "expect_sigma_z");
    return detail::photon_diagonal_sum(s, 0, 0, 1).real() / s.sector->n_atoms();
}

/// <sigma_1^+ sigma_2^->; needs at least two atoms.
inline double expect_spin_spin(const SymmetricState& s) {
    require_sector_zero(*s.sector, "expect_spin_spin");
    const int n = s.sector->n_atoms();
    if (n < 2) throw ConfigError("expect_spin_spin: needs at least two atoms");
    return detail::photon_diagonal_sum(s, 1, 1, 0).real() / (4.0 * n * (n - 1.0));
}

/// <a^dag a>.
inline double expect_photon_number(const SymmetricState& s) {
    require_sector_zero(*s.sector, "expect_photon_number");
    return detail::photon_number_complex(s).real();
}

/// Samples of a normalized two-time correlation function.
struct CorrelationTrace {
    std::vector<double> times;
    std::vector<cplx> values;
    /// <a^dag a> for g1, <a^dag a>^2 for g2.
    double normalization = 1.0;
};

struct CorrelationOptions {
    EvolveOptions evolve{};
    AssemblyOptions assembly{};
    /// Optional memo of assembled generators, shared across calls.
    LiouvillianCache* cache = nullptr;
};

namespace detail {

inline std::shared_ptr<const Superoperator> generator(const ModelParams& params, int delta_n,
                                                      const CorrelationOptions& opts) {
    if (opts.cache) return opts.cache->get(params, delta_n);
    return std::make_shared<const Superoperator>(build_liouvillian(params, delta_n, opts.assembly));
}

/// Applies a chain of cavity kernels to every element of `s`, returning the
/// image in sector `target`.
inline Eigen::VectorXcd apply_cavity_chain(const SymmetricState& s, const SectorBasis& target,
                                           std::initializer_list<CavityOp> ops) {
    const int n = s.sector->n_atoms();
    const int m = s.sector->cutoff();
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(target.size()));
    for (std::size_t k = 0; k < s.sector->size(); ++k) {
        const cplx c = s.coeffs[static_cast<Eigen::Index>(k)];
        if (c == 0.0) continue;
        WeightedElements cur;
        cur.add((*s.sector)[k], 1.0, n, m);
        for (CavityOp op : ops) {
            WeightedElements next;
            accumulate(next, cur, 1.0, n, m, [&](const BasisElement& e) { return apply_cavity(op, e, m); });
            cur = std::move(next);
        }
        for (const auto& [el, w] : cur) {
            const auto idx = target.index_of(el);
            if (!idx) throw SolverError("cavity kernel left the expected sector");
            out[static_cast<Eigen::Index>(*idx)] += w * c;
        }
    }
    return out;
}

/// Row vector r with Tr[op_chain(rho)] = r . c for rho in `source`, where the
/// kernel chain maps into the delta_n = 0 sector.
inline Eigen::VectorXd trace_after_chain(const SectorBasis& source, std::initializer_list<CavityOp> ops) {
    const int n = source.n_atoms();
    const int m = source.cutoff();
    Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(source.size()));
    for (std::size_t k = 0; k < source.size(); ++k) {
        const auto& e = source[k];
        if (e.n_plus != 0 || e.n_minus != 0 || e.n_z != 0) continue;
        WeightedElements cur;
        cur.add(e, 1.0, n, m);
        for (CavityOp op : ops) {
            WeightedElements next;
            accumulate(next, cur, 1.0, n, m, [&](const BasisElement& x) { return apply_cavity(op, x, m); });
            cur = std::move(next);
        }
        double acc = 0.0;
        for (const auto& [el, w] : cur)
            if (el.n_adag == el.n_a) acc += w * photon_trace_weight(m, el.n_a);
        r[static_cast<Eigen::Index>(k)] = acc;
    }
    return r;
}

inline void check_grid(const std::vector<double>& grid) {
    for (std::size_t i = 0; i < grid.size(); ++i)
        if (!(grid[i] >= 0.0) || (i > 0 && grid[i] < grid[i - 1]))
            throw ConfigError("correlation grid must be ascending and non-negative");
}

inline std::vector<cplx> regression(const Superoperator& l, const Eigen::VectorXcd& start,
                                    const Eigen::VectorXd& readout, const std::vector<double>& grid,
                                    const EvolveOptions& opts) {
    Propagator prop(l, opts);
    Eigen::VectorXcd y = prop.to_internal(start);
    const Eigen::VectorXcd r = readout.cwiseProduct(prop.scale()).cast<cplx>();
    std::vector<cplx> out;
    out.reserve(grid.size());
    double t = 0.0;
    for (double target : grid) {
        prop.advance(y, target - t);
        t = target;
        out.push_back(r.transpose() * y);
    }
    return out;
}

}  // namespace detail

/// g1(t) = <a^dag(t) a(0)> / <a^dag a> in the stationary state.
///
/// a rho_ss lives in the delta_n = -1 sector (an annihilator lowers the
/// charge n_plus + n_adag - n_minus - n_a). It is propagated there, and
/// Tr[a^dag rho'(t)] is read out by applying the a^dag-left kernel followed
/// by the trace.
inline CorrelationTrace g1_trace(const ModelParams& params, const SymmetricState& steady,
                                 const std::vector<double>& grid, const CorrelationOptions& opts = {}) {
    require_sector_zero(*steady.sector, "g1_trace");
    detail::check_grid(grid);
    const double n = expect_photon_number(steady);
    if (!(n > 0.0)) throw NormalizationError("g1_trace: stationary photon number is zero");
    const auto l = detail::generator(params, -1, opts);
    const Eigen::VectorXcd start = detail::apply_cavity_chain(steady, *l->sector, {CavityOp::a_left});
    const Eigen::VectorXd readout = detail::trace_after_chain(*l->sector, {CavityOp::adag_left});
    CorrelationTrace out{grid, detail::regression(*l, start, readout, grid, opts.evolve), n};
    for (auto& v : out.values) v /= n;
    return out;
}

/// g2(t) = <a^dag(0) a^dag(t) a(t) a(0)> / <a^dag a>^2 in the stationary state.
inline CorrelationTrace g2_trace(const ModelParams& params, const SymmetricState& steady,
                                 const std::vector<double>& grid, const CorrelationOptions& opts = {}) {
    require_sector_zero(*steady.sector, "g2_trace");
    detail::check_grid(grid);
    const double n = expect_photon_number(steady);
    if (!(n > 0.0)) throw NormalizationError("g2_trace: stationary photon number is zero");
    const auto l = detail::generator(params, 0, opts);
    const Eigen::VectorXcd start =
        detail::apply_cavity_chain(steady, *l->sector, {CavityOp::a_left, CavityOp::adag_right});
    const Eigen::VectorXd readout =
        detail::trace_after_chain(*l->sector, {CavityOp::a_left, CavityOp::adag_left});
    CorrelationTrace out{grid, detail::regression(*l, start, readout, grid, opts.evolve), n * n};
    for (auto& v : out.values) v /= n * n;
    return out;
}

struct HybridGridOptions {
    /// End of the uniform part, which resolves oscillations on the cavity scale.
    double dense_end = 20.0;
    std::size_t dense_points = 1001;
    /// End of the geometric part, which follows the slow tail.
    double tail_end = 2000.0;
    std::size_t tail_points = 200;
};

/// Uniform samples on [0, dense_end] followed by geometrically spaced samples
/// up to tail_end.
inline std::vector<double> hybrid_time_grid(const HybridGridOptions& o) {
    if (!(o.dense_end > 0.0) || o.dense_points < 2)
        throw ConfigError("hybrid_time_grid: need a positive dense range with at least two points");
    std::vector<double> t;
    t.reserve(o.dense_points + o.tail_points);
    for (std::size_t i = 0; i < o.dense_points; ++i)
        t.push_back(o.dense_end * static_cast<double>(i) / static_cast<double>(o.dense_points - 1));
    if (o.tail_end > o.dense_end && o.tail_points > 0) {
        const double ratio = std::pow(o.tail_end / o.dense_end, 1.0 / static_cast<double>(o.tail_points));
        for (std::size_t i = 1; i <= o.tail_points; ++i)
            t.push_back(i == o.tail_points ? o.tail_end : o.dense_end * std::pow(ratio, static_cast<double>(i)));
    }
    return t;
}

/// Omega_eff = N g sqrt(<sigma_1^+ sigma_2^->).
inline double effective_rabi(const ModelParams& params, double spin_spin) {
    if (!(spin_spin >= 0.0)) throw ConfigError("effective_rabi: spin_spin must be non-negative");
    return params.n_atoms * params.coupling * std::sqrt(spin_spin);
}

struct LinewidthFit {
    /// Rate such that |g1| ~ amplitude * exp(-gamma t / 2).
    double gamma = 0.0;
    double amplitude = 0.0;
    double gamma_stderr = 0.0;
    /// Root-mean-square residual of log|g1| over the window.
    double rms_residual = 0.0;
    std::size_t points = 0;
};

struct FitOptions {
    double max_rms_residual = 1e-2;
    /// Relative slack allowed when checking that |g1| decreases.
    double monotonic_slack = 1e-9;
};

/// Least-squares fit of log|g1| = log A - (gamma/2) t over [t_min, t_max].
inline LinewidthFit fit_linewidth(const CorrelationTrace& trace, double t_min, double t_max,
                                  const FitOptions& opts = {}) {
    std::vector<double> ts, ys;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
        const double t = trace.times[i];
        if (t < t_min || t > t_max) continue;
        const double mag = std::abs(trace.values[i]);
        if (!(mag > 0.0)) throw FitError("fit_linewidth: |g1| vanishes inside the window");
        if (mag > prev * (1.0 + opts.monotonic_slack))
            throw FitError("fit_linewidth: |g1| is not monotonically decreasing in the window");
        prev = mag;
        ts.push_back(t);
        ys.push_back(std::log(mag));
    }
    const auto n = static_cast<Eigen::Index>(ts.size());
    if (n < 3) throw FitError("fit_linewidth: fewer than three samples in the window");
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        x(i, 1) = ts[static_cast<std::size_t>(i)];
        y[i] = ys[static_cast<std::size_t>(i)];
    }
    const Eigen::VectorXd beta = x.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd r = y - x * beta;
    const double rms = std::sqrt(r.squaredNorm() / static_cast<double>(n));
    const double sigma2 = r.squaredNorm() / std::max<double>(1.0, static_cast<double>(n - 2));
    const Eigen::Matrix2d cov = sigma2 * (x.transpose() * x).inverse();
    LinewidthFit fit{-2.0 * beta[1], std::exp(beta[0]), 2.0 * std::sqrt(cov(1, 1)), rms,
                     static_cast<std::size_t>(n)};
    if (!(rms <= opts.max_rms_residual)) {
        std::ostringstream msg;
        msg << "fit_linewidth: poor exponential fit (rms residual " << rms << " in log|g1|)";
        throw FitError(msg.str());
    }
    return fit;
}

struct TailModel {
    double gamma = 0.0;
    double amplitude = 0.0;
};

struct Spectrum {
    std::vector<double> freqs;
    std::vector<double> values;
    /// Length of the sampled trace.
    double window = 0.0;
    std::optional<TailModel> tail;
    /// Trapezoidal area of the samples over the frequency grid.
    double area = 0.0;
};

namespace detail {

/// Exact integral of the piecewise-linear interpolant of f times e^{i w t}.
inline cplx filon_transform(const std::vector<double>& t, const std::vector<cplx>& f, double w) {
    const cplx i(0.0, 1.0);
    cplx acc = 0.0;
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
        const double h = t[k + 1] - t[k];
        if (h <= 0.0) continue;
        const double th = w * h;
        cplx e0, e1;
        if (std::abs(th) < 1e-3) {
            const double t2 = th * th;
            e0 = cplx(1.0 - t2 / 6.0, th / 2.0 - th * t2 / 24.0);
            e1 = cplx(0.5 - t2 / 8.0, th / 3.0 - th * t2 / 30.0);
        } else {
            const cplx ex = std::exp(i * th);
            e0 = (ex - 1.0) / (i * th);
            e1 = ex / (i * th) + (ex - 1.0) / (th * th);
        }
        acc += std::exp(i * (w * t[k])) * h * (f[k] * e0 + (f[k + 1] - f[k]) * e1);
    }
    return acc;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
    double a = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) a += 0.5 * (x[k + 1] - x[k]) * (y[k] + y[k + 1]);
    return a;
}

}  // namespace detail

/// S(w) = (1/2 pi) int g1(t) e^{i w t} dt over the whole real line, using
/// g1(-t) = conj g1(t), so that S(w) = (1/pi) Re int_0^inf g1(t) e^{i w t} dt.
///
/// With a tail model A e^{-gamma t/2}, its Lorentzian is added analytically
/// and only the remainder is transformed numerically.
inline Spectrum power_spectrum(const CorrelationTrace& trace, const std::vector<double>& freqs,
                               const std::optional<TailModel>& tail = std::nullopt,
                               double decay_threshold = 1e-3) {
    if (trace.times.size() < 2 || trace.times.size() != trace.values.size())
        throw ConfigError("power_spectrum: trace needs at least two samples");
    std::vector<cplx> f = trace.values;
    if (tail) {
        if (!(tail->gamma > 0.0)) throw ConfigError("power_spectrum: tail rate must be positive");
        for (std::size_t k = 0; k < f.size(); ++k)
            f[k] -= tail->amplitude * std::exp(-0.5 * tail->gamma * trace.times[k]);
    }
    if (std::abs(f.back()) > decay_threshold) {
        std::ostringstream msg;
        msg << "power_spectrum: " << (tail ? "residual after the tail model" : "g1")
            << " has not decayed below " << decay_threshold << " by t=" << trace.times.back()
            << " (|value| = " << std::abs(f.back()) << ")";
        throw ConfigError(msg.str());
    }
    Spectrum s;
    s.freqs = freqs;
    s.window = trace.times.back() - trace.times.front();
    s.tail = tail;
    s.values.reserve(freqs.size());
    for (double w : freqs) {
        double v = detail::filon_transform(trace.times, f, w).real() / M_PI;
        if (tail) {
            const double hw = 0.5 * tail->gamma;
            v += tail->amplitude * hw / (M_PI * (hw * hw + w * w));
        }
        s.values.push_back(v);
    }
    s.area = detail::trapezoid(s.freqs, s.values);
    return s;
}

/// Same S(w) from the resolvent: int_0^inf e^{(L + i w) t} dt = -(L + i w)^{-1},
/// one sparse factorization per frequency. Independent of any time grid.
inline std::vector<double> resolvent_spectrum(const ModelParams& params, const SymmetricState& steady,
                                              const std::vector<double>& freqs,
                                              const CorrelationOptions& opts = {}) {
    require_sector_zero(*steady.sector, "resolvent_spectrum");
    const double n = expect_photon_number(steady);
    if (!(n > 0.0)) throw NormalizationError("resolvent_spectrum: stationary photon number is zero");
    const auto l = detail::generator(params, -1, opts);
    const Eigen::VectorXd scale = coefficient_scale(*l->sector);
    const SparseMatrix m = rescale(l->matrix, scale);
    const Eigen::VectorXcd start =
        detail::apply_cavity_chain(steady, *l->sector, {CavityOp::a_left}).cwiseQuotient(scale.cast<cplx>());
    const Eigen::VectorXcd r =
        detail::trace_after_chain(*l->sector, {CavityOp::adag_left}).cwiseProduct(scale).cast<cplx>();
    SparseMatrix id(m.rows(), m.cols());
    id.setIdentity();
    std::vector<double> out;
    out.reserve(freqs.size());
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    bool analyzed = false;
    for (double w : freqs) {
        SparseMatrix a = m + cplx(0.0, w) * id;
        a.makeCompressed();
        if (!analyzed) {
            lu.analyzePattern(a);
            analyzed = true;
        }
        lu.factorize(a);
        if (lu.info() != Eigen::Success) throw SolverError("resolvent_spectrum: singular resolvent");
        const Eigen::VectorXcd x = lu.solve(start);
        out.push_back(-(r.transpose() * x).value().real() / (M_PI * n));
    }
    return out;
}

/// Local maximum of a sampled spectrum.
struct SpectralPeak {
    double center = 0.0;
    double height = 0.0;
    /// Distance from the center to the linearly interpolated half-maximum on
    /// the side facing away from zero frequency (the positive side for a peak
    /// at zero). NaN when the samples end first.
    double outer_half_width = std::numeric_limits<double>::quiet_NaN();
};

/// Strict interior local maxima, ordered by frequency.
inline std::vector<SpectralPeak> spectral_peaks(const std::vector<double>& freqs,
                                                const std::vector<double>& values) {
    if (freqs.size() != values.size()) throw ConfigError("spectral_peaks: size mismatch");
    std::vector<SpectralPeak> peaks;
    const std::size_t n = freqs.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (!(values[i] > values[i - 1] && values[i] > values[i + 1])) continue;
        SpectralPeak pk{freqs[i], values[i]};
        const double half = 0.5 * values[i];
        const bool rightward = freqs[i] >= 0.0;
        for (std::size_t j = i; rightward ? j + 1 < n : j > 0; rightward ? ++j : --j) {
            const std::size_t k = rightward ? j + 1 : j - 1;
            if (values[k] <= half) {
                const double frac = (values[j] - half) / (values[j] - values[k]);
                pk.outer_half_width = std::abs(freqs[j] + frac * (freqs[k] - freqs[j]) - freqs[i]);
                break;
            }
        }
        peaks.push_back(pk);
    }
    return peaks;
}

}  // namespace superrad
