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
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "superrad/errors.hpp"
#include "superrad/model.hpp"
#include "superrad/observables.hpp"

namespace superrad {

/// Second-order cumulant variables.
struct CumulantState {
    double sz = -1.0;    // <sigma_1^z>
    double spsm = 0.0;   // <sigma_1^+ sigma_2^->
    double nb = 0.0;     // <b^dag b>
    cplx bdsm = 0.0;     // <b^dag sigma_1^->

    using Vector = Eigen::Matrix<double, 5, 1>;

    Vector to_vector() const {
        Vector v;
        v << sz, spsm, nb, bdsm.real(), bdsm.imag();
        return v;
    }
    static CumulantState from_vector(const Vector& v) { return {v[0], v[1], v[2], cplx(v[3], v[4])}; }
};

/// Blockaded: b^2 = 0, so [b, b^dag] = 1 - 2 b^dag b. Harmonic: [b, b^dag] = 1.
enum class CavityModel { blockaded, harmonic };

namespace detail {

inline double commutator_factor(CavityModel model, double nb) {
    return model == CavityModel::blockaded ? 1.0 - 2.0 * nb : 1.0;
}

}  // namespace detail

/// Right-hand side of the closed equations. With X = <b^dag sigma_1^-> and
/// <sigma_1^+ b> = conj(X), X - conj(X) = 2i Im X, so every real equation is
/// driven by Im X alone.
inline CumulantState cumulant_rhs(const CumulantState& s, const ModelParams& p,
                                  CavityModel model = CavityModel::blockaded) {
    const double n = p.n_atoms, g = p.coupling, k = p.cavity_decay, w = p.pump,
                 gm = p.spont_emission, gd = p.dephasing;
    const cplx i(0.0, 1.0);
    const cplx diff = s.bdsm - std::conj(s.bdsm);
    CumulantState d;
    d.sz = (i * g * diff).real() - (w + gm) * s.sz + (w - gm);
    d.spsm = (g * s.sz / (2.0 * i) * diff).real() - (w + gm + gd) * s.spsm;
    d.nb = (n * g / (2.0 * i) * diff).real() - k * s.nb;
    const double bracket =
        ((n - 1.0) * s.spsm + 0.5 * (s.sz + 1.0)) * detail::commutator_factor(model, s.nb) + s.nb * s.sz;
    d.bdsm = 0.5 * i * g * bracket - 0.5 * (w + k + gm + gd) * s.bdsm;
    return d;
}

/// d(rhs)/d(sz, spsm, nb, Re X, Im X).
inline Eigen::Matrix<double, 5, 5> cumulant_jacobian(const CumulantState& s, const ModelParams& p,
                                                     CavityModel model = CavityModel::blockaded) {
    const double n = p.n_atoms, g = p.coupling, k = p.cavity_decay, w = p.pump,
                 gm = p.spont_emission, gd = p.dephasing;
    const double xi = s.bdsm.imag();
    const double f = detail::commutator_factor(model, s.nb);
    const double df = model == CavityModel::blockaded ? -2.0 : 0.0;
    const double a = (n - 1.0) * s.spsm + 0.5 * (s.sz + 1.0);
    const double relax = 0.5 * (w + k + gm + gd);
    Eigen::Matrix<double, 5, 5> j = Eigen::Matrix<double, 5, 5>::Zero();
    j(0, 0) = -(w + gm);
    j(0, 4) = -2.0 * g;
    j(1, 0) = g * xi;
    j(1, 1) = -(w + gm + gd);
    j(1, 4) = g * s.sz;
    j(2, 2) = -k;
    j(2, 4) = n * g;
    j(3, 3) = -relax;
    j(4, 0) = 0.5 * g * (0.5 * f + s.nb);
    j(4, 1) = 0.5 * g * (n - 1.0) * f;
    j(4, 2) = 0.5 * g * (a * df + s.sz);
    j(4, 4) = -relax;
    return j;
}

struct CumulantSteadyOptions {
    /// Bound on max |rhs| divided by the largest rate in the problem.
    double tol = 1e-12;
    /// Largest relative change of any variable in one integration step.
    double max_change = 0.05;
    std::size_t max_integration_steps = 200'000;
    int max_newton = 60;
    CumulantState initial{};
};

struct CumulantSteadyResult {
    CumulantState state;
    double residual = 0.0;
    /// Other fixed points found from auxiliary seeds, e.g. the non-lasing root.
    std::vector<CumulantState> other_roots;
};

namespace detail {

inline double rate_scale(const ModelParams& p) {
    return std::max({p.cavity_decay, p.pump, p.spont_emission, p.dephasing,
                     p.n_atoms * p.coupling, 1e-300});
}

inline double scaled_residual(const CumulantState& s, const ModelParams& p, CavityModel model) {
    return cumulant_rhs(s, p, model).to_vector().cwiseAbs().maxCoeff() / rate_scale(p);
}

/// Newton iteration with backtracking on the residual; returns false when it stalls.
inline bool newton_polish(CumulantState& s, const ModelParams& p, CavityModel model, double tol,
                          int max_iter) {
    auto y = s.to_vector();
    double res = scaled_residual(s, p, model);
    for (int it = 0; it < max_iter && res > tol; ++it) {
        const auto f = cumulant_rhs(CumulantState::from_vector(y), p, model).to_vector();
        const auto jac = cumulant_jacobian(CumulantState::from_vector(y), p, model);
        const CumulantState::Vector step = jac.fullPivLu().solve(-f);
        if (!step.allFinite()) return false;
        double lambda = 1.0;
        bool accepted = false;
        for (int b = 0; b < 30; ++b, lambda *= 0.5) {
            const CumulantState::Vector trial = y + lambda * step;
            const double r = scaled_residual(CumulantState::from_vector(trial), p, model);
            if (r < res || r <= tol) {
                y = trial;
                res = r;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
    }
    s = CumulantState::from_vector(y);
    return res <= tol;
}

inline bool same_root(const CumulantState& a, const CumulantState& b) {
    const CumulantState::Vector d = (a.to_vector() - b.to_vector()).cwiseAbs();
    const CumulantState::Vector m = a.to_vector().cwiseAbs().cwiseMax(b.to_vector().cwiseAbs()).cwiseMax(1e-12);
    return (d.array() / m.array()).maxCoeff() < 1e-4;
}

}  // namespace detail

/// True when every Jacobian eigenvalue at `s` has a negative real part.
inline bool is_linearly_stable(const CumulantState& s, const ModelParams& p,
                               CavityModel model = CavityModel::blockaded) {
    return cumulant_jacobian(s, p, model).eigenvalues().real().maxCoeff() < 0.0;
}

/// Fixed point of the cumulant equations on the branch reached from the
/// weakly excited state (all atoms down, empty cavity).
///
/// The trajectory is followed with linearly implicit Euler steps whose size
/// is limited by the change they produce, so stiffness from kappa >> w does
/// not force tiny steps. Once the residual stops falling, Newton finishes.
inline CumulantSteadyResult cumulant_steady(const ModelParams& p,
                                            CavityModel model = CavityModel::blockaded,
                                            const CumulantSteadyOptions& opts = {}) {
    if (!(p.pump + p.spont_emission > 0.0))
        throw ConfigError("cumulant_steady: requires w + gamma > 0");
    if (p.n_atoms < 1 || !std::isfinite(p.coupling)) throw ConfigError("cumulant_steady: invalid parameters");
    using Vec = CumulantState::Vector;
    Vec y = opts.initial.to_vector();
    const Vec floor_scale = Vec::Constant(1e-3);
    // Slowest rate in the problem; once steps are much longer than its
    // inverse, a linearly implicit step is a Newton step on the fixed point.
    const double slow = std::max(std::min({p.pump + p.spont_emission,
                                           p.cavity_decay > 0.0 ? p.cavity_decay : 1e300,
                                           p.coupling * p.coupling / std::max(p.cavity_decay, 1e-300)}),
                                 1e-300);
    double dt = 1e-3 / detail::rate_scale(p);
    CumulantState found;
    bool converged = false;
    for (std::size_t step = 0; step < opts.max_integration_steps; ++step) {
        const CumulantState s = CumulantState::from_vector(y);
        const Vec f = cumulant_rhs(s, p, model).to_vector();
        const auto jac = cumulant_jacobian(s, p, model);
        const Eigen::Matrix<double, 5, 5> lhs = Eigen::Matrix<double, 5, 5>::Identity() - dt * jac;
        const Vec dy = lhs.partialPivLu().solve(dt * f);
        const double change = (dy.array().abs() / y.array().abs().max(floor_scale.array())).maxCoeff();
        if (!std::isfinite(change)) throw SolverError("cumulant_steady: integration diverged");
        if (change > opts.max_change) {
            dt *= 0.5;
            continue;
        }
        y += dy;
        if (dt * slow > 1e3 && change < 1e-9) {
            found = CumulantState::from_vector(y);
            converged = detail::newton_polish(found, p, model, opts.tol, opts.max_newton);
            break;
        }
        if (change < 0.25 * opts.max_change) dt *= 2.0;
    }
    if (!converged) {
        std::ostringstream msg;
        msg << "cumulant_steady: no convergence (scaled residual "
            << detail::scaled_residual(CumulantState::from_vector(y), p, model) << ")";
        throw SolverError(msg.str());
    }
    CumulantSteadyResult out{found, detail::scaled_residual(found, p, model), {}};
    // Auxiliary seeds near full inversion and in the lasing region.
    const double wg = p.pump + p.spont_emission;
    const std::array<CumulantState, 3> seeds{
        CumulantState{(p.pump - p.spont_emission) / wg, 0.0, 0.0, 0.0},
        CumulantState{1.0, 0.25, 0.5, cplx(0.0, 0.5)},
        CumulantState{0.0, 0.125, 0.25, cplx(0.0, -0.25)}};
    for (auto seed : seeds) {
        if (!detail::newton_polish(seed, p, model, opts.tol, opts.max_newton)) continue;
        if (detail::same_root(seed, out.state)) continue;
        bool dup = false;
        for (const auto& r : out.other_roots) dup = dup || detail::same_root(seed, r);
        if (!dup) out.other_roots.push_back(seed);
    }
    return out;
}

/// <b^dag b> = (1 + w~ - sqrt((1 - w~)^2 + 4 w~^2 k~^2)) / 4 in the large-N limit.
inline double closed_form_photon(double kappa_tilde, double w_tilde) {
    return 0.25 * (1.0 + w_tilde -
                   std::sqrt((1.0 - w_tilde) * (1.0 - w_tilde) + 4.0 * w_tilde * w_tilde * kappa_tilde * kappa_tilde));
}

inline double closed_form_photon(const ModelParams& p) {
    const auto d = derive_scales(p);
    return closed_form_photon(d.kappa_tilde, d.w_tilde);
}

/// Gamma = C gamma sqrt((1 - w~)^2 + 4 w~^2 k~^2).
inline double closed_form_linewidth(double cooperativity_gamma, double kappa_tilde, double w_tilde) {
    return cooperativity_gamma *
           std::sqrt((1.0 - w_tilde) * (1.0 - w_tilde) + 4.0 * w_tilde * w_tilde * kappa_tilde * kappa_tilde);
}

inline double closed_form_linewidth(const ModelParams& p) {
    const auto d = derive_scales(p);
    return closed_form_linewidth(d.cooperativity_gamma, d.kappa_tilde, d.w_tilde);
}

/// Linear system for (<b^dag(t) b(0)>, <sigma_1^+(t) b(0)>) under the
/// regression theorem with cumulant factorization.
inline Eigen::Matrix2cd regression_matrix(const ModelParams& p, const CumulantState& s,
                                          CavityModel model = CavityModel::blockaded) {
    const cplx i(0.0, 1.0);
    const double n = p.n_atoms, g = p.coupling;
    Eigen::Matrix2cd a;
    a << -0.5 * p.cavity_decay, 0.5 * i * n * g * detail::commutator_factor(model, s.nb),
        -0.5 * i * g * s.sz, -0.5 * (p.pump + p.spont_emission + p.dephasing);
    return a;
}

/// exp(A t) for a 2x2 matrix, written as e^{h t} [cosh(q t) I + sinh(q t)/q (A - h I)]
/// with h = tr/2 and q^2 = h^2 - det. The exponentials e^{(h +- q) t} are
/// formed separately so long times do not overflow; for |q t| small the
/// series is used, which also covers a repeated (defective) eigenvalue.
inline Eigen::Matrix2cd expm2(const Eigen::Matrix2cd& a, double t) {
    const cplx h = 0.5 * a.trace();
    const cplx q = std::sqrt(h * h - a.determinant());
    const cplx qt = q * t;
    cplx ch, sh_over_q;
    if (std::abs(qt) < 1e-4) {
        const cplx e = std::exp(h * t);
        const cplx q2t2 = qt * qt;
        ch = e * (1.0 + q2t2 / 2.0 + q2t2 * q2t2 / 24.0);
        sh_over_q = e * t * (1.0 + q2t2 / 6.0 + q2t2 * q2t2 / 120.0);
    } else {
        const cplx ep = std::exp((h + q) * t);
        const cplx em = std::exp((h - q) * t);
        ch = 0.5 * (ep + em);
        sh_over_q = (ep - em) / (2.0 * q);
    }
    const Eigen::Matrix2cd shifted = a - h * Eigen::Matrix2cd::Identity();
    return ch * Eigen::Matrix2cd::Identity() + sh_over_q * shifted;
}

struct RegressionModes {
    /// Eigenvalue with the smaller decay rate and its weight in g1.
    cplx slow_eigenvalue;
    cplx slow_amplitude;
    cplx fast_eigenvalue;
    cplx fast_amplitude;
    /// -2 Re(slow eigenvalue), the linewidth of the narrow peak.
    double linewidth = 0.0;
    bool degenerate = false;
};

/// Modal decomposition g1(t) = A_s e^{l_s t} + A_f e^{l_f t}.
inline RegressionModes regression_modes(const ModelParams& p, const CumulantState& s,
                                        CavityModel model = CavityModel::blockaded) {
    if (!(s.nb > 0.0)) throw NormalizationError("regression: steady state has no photons");
    const auto a = regression_matrix(p, s, model);
    const cplx half_tr = 0.5 * a.trace();
    const cplx q = std::sqrt(half_tr * half_tr - a.determinant());
    RegressionModes m;
    cplx l1 = half_tr + q, l2 = half_tr - q;
    if (l1.real() < l2.real()) std::swap(l1, l2);
    m.slow_eigenvalue = l1;
    m.fast_eigenvalue = l2;
    m.linewidth = -2.0 * l1.real();
    const Eigen::Vector2cd v0(1.0, std::conj(s.bdsm) / s.nb);
    if (std::abs(q) <= 1e-12 * std::max(std::abs(half_tr), 1e-300)) {
        m.degenerate = true;
        m.slow_amplitude = 1.0;
        m.fast_amplitude = 0.0;
        return m;
    }
    // Component 0 of exp(A t) v0 = sum_k e^{l_k t} [P_k v0]_0 with spectral
    // projectors P_1 = (A - l_2)/(l_1 - l_2), P_2 = (A - l_1)/(l_2 - l_1).
    const Eigen::Vector2cd av = a * v0;
    m.slow_amplitude = (av[0] - l2 * v0[0]) / (l1 - l2);
    m.fast_amplitude = (av[0] - l1 * v0[0]) / (l2 - l1);
    return m;
}

/// Normalized <b^dag(t) b(0)> / <b^dag b> from the 2x2 regression system.
inline CorrelationTrace regression_g1(const ModelParams& p, const CumulantState& s,
                                      const std::vector<double>& grid,
                                      CavityModel model = CavityModel::blockaded) {
    if (!(s.nb > 0.0)) throw NormalizationError("regression_g1: steady state has no photons");
    const auto a = regression_matrix(p, s, model);
    const Eigen::Vector2cd v0(1.0, std::conj(s.bdsm) / s.nb);
    CorrelationTrace out{grid, {}, s.nb};
    out.values.reserve(grid.size());
    for (double t : grid) out.values.push_back((expm2(a, t) * v0)[0]);
    return out;
}

/// <1 - 2 b^dag b> e^{-Gamma t/2} + <2 b^dag b> e^{-kappa t/2}.
inline CorrelationTrace two_exponential_g1(double nb, double linewidth, double kappa,
                                           const std::vector<double>& grid) {
    CorrelationTrace out{grid, {}, nb};
    out.values.reserve(grid.size());
    for (double t : grid)
        out.values.push_back((1.0 - 2.0 * nb) * std::exp(-0.5 * linewidth * t) +
                             2.0 * nb * std::exp(-0.5 * kappa * t));
    return out;
}

/// Location of the maximum of <b^dag b> over the pump rate in [w_lo, w_hi]:
/// a coarse logarithmic scan followed by golden-section refinement.
struct PhotonPeak {
    double pump = 0.0;
    double photon_number = 0.0;
};

inline PhotonPeak find_photon_peak(ModelParams p, CavityModel model, double w_lo, double w_hi,
                                   std::size_t coarse_points = 61, double rel_tol = 1e-6) {
    if (!(w_lo > 0.0) || !(w_hi > w_lo)) throw ConfigError("find_photon_peak: need 0 < w_lo < w_hi");
    auto nb_at = [&](double w) {
        p.pump = w;
        return cumulant_steady(p, model).state.nb;
    };
    std::vector<double> ws(coarse_points), nbs(coarse_points);
    std::size_t best = 0;
    for (std::size_t k = 0; k < coarse_points; ++k) {
        ws[k] = w_lo * std::pow(w_hi / w_lo, static_cast<double>(k) / (coarse_points - 1));
        nbs[k] = nb_at(ws[k]);
        if (nbs[k] > nbs[best]) best = k;
    }
    double lo = ws[best == 0 ? 0 : best - 1];
    double hi = ws[std::min(best + 1, coarse_points - 1)];
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    double f1 = nb_at(x1), f2 = nb_at(x2);
    while (hi - lo > rel_tol * hi) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = nb_at(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = nb_at(x1);
        }
    }
    const double w = 0.5 * (lo + hi);
    return {w, nb_at(w)};
}

}  // namespace superrad
