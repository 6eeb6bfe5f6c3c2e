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
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>

#include "superrad/errors.hpp"
#include "superrad/integrators.hpp"
#include "superrad/liouvillian.hpp"
#include "superrad/symbasis.hpp"

namespace superrad {

/// Density matrix expanded in one sector of the symmetric basis.
struct SymmetricState {
    std::shared_ptr<const SectorBasis> sector;
    Eigen::VectorXcd coeffs;
    double time = 0.0;
};

inline void require_sector_zero(const SectorBasis& sector, const char* who) {
    if (sector.delta_n() != 0) {
        std::ostringstream msg;
        msg << who << ": requires the delta_n = 0 sector, got " << sector.delta_n();
        throw ConfigError(msg.str());
    }
}

/// Identity / (M + 1): the completely mixed state of atoms and cavity.
inline SymmetricState initial_mixed_state(std::shared_ptr<const SectorBasis> sector) {
    require_sector_zero(*sector, "initial_mixed_state");
    SymmetricState s{sector, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sector->size())), 0.0};
    s.coeffs[static_cast<Eigen::Index>(sector->index_of(BasisElement{}).value())] =
        1.0 / (sector->cutoff() + 1.0);
    return s;
}

/// All atoms in |g>, cavity completely mixed. Uses |g><g| = (I - sigma_z) / 2
/// on every site, which expands to c_(0,0,k,0,0) = (-1)^k C(N,k) / (M + 1).
inline SymmetricState initial_ground_state(std::shared_ptr<const SectorBasis> sector) {
    require_sector_zero(*sector, "initial_ground_state");
    SymmetricState s{sector, Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(sector->size())), 0.0};
    const int n = sector->n_atoms();
    for (int k = 0; k <= n; ++k) {
        const double binom =
            std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
        const double sign = (k % 2 == 0) ? 1.0 : -1.0;
        s.coeffs[static_cast<Eigen::Index>(sector->index_of(BasisElement{0, 0, k, 0, 0}).value())] =
            sign * std::round(binom) / (sector->cutoff() + 1.0);
    }
    return s;
}

enum class Integrator { dopri5, krylov };

struct EvolveOptions {
    double reltol = 1e-8;
    double abstol = 1e-10;
    Integrator integrator = Integrator::dopri5;
    int krylov_dim = 30;
    std::size_t max_steps = 50'000'000;
};

/// Stateful propagator for one generator. Works internally with the
/// multinomially rescaled coefficients (see coefficient_scale), where the
/// tolerances are meaningful for every component at once.
class Propagator {
  public:
    Propagator(const Superoperator& l, EvolveOptions opts = {})
        : scale_(coefficient_scale(*l.sector)),
          matrix_(rescale(l.matrix, scale_)),
          opts_(opts),
          sector_(l.sector) {
        if (opts_.integrator == Integrator::krylov) {
            engine_.emplace<KrylovPropagator>(
                matrix_, KrylovOptions{opts_.krylov_dim, opts_.reltol, opts_.abstol, 20});
        } else {
            OdeOptions ode;
            ode.reltol = opts_.reltol;
            ode.abstol = opts_.abstol;
            ode.max_steps = opts_.max_steps;
            engine_.emplace<DormandPrince5<Eigen::VectorXcd>>(
                [this](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
                    dy.noalias() = matrix_ * y;
                },
                ode);
        }
    }

    Propagator(const Propagator&) = delete;
    Propagator& operator=(const Propagator&) = delete;

    /// Raw coefficients to internal coordinates and back.
    Eigen::VectorXcd to_internal(const Eigen::VectorXcd& c) const { return c.cwiseQuotient(scale_.cast<cplx>()); }
    Eigen::VectorXcd to_raw(const Eigen::VectorXcd& y) const { return y.cwiseProduct(scale_.cast<cplx>()); }

    /// Advances internal coordinates y by dt >= 0.
    void advance(Eigen::VectorXcd& y, double dt) {
        if (auto* k = std::get_if<KrylovPropagator>(&engine_)) {
            k->advance(y, dt);
        } else {
            auto& rk = std::get<DormandPrince5<Eigen::VectorXcd>>(engine_);
            rk.integrate(y, 0.0, dt);
        }
    }

    const SparseMatrix& internal_matrix() const noexcept { return matrix_; }
    const Eigen::VectorXd& scale() const noexcept { return scale_; }
    const std::shared_ptr<const SectorBasis>& sector() const noexcept { return sector_; }

  private:
    Eigen::VectorXd scale_;
    SparseMatrix matrix_;
    EvolveOptions opts_;
    std::shared_ptr<const SectorBasis> sector_;
    std::variant<std::monostate, DormandPrince5<Eigen::VectorXcd>, KrylovPropagator> engine_;
};

inline void require_same_sector(const Superoperator& l, const SymmetricState& s) {
    if (!s.sector || s.sector->n_atoms() != l.sector->n_atoms() ||
        s.sector->cutoff() != l.sector->cutoff() || s.sector->delta_n() != l.sector->delta_n() ||
        static_cast<std::size_t>(s.coeffs.size()) != l.dimension())
        throw ConfigError("state does not live in the generator's sector");
}

/// Solution of dc/dt = L c at t_final (absolute time, not before s.time).
inline SymmetricState evolve(const Superoperator& l, const SymmetricState& s, double t_final,
                             const EvolveOptions& opts = {}) {
    require_same_sector(l, s);
    if (t_final < s.time) throw ConfigError("evolve: t_final precedes the state's time");
    Propagator prop(l, opts);
    Eigen::VectorXcd y = prop.to_internal(s.coeffs);
    prop.advance(y, t_final - s.time);
    return SymmetricState{l.sector, prop.to_raw(y), t_final};
}

/// Evolves through an ascending grid of absolute times, calling
/// observer(index, state) at each grid point.
template <class Observer>
void evolve_on_grid(const Superoperator& l, const SymmetricState& s,
                    const std::vector<double>& times, Observer&& observer,
                    const EvolveOptions& opts = {}) {
    require_same_sector(l, s);
    Propagator prop(l, opts);
    Eigen::VectorXcd y = prop.to_internal(s.coeffs);
    double t = s.time;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < t) throw ConfigError("evolve_on_grid: times must be ascending and >= state time");
        prop.advance(y, times[i] - t);
        t = times[i];
        observer(i, SymmetricState{l.sector, prop.to_raw(y), t});
    }
}

enum class SteadyStateMethod { automatic, bordered_lu, long_time };

struct SteadyStateOptions {
    /// Residual bound relative to ||L||_1 ||c|| in internal coordinates.
    double tol = 1e-10;
    SteadyStateMethod method = SteadyStateMethod::automatic;
    /// Long-time fallback: stop once the relative residual is below this.
    double fallback_tol = 1e-9;
    /// Longest integration time for the fallback. Zero picks 1e4 over the
    /// slowest nonzero rate.
    double fallback_t_max = 0.0;
    EvolveOptions evolve{1e-10, 1e-12, Integrator::dopri5, 30, 50'000'000};
};

struct SteadyStateReport {
    SteadyStateMethod method_used = SteadyStateMethod::bordered_lu;
    double residual = 0.0;
    double integration_time = 0.0;
};

namespace detail {

inline double norm1(const SparseMatrix& m) {
    double best = 0.0;
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        double col = 0.0;
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) col += std::abs(it.value());
        best = std::max(best, col);
    }
    return best;
}

inline double relative_residual(const SparseMatrix& m, double mnorm, const Eigen::VectorXcd& y) {
    const double ynorm = y.lpNorm<1>();
    if (ynorm == 0.0 || mnorm == 0.0) return 0.0;
    return (m * y).lpNorm<1>() / (mnorm * ynorm);
}

/// Numerical rank deficit of m from a rank-revealing sparse QR.
inline std::size_t null_dimension_estimate(const SparseMatrix& m, double mnorm) {
    Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
    qr.setPivotThreshold(1e-10 * std::max(mnorm, 1e-300));
    qr.compute(m);
    if (qr.info() != Eigen::Success) return 0;
    return static_cast<std::size_t>(m.cols() - qr.rank());
}

inline double slowest_rate(const ModelParams& p) {
    double r = std::numeric_limits<double>::infinity();
    for (double x : {p.coupling, p.cavity_decay, p.pump, p.spont_emission, p.dephasing})
        if (x > 0.0) r = std::min(r, x);
    return std::isfinite(r) ? r : 1.0;
}

}  // namespace detail

/// Stationary state with t . c = 1.
///
/// The primary route solves the bordered system in which the row of L
/// belonging to the identity element is replaced by the trace functional
/// (that row is redundant because t L = 0). If the solve fails or its
/// residual is too large, the state is obtained by integrating the completely
/// mixed state until it stops changing. Singular systems are diagnosed with
/// a rank-revealing QR and reported as DegenerateSteadyState.
inline SymmetricState steady_state(const Superoperator& l, const TraceFunctional& trace,
                                   const SteadyStateOptions& opts = {},
                                   SteadyStateReport* report = nullptr) {
    require_sector_zero(*l.sector, "steady_state");
    const Eigen::VectorXd scale = coefficient_scale(*l.sector);
    const SparseMatrix m = rescale(l.matrix, scale);
    const double mnorm = detail::norm1(m);
    const auto n = static_cast<Eigen::Index>(l.dimension());
    const Eigen::VectorXd tw = trace.weights.cwiseProduct(scale);
    const auto border_row = static_cast<Eigen::Index>(l.sector->index_of(BasisElement{}).value());

    auto finish = [&](Eigen::VectorXcd y, SteadyStateMethod used, double t_int) {
        const cplx tr = tw.cast<cplx>().dot(y);  // conjugates tw, which is real
        if (std::abs(tr) == 0.0 || !std::isfinite(std::abs(tr)))
            throw SolverError("steady_state: stationary vector has zero trace");
        y /= tr;
        const double res = detail::relative_residual(m, mnorm, y);
        if (report) *report = SteadyStateReport{used, res, t_int};
        return SymmetricState{l.sector, y.cwiseProduct(scale.cast<cplx>()), 0.0};
    };

    bool singular = false;
    if (opts.method != SteadyStateMethod::long_time) {
        std::vector<Triplet> trips;
        trips.reserve(static_cast<std::size_t>(m.nonZeros() + n));
        for (Eigen::Index k = 0; k < m.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(m, k); it; ++it)
                if (it.row() != border_row) trips.emplace_back(it.row(), it.col(), it.value());
        // Scale the border to the size of the other rows for conditioning.
        const double border_scale = mnorm > 0.0 ? mnorm / std::max(tw.cwiseAbs().maxCoeff(), 1e-300) : 1.0;
        for (Eigen::Index j = 0; j < n; ++j)
            if (tw[j] != 0.0) trips.emplace_back(border_row, j, tw[j] * border_scale);
        SparseMatrix a(n, n);
        a.setFromTriplets(trips.begin(), trips.end());
        a.makeCompressed();
        Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() == Eigen::Success) {
            Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(n);
            rhs[border_row] = border_scale;
            Eigen::VectorXcd y = lu.solve(rhs);
            if (lu.info() == Eigen::Success && y.allFinite()) {
                const double res = detail::relative_residual(m, mnorm, y);
                const cplx tr = tw.cast<cplx>().dot(y);
                if (res <= opts.tol && std::abs(tr - 1.0) <= 1e-6)
                    return finish(std::move(y), SteadyStateMethod::bordered_lu, 0.0);
            }
        } else {
            singular = true;
        }
        const std::size_t null_dim = detail::null_dimension_estimate(m, mnorm);
        if (null_dim > 1) {
            std::ostringstream msg;
            msg << "steady_state: generator has an estimated " << null_dim
                << "-dimensional null space; the stationary state is not unique";
            throw DegenerateSteadyState(msg.str(), null_dim);
        }
        if (opts.method == SteadyStateMethod::bordered_lu) {
            throw SolverError(singular ? "steady_state: bordered system is numerically singular"
                                       : "steady_state: bordered solve residual above tolerance");
        }
    }

    // Long-time integration from the completely mixed state, doubling the
    // chunk length until the residual criterion is met.
    const double t_max = opts.fallback_t_max > 0.0 ? opts.fallback_t_max
                                                   : 1e4 / detail::slowest_rate(l.params);
    Propagator prop(l, opts.evolve);
    Eigen::VectorXcd y = prop.to_internal(initial_mixed_state(l.sector).coeffs);
    double t = 0.0;
    double chunk = 1.0 / std::max(mnorm, 1e-300);
    while (true) {
        const double step = std::min(chunk, t_max - t);
        prop.advance(y, step);
        t += step;
        if (detail::relative_residual(m, mnorm, y) <= opts.fallback_tol)
            return finish(std::move(y), SteadyStateMethod::long_time, t);
        if (t >= t_max) break;
        chunk *= 2.0;
    }
    std::ostringstream msg;
    msg << "steady_state: no convergence by long-time integration up to t=" << t_max
        << " (relative residual " << detail::relative_residual(m, mnorm, y) << ")";
    throw SolverError(msg.str());
}

inline SymmetricState steady_state(const Superoperator& l, const SteadyStateOptions& opts = {},
                                   SteadyStateReport* report = nullptr) {
    return steady_state(l, trace_functional(*l.sector), opts, report);
}

}  // namespace superrad
