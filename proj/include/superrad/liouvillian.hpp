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
#include <cstddef>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "superrad/model.hpp"
#include "superrad/opkernels.hpp"
#include "superrad/symbasis.hpp"

namespace superrad {

using cplx = std::complex<double>;
using SparseMatrix = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

/// Individual terms of the master equation, each restricted to one sector.
struct LiouvillianParts {
    SparseMatrix hamiltonian;
    SparseMatrix cavity_decay;
    SparseMatrix pump;
    SparseMatrix spont;
    SparseMatrix deph;
};

struct AssemblyOptions {
    /// Merged entries with smaller magnitude are dropped.
    double drop_tolerance = 1e-15;
    bool keep_parts = false;
    unsigned threads = 1;
};

/// Sector-restricted generator of d c / dt = L c.
struct Superoperator {
    std::shared_ptr<const SectorBasis> sector;
    ModelParams params;
    SparseMatrix matrix;
    std::optional<LiouvillianParts> parts;

    std::size_t dimension() const noexcept { return sector->size(); }
};

/// Multinomial N! / (n_plus! n_minus! n_z! n_identity!) of every element.
///
/// Raw coefficients grow like these factors (for a product state with
/// <sigma_z> = s, c_(0,0,k,.,.) = C(N,k) s^k), so solvers work with c / scale,
/// whose entries are O(1). Finite for N up to roughly 500.
inline Eigen::VectorXd coefficient_scale(const SectorBasis& sector) {
    const int n = sector.n_atoms();
    Eigen::VectorXd out(static_cast<Eigen::Index>(sector.size()));
    const double lg_n = std::lgamma(n + 1.0);
    for (std::size_t k = 0; k < sector.size(); ++k) {
        const auto& e = sector[k];
        out[static_cast<Eigen::Index>(k)] =
            std::exp(lg_n - std::lgamma(e.n_plus + 1.0) - std::lgamma(e.n_minus + 1.0) -
                     std::lgamma(e.n_z + 1.0) - std::lgamma(e.n_identity(n) + 1.0));
    }
    return out;
}

/// scale^-1 * L * scale.
inline SparseMatrix rescale(const SparseMatrix& l, const Eigen::VectorXd& scale) {
    SparseMatrix out = l;
    for (Eigen::Index k = 0; k < out.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(out, k); it; ++it)
            it.valueRef() *= scale[it.col()] / scale[it.row()];
    return out;
}

/// Linear functional giving Tr[rho] from symmetric-basis coefficients.
struct TraceFunctional {
    Eigen::VectorXd weights;

    cplx operator()(const Eigen::VectorXcd& coeffs) const { return weights.cast<cplx>().dot(coeffs); }
};

/// Tr[(a^dag)^m a^m] over the space truncated at `cutoff` photons.
inline double photon_trace_weight(int cutoff, int m) {
    if (m < 0 || m > cutoff) return 0.0;
    double total = 0.0;
    for (int n = m; n <= cutoff; ++n) {
        double falling = 1.0;
        for (int k = n - m + 1; k <= n; ++k) falling *= k;
        total += falling;
    }
    return total;
}

inline TraceFunctional trace_functional(const SectorBasis& sector) {
    TraceFunctional t;
    t.weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sector.size()));
    if (sector.delta_n() != 0) return t;
    for (int m = 0; m <= sector.cutoff(); ++m) {
        if (auto idx = sector.index_of({0, 0, 0, m, m}))
            t.weights[static_cast<Eigen::Index>(*idx)] = photon_trace_weight(sector.cutoff(), m);
    }
    return t;
}

namespace detail {

enum Part : int { kHamiltonian = 0, kCavity, kPump, kSpont, kDeph, kPartCount };

using TripletLists = std::array<std::vector<Triplet>, kPartCount>;

/// Appends the image L(e_col) of one basis element, split by master-equation term.
inline void assemble_column(const ModelParams& p, const SectorBasis& sector, std::size_t col,
                            TripletLists& out) {
    const int n = p.n_atoms;
    const int m = p.photon_cutoff;
    const BasisElement& e = sector[col];
    const auto c = static_cast<Eigen::Index>(col);

    auto emit = [&](Part part, const WeightedElements& we, cplx scale) {
        if (scale == cplx(0.0)) return;
        for (const auto& [el, w] : we) {
            auto row = sector.index_of(el);
            if (!row) throw SolverError("Liouvillian term left its U(1) sector");
            out[part].emplace_back(static_cast<Eigen::Index>(*row), c, scale * w);
        }
    };
    auto cav = [m](CavityOp op) { return [op, m](const BasisElement& x) { return apply_cavity(op, x, m); }; };
    auto atom = [n](AtomicOp op) {
        return [op, n](const BasisElement& x) { return apply_collective_atomic(op, x, n); };
    };
    WeightedElements self;
    self.add(e, 1.0, n, m);

    // i [rho, H] with H = (g/2)(sigma^+ a + sigma^- a^dag).
    if (p.coupling != 0.0) {
        WeightedElements left;
        WeightedElements right;
        WeightedElements tmp;
        tmp = apply_cavity(CavityOp::a_left, e, m);
        accumulate(left, tmp, 1.0, n, m, atom(AtomicOp::sp_left));
        tmp = apply_cavity(CavityOp::adag_left, e, m);
        accumulate(left, tmp, 1.0, n, m, atom(AtomicOp::sm_left));
        tmp = apply_collective_atomic(AtomicOp::sp_right, e, n);
        accumulate(right, tmp, 1.0, n, m, cav(CavityOp::a_right));
        tmp = apply_collective_atomic(AtomicOp::sm_right, e, n);
        accumulate(right, tmp, 1.0, n, m, cav(CavityOp::adag_right));
        const cplx ig2(0.0, 0.5 * p.coupling);
        emit(kHamiltonian, right, ig2);
        emit(kHamiltonian, left, -ig2);
    }
    // -(kappa/2)(a^dag a rho + rho a^dag a) + kappa a rho a^dag.
    if (p.cavity_decay != 0.0) {
        WeightedElements number;
        WeightedElements tmp = apply_cavity(CavityOp::a_left, e, m);
        accumulate(number, tmp, 1.0, n, m, cav(CavityOp::adag_left));
        tmp = apply_cavity(CavityOp::adag_right, e, m);
        accumulate(number, tmp, 1.0, n, m, cav(CavityOp::a_right));
        WeightedElements sandwich;
        tmp = apply_cavity(CavityOp::a_left, e, m);
        accumulate(sandwich, tmp, 1.0, n, m, cav(CavityOp::adag_right));
        emit(kCavity, number, -0.5 * p.cavity_decay);
        emit(kCavity, sandwich, p.cavity_decay);
    }
    // sum_j sigma_j^-+ sigma_j^+- = (N -+ sigma^z)/2 for the pump (upper) and
    // emission (lower) anticommutators.
    if (p.pump != 0.0 || p.spont_emission != 0.0) {
        WeightedElements sz_anti = apply_collective_atomic(AtomicOp::sz_left, e, n);
        for (const auto& [el, w] : apply_collective_atomic(AtomicOp::sz_right, e, n))
            sz_anti.add(el, w, n, m);
        if (p.pump != 0.0) {
            emit(kPump, self, -0.5 * p.pump * n);
            emit(kPump, sz_anti, 0.25 * p.pump);
            emit(kPump, apply_recycling(RecyclingOp::pump_sandwich, e, n), 0.5 * p.pump);
        }
        if (p.spont_emission != 0.0) {
            emit(kSpont, self, -0.5 * p.spont_emission * n);
            emit(kSpont, sz_anti, -0.25 * p.spont_emission);
            emit(kSpont, apply_recycling(RecyclingOp::emission_sandwich, e, n),
                 0.5 * p.spont_emission);
        }
    }
    if (p.dephasing != 0.0) {
        const double f = apply_dephasing_diag(e);
        if (f != 0.0) out[kDeph].emplace_back(c, c, cplx(-0.5 * p.dephasing * f));
    }
}

inline SparseMatrix to_sparse(std::size_t dim, const std::vector<Triplet>& triplets,
                              double drop_tolerance) {
    const auto n = static_cast<Eigen::Index>(dim);
    SparseMatrix mat(n, n);
    mat.setFromTriplets(triplets.begin(), triplets.end());
    mat.prune([drop_tolerance](Eigen::Index, Eigen::Index, const cplx& v) {
        return std::abs(v) >= drop_tolerance;
    });
    mat.makeCompressed();
    return mat;
}

inline TripletLists assemble_triplets(const ModelParams& params, const SectorBasis& sector,
                                      unsigned threads) {
    const std::size_t dim = sector.size();
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(dim / 64 + 1)));
    std::vector<TripletLists> partial(threads);
    auto work = [&](unsigned tid) {
        const std::size_t lo = dim * tid / threads;
        const std::size_t hi = dim * (tid + 1) / threads;
        for (std::size_t col = lo; col < hi; ++col) assemble_column(params, sector, col, partial[tid]);
    };
    if (threads == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    TripletLists merged = std::move(partial[0]);
    for (unsigned t = 1; t < threads; ++t)
        for (int part = 0; part < kPartCount; ++part)
            merged[part].insert(merged[part].end(), partial[t][part].begin(), partial[t][part].end());
    return merged;
}

}  // namespace detail

/// The coherent part i[rho, H_eff] restricted to `sector`.
inline SparseMatrix build_hamiltonian_action(const ModelParams& params, const SectorBasis& sector,
                                             const AssemblyOptions& opts = {}) {
    ModelParams only = params;
    only.cavity_decay = only.pump = only.spont_emission = only.dephasing = 0.0;
    auto lists = detail::assemble_triplets(validate(only), sector, opts.threads);
    return detail::to_sparse(sector.size(), lists[detail::kHamiltonian], opts.drop_tolerance);
}

/// Cavity decay, pump, emission and dephasing parts; the `hamiltonian` member is empty.
inline LiouvillianParts build_dissipators(const ModelParams& params, const SectorBasis& sector,
                                          const AssemblyOptions& opts = {}) {
    ModelParams only = params;
    only.coupling = 0.0;
    auto lists = detail::assemble_triplets(validate(only), sector, opts.threads);
    const auto dim = static_cast<Eigen::Index>(sector.size());
    LiouvillianParts parts;
    parts.hamiltonian = SparseMatrix(dim, dim);
    parts.cavity_decay = detail::to_sparse(sector.size(), lists[detail::kCavity], opts.drop_tolerance);
    parts.pump = detail::to_sparse(sector.size(), lists[detail::kPump], opts.drop_tolerance);
    parts.spont = detail::to_sparse(sector.size(), lists[detail::kSpont], opts.drop_tolerance);
    parts.deph = detail::to_sparse(sector.size(), lists[detail::kDeph], opts.drop_tolerance);
    return parts;
}

inline Superoperator build_liouvillian(const ModelParams& params,
                                       std::shared_ptr<const SectorBasis> sector,
                                       const AssemblyOptions& opts = {}) {
    validate(params);
    if (sector->n_atoms() != params.n_atoms || sector->cutoff() != params.photon_cutoff)
        throw ConfigError("sector basis does not match model parameters");
    auto lists = detail::assemble_triplets(params, *sector, opts.threads);
    Superoperator op;
    op.sector = sector;
    op.params = params;
    std::vector<Triplet> all;
    std::size_t count = 0;
    for (const auto& l : lists) count += l.size();
    all.reserve(count);
    for (const auto& l : lists) all.insert(all.end(), l.begin(), l.end());
    op.matrix = detail::to_sparse(sector->size(), all, opts.drop_tolerance);
    if (opts.keep_parts) {
        const std::size_t dim = sector->size();
        op.parts = LiouvillianParts{
            detail::to_sparse(dim, lists[detail::kHamiltonian], opts.drop_tolerance),
            detail::to_sparse(dim, lists[detail::kCavity], opts.drop_tolerance),
            detail::to_sparse(dim, lists[detail::kPump], opts.drop_tolerance),
            detail::to_sparse(dim, lists[detail::kSpont], opts.drop_tolerance),
            detail::to_sparse(dim, lists[detail::kDeph], opts.drop_tolerance)};
    }
    return op;
}

inline Superoperator build_liouvillian(const ModelParams& params, int delta_n,
                                       const AssemblyOptions& opts = {}) {
    auto sector = std::make_shared<const SectorBasis>(params.n_atoms, params.photon_cutoff, delta_n);
    return build_liouvillian(params, std::move(sector), opts);
}

/// Coordinate-format text dump, one "row col re im" line per stored entry.
inline void write_coordinate_dump(std::ostream& os, const SparseMatrix& mat) {
    const auto flags = os.flags();
    const auto prec = os.precision();
    os << std::setprecision(17);
    for (Eigen::Index k = 0; k < mat.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(mat, k); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value().real() << ' ' << it.value().imag()
               << '\n';
    os.flags(flags);
    os.precision(prec);
}

/// Thread-safe memo of assembled Liouvillians keyed by (parameters, sector).
class LiouvillianCache {
  public:
    explicit LiouvillianCache(AssemblyOptions opts = {}) : opts_(opts) {}

    std::shared_ptr<const Superoperator> get(const ModelParams& params, int delta_n) {
        const Key key{params.n_atoms,     params.photon_cutoff, params.coupling,
                      params.cavity_decay, params.pump,          params.spont_emission,
                      params.dephasing,    delta_n};
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(key); it != entries_.end()) return it->second;
        }
        auto built = std::make_shared<const Superoperator>(build_liouvillian(params, delta_n, opts_));
        std::lock_guard lock(mutex_);
        return entries_.emplace(key, std::move(built)).first->second;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

  private:
    using Key = std::tuple<int, int, double, double, double, double, double, int>;
    AssemblyOptions opts_;
    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<const Superoperator>> entries_;
};

}  // namespace superrad
