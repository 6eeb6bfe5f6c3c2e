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

// Brute-force reference: explicit single-atom operators on the full
// 2^N (M+1) dimensional Hilbert space, vectorized Liouvillian, no symmetry
// assumptions. Everything here favors transparency over speed.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "superrad/errors.hpp"
#include "superrad/liouvillian.hpp"
#include "superrad/model.hpp"
#include "superrad/symbasis.hpp"

namespace superrad::oracle {

using DenseMatrix = Eigen::MatrixXcd;

/// Largest Hilbert dimension 2^N (M+1) accepted by default.
inline constexpr std::size_t kDefaultDimensionCap = 64;

/// Operators on atoms (1..N, first Kronecker factor = atom 1) times the cavity.
/// Single-atom basis order is (|e>, |g>), so sigma_z = diag(1, -1).
class FullSpace {
  public:
    FullSpace(int n_atoms, int cutoff) : n_atoms_(n_atoms), cutoff_(cutoff) {
        if (n_atoms < 1 || cutoff < 1) throw ConfigError("FullSpace requires N >= 1 and M >= 1");
        atom_dim_ = std::size_t{1} << n_atoms;
        cav_dim_ = static_cast<std::size_t>(cutoff) + 1;
    }

    int n_atoms() const noexcept { return n_atoms_; }
    int cutoff() const noexcept { return cutoff_; }
    std::size_t dim() const noexcept { return atom_dim_ * cav_dim_; }
    std::size_t atom_dim() const noexcept { return atom_dim_; }
    std::size_t cavity_dim() const noexcept { return cav_dim_; }

    static DenseMatrix pauli(char which) {
        DenseMatrix s = DenseMatrix::Zero(2, 2);
        switch (which) {
            case '+': s(0, 1) = 1.0; break;
            case '-': s(1, 0) = 1.0; break;
            case 'z': s(0, 0) = 1.0; s(1, 1) = -1.0; break;
            default: s = DenseMatrix::Identity(2, 2);
        }
        return s;
    }

    /// Truncated annihilation operator on the cavity factor alone.
    DenseMatrix cavity_a() const {
        DenseMatrix a = DenseMatrix::Zero(cav_dim_, cav_dim_);
        for (std::size_t n = 1; n < cav_dim_; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
        return a;
    }

    /// Atomic operator built from one character per atom ('+', '-', 'z', 'I').
    DenseMatrix atomic_product(const std::string& pattern) const {
        DenseMatrix out = DenseMatrix::Identity(1, 1);
        for (char c : pattern) out = kron(out, pauli(c));
        return out;
    }

    /// `which` acting on atom `j` (0-based), identity on the rest and on the cavity.
    DenseMatrix site(char which, int j) const {
        std::string pattern(static_cast<std::size_t>(n_atoms_), 'I');
        pattern[static_cast<std::size_t>(j)] = which;
        return kron(atomic_product(pattern), DenseMatrix::Identity(cav_dim_, cav_dim_));
    }

    DenseMatrix a() const { return kron(DenseMatrix::Identity(atom_dim_, atom_dim_), cavity_a()); }
    DenseMatrix adag() const { return a().adjoint(); }
    DenseMatrix identity() const { return DenseMatrix::Identity(dim(), dim()); }

    static DenseMatrix kron(const DenseMatrix& x, const DenseMatrix& y) {
        DenseMatrix out(x.rows() * y.rows(), x.cols() * y.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j)
                out.block(i * y.rows(), j * y.cols(), y.rows(), y.cols()) = x(i, j) * y;
        return out;
    }

  private:
    int n_atoms_;
    int cutoff_;
    std::size_t atom_dim_;
    std::size_t cav_dim_;
};

inline SparseMatrix sparse_kron(const SparseMatrix& x, const SparseMatrix& y) {
    std::vector<Triplet> trips;
    trips.reserve(static_cast<std::size_t>(x.nonZeros() * y.nonZeros()));
    for (Eigen::Index k = 0; k < x.outerSize(); ++k)
        for (SparseMatrix::InnerIterator ix(x, k); ix; ++ix)
            for (Eigen::Index l = 0; l < y.outerSize(); ++l)
                for (SparseMatrix::InnerIterator iy(y, l); iy; ++iy)
                    trips.emplace_back(ix.row() * y.rows() + iy.row(), ix.col() * y.cols() + iy.col(),
                                       ix.value() * iy.value());
    SparseMatrix out(x.rows() * y.rows(), x.cols() * y.cols());
    out.setFromTriplets(trips.begin(), trips.end());
    return out;
}

/// Explicit operator represented by a symmetric basis element.
inline DenseMatrix lift_element(const BasisElement& e, int n_atoms, int cutoff) {
    const FullSpace space(n_atoms, cutoff);
    if (!is_legal(e, n_atoms, cutoff)) throw ConfigError("cannot lift an illegal basis element");
    const int ni = e.n_identity(n_atoms);
    DenseMatrix atoms = DenseMatrix::Zero(space.atom_dim(), space.atom_dim());
    // Enumerate distinct placements of the factors over the atoms.
    std::string pattern(static_cast<std::size_t>(n_atoms), 'I');
    std::function<void(int, int, int, int)> place = [&](int pos, int np, int nm, int nz) {
        if (pos == n_atoms) {
            if (np == 0 && nm == 0 && nz == 0) atoms += space.atomic_product(pattern);
            return;
        }
        const int remaining = n_atoms - pos;
        const std::pair<char, int*> choices[] = {{'+', &np}, {'-', &nm}, {'z', &nz}};
        for (auto [c, counter] : choices) {
            if (*counter > 0) {
                pattern[static_cast<std::size_t>(pos)] = c;
                --*counter;
                place(pos + 1, np, nm, nz);
                ++*counter;
            }
        }
        if (np + nm + nz < remaining) {
            pattern[static_cast<std::size_t>(pos)] = 'I';
            place(pos + 1, np, nm, nz);
        }
    };
    place(0, e.n_plus, e.n_minus, e.n_z);
    auto fact = [](int n) {
        double f = 1.0;
        for (int k = 2; k <= n; ++k) f *= k;
        return f;
    };
    const double weight = fact(e.n_plus) * fact(e.n_minus) * fact(e.n_z) * fact(ni) /
                          (std::ldexp(1.0, n_atoms) * fact(n_atoms));
    const DenseMatrix a = space.cavity_a();
    const DenseMatrix ad = a.adjoint();
    DenseMatrix cav = DenseMatrix::Identity(space.cavity_dim(), space.cavity_dim());
    for (int k = 0; k < e.n_adag; ++k) cav = cav * ad;
    for (int k = 0; k < e.n_a; ++k) cav = cav * a;
    return weight * FullSpace::kron(atoms, cav);
}

/// Explicit operator sum_k c_k rho_k for coefficients over `sector`.
inline DenseMatrix lift_coefficients(const SectorBasis& sector, const Eigen::VectorXcd& coeffs) {
    const FullSpace space(sector.n_atoms(), sector.cutoff());
    DenseMatrix out = DenseMatrix::Zero(space.dim(), space.dim());
    for (std::size_t k = 0; k < sector.size(); ++k) {
        const cplx c = coeffs[static_cast<Eigen::Index>(k)];
        if (c != cplx(0.0)) out += c * lift_element(sector[k], sector.n_atoms(), sector.cutoff());
    }
    return out;
}

/// Hilbert-space ingredients of the master equation.
struct MasterEquationTerms {
    DenseMatrix hamiltonian;
    /// Jump operators with their rates folded in: D[J] rho = J rho J^+ - {J^+ J, rho}/2.
    std::vector<DenseMatrix> jumps;
};

inline MasterEquationTerms master_equation_terms(const ModelParams& params) {
    const FullSpace space(params.n_atoms, params.photon_cutoff);
    MasterEquationTerms t;
    const DenseMatrix a = space.a();
    t.hamiltonian = DenseMatrix::Zero(space.dim(), space.dim());
    for (int j = 0; j < params.n_atoms; ++j)
        t.hamiltonian += 0.5 * params.coupling *
                         (space.site('+', j) * a + space.site('-', j) * a.adjoint());
    if (params.cavity_decay > 0.0) t.jumps.push_back(std::sqrt(params.cavity_decay) * a);
    for (int j = 0; j < params.n_atoms; ++j) {
        if (params.pump > 0.0) t.jumps.push_back(std::sqrt(params.pump) * space.site('+', j));
        if (params.spont_emission > 0.0)
            t.jumps.push_back(std::sqrt(params.spont_emission) * space.site('-', j));
        if (params.dephasing > 0.0)
            t.jumps.push_back(std::sqrt(params.dephasing / 4.0) * space.site('z', j));
    }
    return t;
}

/// Direct application of the master-equation right-hand side to an explicit operator.
inline DenseMatrix apply_master_equation(const MasterEquationTerms& terms, const DenseMatrix& rho) {
    const cplx i(0.0, 1.0);
    DenseMatrix out = i * (rho * terms.hamiltonian - terms.hamiltonian * rho);
    for (const auto& j : terms.jumps) {
        const DenseMatrix jdj = j.adjoint() * j;
        out += j * rho * j.adjoint() - 0.5 * (jdj * rho + rho * jdj);
    }
    return out;
}

/// Column-stacked superoperator, vec(A rho B) = (B^T kron A) vec(rho).
inline SparseMatrix build_full_liouvillian(const ModelParams& params,
                                           std::size_t dimension_cap = kDefaultDimensionCap) {
    validate(params);
    const FullSpace space(params.n_atoms, params.photon_cutoff);
    if (space.dim() > dimension_cap)
        throw ConfigError("oracle Hilbert dimension " + std::to_string(space.dim()) +
                          " exceeds cap " + std::to_string(dimension_cap));
    const auto terms = master_equation_terms(params);
    const auto dim = static_cast<Eigen::Index>(space.dim());
    SparseMatrix id(dim, dim);
    id.setIdentity();
    const cplx i(0.0, 1.0);
    const SparseMatrix h = terms.hamiltonian.sparseView();
    SparseMatrix l = -i * sparse_kron(id, h) + i * sparse_kron(SparseMatrix(h.transpose()), id);
    for (const auto& jd : terms.jumps) {
        const SparseMatrix j = jd.sparseView();
        const SparseMatrix jdj = (jd.adjoint() * jd).sparseView();
        l += sparse_kron(SparseMatrix(j.conjugate()), j);
        l -= 0.5 * sparse_kron(id, jdj);
        l -= 0.5 * sparse_kron(SparseMatrix(jdj.transpose()), id);
    }
    l.prune(cplx(0.0), 0.0);
    l.makeCompressed();
    return l;
}

/// Full-space density matrix with its system size.
struct DenseDensityMatrix {
    int n_atoms = 1;
    int cutoff = 1;
    DenseMatrix matrix;

    double hermiticity_error() const { return (matrix - matrix.adjoint()).norm(); }
    cplx trace() const { return matrix.trace(); }
    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (matrix + matrix.adjoint()),
                                                      Eigen::EigenvaluesOnly);
        return es.eigenvalues().minCoeff();
    }
};

inline Eigen::VectorXcd vectorize(const DenseMatrix& m) {
    return Eigen::Map<const Eigen::VectorXcd>(m.data(), m.size());
}

inline DenseMatrix unvectorize(const Eigen::VectorXcd& v, Eigen::Index dim) {
    return Eigen::Map<const DenseMatrix>(v.data(), dim, dim);
}

struct SteadyStateOptions {
    /// Liouville dimensions up to this use a full eigendecomposition; larger
    /// ones a bordered sparse LU solve.
    std::size_t dense_eigen_limit = 256;
    /// Smallest |lambda| must be below this (relative to ||L||_1).
    double zero_tolerance = 1e-10;
    /// Second-smallest |lambda| must exceed this multiple of ||L||_1 * zero_tolerance.
    double gap_factor = 1e3;
    std::size_t dimension_cap = kDefaultDimensionCap;
};

inline double norm1(const SparseMatrix& m) {
    double best = 0.0;
    for (Eigen::Index k = 0; k < m.outerSize(); ++k) {
        double s = 0.0;
        for (SparseMatrix::InnerIterator it(m, k); it; ++it) s += std::abs(it.value());
        best = std::max(best, s);
    }
    return best;
}

inline DenseDensityMatrix oracle_steady_state(const ModelParams& params,
                                              const SteadyStateOptions& opts = {}) {
    const SparseMatrix l = build_full_liouvillian(params, opts.dimension_cap);
    const FullSpace space(params.n_atoms, params.photon_cutoff);
    const auto dim = static_cast<Eigen::Index>(space.dim());
    const double scale = std::max(norm1(l), 1e-300);
    Eigen::VectorXcd v;
    if (static_cast<std::size_t>(l.rows()) <= opts.dense_eigen_limit) {
        Eigen::ComplexEigenSolver<DenseMatrix> es(DenseMatrix(l), true);
        const auto& vals = es.eigenvalues();
        std::vector<Eigen::Index> order(static_cast<std::size_t>(vals.size()));
        for (Eigen::Index k = 0; k < vals.size(); ++k) order[static_cast<std::size_t>(k)] = k;
        std::sort(order.begin(), order.end(),
                  [&](auto x, auto y) { return std::abs(vals[x]) < std::abs(vals[y]); });
        if (std::abs(vals[order[0]]) > opts.zero_tolerance * scale)
            throw SolverError("oracle: no zero eigenvalue found");
        std::size_t zeros = 1;
        while (zeros < order.size() &&
               std::abs(vals[order[zeros]]) <= opts.gap_factor * opts.zero_tolerance * scale)
            ++zeros;
        if (zeros > 1)
            throw DegenerateSteadyState("oracle: steady state is not unique", zeros);
        v = es.eigenvectors().col(order[0]);
    } else {
        // Tr rho = 0 is implied by the other rows, so row 0 (rho_00) is replaced.
        std::vector<Triplet> trips;
        for (Eigen::Index k = 0; k < l.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(l, k); it; ++it)
                if (it.row() != 0) trips.emplace_back(it.row(), it.col(), it.value());
        for (Eigen::Index i = 0; i < dim; ++i) trips.emplace_back(0, i * dim + i, cplx(1.0));
        SparseMatrix a(l.rows(), l.cols());
        a.setFromTriplets(trips.begin(), trips.end());
        a.makeCompressed();
        Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success)
            throw DegenerateSteadyState("oracle: bordered Liouvillian is singular", 2);
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(l.rows());
        rhs[0] = 1.0;
        v = lu.solve(rhs);
        const double res = (l * v).norm() / (scale * v.norm());
        if (!(res <= 1e3 * opts.zero_tolerance))
            throw DegenerateSteadyState("oracle: steady state is not unique", 2);
    }
    DenseMatrix rho = unvectorize(v, dim);
    rho /= rho.trace();
    rho = 0.5 * (rho + rho.adjoint());
    return {params.n_atoms, params.photon_cutoff, rho};
}

inline double oracle_sigma_z(const DenseDensityMatrix& rho) {
    const FullSpace space(rho.n_atoms, rho.cutoff);
    return (space.site('z', 0) * rho.matrix).trace().real();
}

inline double oracle_spin_spin(const DenseDensityMatrix& rho) {
    const FullSpace space(rho.n_atoms, rho.cutoff);
    if (rho.n_atoms < 2) throw ConfigError("<sigma_1^+ sigma_2^-> needs at least two atoms");
    return (space.site('+', 0) * space.site('-', 1) * rho.matrix).trace().real();
}

inline double oracle_photon_number(const DenseDensityMatrix& rho) {
    const FullSpace space(rho.n_atoms, rho.cutoff);
    return (space.adag() * space.a() * rho.matrix).trace().real();
}

/// Propagates vec(rho) under a fixed Liouvillian with a truncated Taylor
/// series of exp(h L) on sub-steps with h ||L||_1 <= 1/2.
class TaylorPropagator {
  public:
    explicit TaylorPropagator(const SparseMatrix& l) : l_(l), norm_(norm1(l)) {}

    void advance(Eigen::VectorXcd& v, double dt) const {
        if (dt <= 0.0 || norm_ == 0.0) return;
        const int substeps = std::max(1, static_cast<int>(std::ceil(2.0 * dt * norm_)));
        const double h = dt / substeps;
        for (int s = 0; s < substeps; ++s) {
            Eigen::VectorXcd term = v;
            Eigen::VectorXcd sum = v;
            for (int k = 1; k < 80; ++k) {
                term = (h / k) * (l_ * term);
                sum += term;
                if (term.norm() <= 1e-18 * sum.norm()) break;
            }
            v = sum;
        }
    }

  private:
    SparseMatrix l_;
    double norm_;
};

enum class OperatorTag { a, adag, number, sigma_plus_1, sigma_minus_1, sigma_z_1 };

inline DenseMatrix operator_of(const FullSpace& space, OperatorTag tag) {
    switch (tag) {
        case OperatorTag::a: return space.a();
        case OperatorTag::adag: return space.adag();
        case OperatorTag::number: return space.adag() * space.a();
        case OperatorTag::sigma_plus_1: return space.site('+', 0);
        case OperatorTag::sigma_minus_1: return space.site('-', 0);
        case OperatorTag::sigma_z_1: return space.site('z', 0);
    }
    return space.identity();
}

/// How B enters the initial operator of the regression evolution.
enum class Insertion {
    left,      // B rho
    sandwich,  // B rho B^+
};

/// Tr[A exp(L t)(B rho_ss)] (or with B rho_ss B^+) on a time grid starting at 0.
inline std::vector<cplx> oracle_two_time(const ModelParams& params, const DenseDensityMatrix& steady,
                                         OperatorTag a_tag, OperatorTag b_tag,
                                         const std::vector<double>& grid, Insertion insertion,
                                         std::size_t dimension_cap = kDefaultDimensionCap) {
    const FullSpace space(params.n_atoms, params.photon_cutoff);
    const SparseMatrix l = build_full_liouvillian(params, dimension_cap);
    const TaylorPropagator prop(l);
    const DenseMatrix a_op = operator_of(space, a_tag);
    const DenseMatrix b_op = operator_of(space, b_tag);
    DenseMatrix start = b_op * steady.matrix;
    if (insertion == Insertion::sandwich) start = start * b_op.adjoint();
    Eigen::VectorXcd v = vectorize(start);
    const auto dim = static_cast<Eigen::Index>(space.dim());
    std::vector<cplx> out;
    out.reserve(grid.size());
    double t = 0.0;
    for (double target : grid) {
        prop.advance(v, target - t);
        t = target;
        out.push_back((a_op * unvectorize(v, dim)).trace());
    }
    return out;
}

inline std::vector<cplx> oracle_g1(const ModelParams& params, const DenseDensityMatrix& steady,
                                   const std::vector<double>& grid) {
    const double n = oracle_photon_number(steady);
    if (!(n > 0.0)) throw NormalizationError("oracle g1: steady state has no photons");
    auto v = oracle_two_time(params, steady, OperatorTag::adag, OperatorTag::a, grid, Insertion::left);
    for (auto& x : v) x /= n;
    return v;
}

inline std::vector<cplx> oracle_g2(const ModelParams& params, const DenseDensityMatrix& steady,
                                   const std::vector<double>& grid) {
    const double n = oracle_photon_number(steady);
    if (!(n > 0.0)) throw NormalizationError("oracle g2: steady state has no photons");
    auto v = oracle_two_time(params, steady, OperatorTag::number, OperatorTag::a, grid,
                             Insertion::sandwich);
    for (auto& x : v) x /= n * n;
    return v;
}

}  // namespace superrad::oracle
