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
#include <cstddef>
#include <utility>
#include <vector>

#include "superrad/symbasis.hpp"

namespace superrad {

/// Sparse linear combination of basis elements. Illegal elements are never
/// stored and repeated elements are merged.
class WeightedElements {
  public:
    using Term = std::pair<BasisElement, double>;

    void add(const BasisElement& e, double weight, int n_atoms, int cutoff) {
        if (weight == 0.0 || !is_legal(e, n_atoms, cutoff)) return;
        for (auto& [el, w] : terms_) {
            if (el == e) {
                w += weight;
                return;
            }
        }
        terms_.emplace_back(e, weight);
    }

    const std::vector<Term>& terms() const noexcept { return terms_; }
    std::size_t size() const noexcept { return terms_.size(); }
    bool empty() const noexcept { return terms_.empty(); }
    auto begin() const noexcept { return terms_.begin(); }
    auto end() const noexcept { return terms_.end(); }

    /// Coefficient of `e` (zero when absent).
    double coefficient(const BasisElement& e) const noexcept {
        for (const auto& [el, w] : terms_)
            if (el == e) return w;
        return 0.0;
    }

  private:
    std::vector<Term> terms_;
};

enum class CavityOp { a_right, adag_left, adag_right, a_left };
enum class AtomicOp { sp_left, sp_right, sm_left, sm_right, sz_left, sz_right };
enum class RecyclingOp {
    emission_sandwich,  // 2 sum_j sigma_j^- rho sigma_j^+
    pump_sandwich,      // 2 sum_j sigma_j^+ rho sigma_j^-
};

namespace detail {

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) f *= k;
    return f;
}

inline BasisElement with_photons(BasisElement e, int n_adag, int n_a) {
    e.n_adag = n_adag;
    e.n_a = n_a;
    return e;
}

inline BasisElement with_atoms(BasisElement e, int np, int nm, int nz) {
    e.n_plus = np;
    e.n_minus = nm;
    e.n_z = nz;
    return e;
}

}  // namespace detail

/// Multiplies a basis element by a or a^dag from the left or the right and
/// restores normal order inside the space truncated at `cutoff` photons, where
/// [a, a^dag] = 1 - (M+1)/M! (a^dag)^M a^M.
/// Atomic indices are untouched; `e` must be photonically legal.
inline WeightedElements apply_cavity(CavityOp op, const BasisElement& e, int cutoff) {
    using detail::factorial;
    using detail::with_photons;
    const int m = cutoff;
    const int p = e.n_adag;
    const int q = e.n_a;
    // Atomic indices are passed through, so only the photon legality matters.
    const int big = e.n_plus + e.n_minus + e.n_z;
    WeightedElements out;
    switch (op) {
        case CavityOp::a_right:
            out.add(with_photons(e, p, q + 1), 1.0, big, m);
            break;
        case CavityOp::adag_left:
            out.add(with_photons(e, p + 1, q), 1.0, big, m);
            break;
        case CavityOp::adag_right:
            out.add(with_photons(e, p + 1, q), 1.0, big, m);
            out.add(with_photons(e, p, q - 1), q, big, m);
            out.add(with_photons(e, m + 1 + p - q, m), -(m + 1) / factorial(m - q + 1), big, m);
            break;
        case CavityOp::a_left:
            out.add(with_photons(e, p, q + 1), 1.0, big, m);
            out.add(with_photons(e, p - 1, q), p, big, m);
            out.add(with_photons(e, m, m + 1 + q - p), -(m + 1) / factorial(m - p + 1), big, m);
            break;
    }
    return out;
}

/// Multiplies a basis element by a collective operator sigma^{+,-,z} = sum_j
/// sigma_j^{+,-,z} from the left or the right. Photon indices are untouched.
inline WeightedElements apply_collective_atomic(AtomicOp op, const BasisElement& e,
                                                int n_atoms) {
    using detail::with_atoms;
    const int np = e.n_plus;
    const int nm = e.n_minus;
    const int nz = e.n_z;
    const int ni = e.n_identity(n_atoms);
    // Photon indices are passed through; use a cutoff that admits them.
    const int cut = std::max(e.n_adag, e.n_a);
    WeightedElements out;
    auto add = [&](int a, int b, int c, double w) {
        out.add(with_atoms(e, a, b, c), w, n_atoms, cut);
    };
    switch (op) {
        case AtomicOp::sp_left:  // s+ s- = (1+sz)/2, s+ sz = -s+, s+ I = s+
            add(np, nm - 1, nz, 0.5 * nm);
            add(np, nm - 1, nz + 1, 0.5 * nm);
            add(np + 1, nm, nz - 1, -nz);
            add(np + 1, nm, nz, ni);
            break;
        case AtomicOp::sp_right:  // s- s+ = (1-sz)/2, sz s+ = s+
            add(np, nm - 1, nz, 0.5 * nm);
            add(np, nm - 1, nz + 1, -0.5 * nm);
            add(np + 1, nm, nz - 1, nz);
            add(np + 1, nm, nz, ni);
            break;
        case AtomicOp::sm_left:  // s- s+ = (1-sz)/2, s- sz = s-
            add(np - 1, nm, nz, 0.5 * np);
            add(np - 1, nm, nz + 1, -0.5 * np);
            add(np, nm + 1, nz - 1, nz);
            add(np, nm + 1, nz, ni);
            break;
        case AtomicOp::sm_right:  // s+ s- = (1+sz)/2, sz s- = -s-
            add(np - 1, nm, nz, 0.5 * np);
            add(np - 1, nm, nz + 1, 0.5 * np);
            add(np, nm + 1, nz - 1, -nz);
            add(np, nm + 1, nz, ni);
            break;
        case AtomicOp::sz_left:
            add(np, nm, nz, np - nm);
            add(np, nm, nz - 1, nz);
            add(np, nm, nz + 1, ni);
            break;
        case AtomicOp::sz_right:
            add(np, nm, nz, nm - np);
            add(np, nm, nz - 1, nz);
            add(np, nm, nz + 1, ni);
            break;
    }
    return out;
}

/// Single-site sandwich terms of the pump and emission dissipators. Sites
/// carrying sigma^{+-} are annihilated; sigma_z and identity sites mix.
inline WeightedElements apply_recycling(RecyclingOp op, const BasisElement& e, int n_atoms) {
    using detail::with_atoms;
    const int np = e.n_plus;
    const int nm = e.n_minus;
    const int nz = e.n_z;
    const int ni = e.n_identity(n_atoms);
    const int cut = std::max(e.n_adag, e.n_a);
    const double sign = op == RecyclingOp::emission_sandwich ? 1.0 : -1.0;
    WeightedElements out;
    out.add(e, ni - nz, n_atoms, cut);
    out.add(with_atoms(e, np, nm, nz - 1), sign * nz, n_atoms, cut);
    out.add(with_atoms(e, np, nm, nz + 1), -sign * ni, n_atoms, cut);
    return out;
}

/// The dephasing dissipator -(gamma_d/4) sum_j (rho - sz_j rho sz_j) is
/// diagonal in this basis: every sigma^{+-} factor flips sign under the
/// sandwich, sigma_z and identity factors do not. Returns n_plus + n_minus,
/// so that the dissipator acts as -(gamma_d/2) * factor.
constexpr double apply_dephasing_diag(const BasisElement& e) noexcept {
    return static_cast<double>(e.n_plus + e.n_minus);
}

/// Applies `kernel` to every term of `in` and accumulates `scale` times the result.
template <class Kernel>
void accumulate(WeightedElements& out, const WeightedElements& in, double scale,
                int n_atoms, int cutoff, Kernel&& kernel) {
    for (const auto& [el, w] : in)
        for (const auto& [el2, w2] : kernel(el)) out.add(el2, scale * w * w2, n_atoms, cutoff);
}

}  // namespace superrad
