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
#include <compare>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <ostream>
#include <vector>

#include "superrad/errors.hpp"

namespace superrad {

/// Operator content of one permutation-symmetrized basis operator:
///   sym(sigma+^{n_plus} sigma-^{n_minus} sigma_z^{n_z} I^{rest}) (a^dag)^{n_adag} a^{n_a}
/// with the atomic part averaged over all N! placements and scaled by 2^-N,
/// so that the element with no atomic operators has unit atomic trace.
struct BasisElement {
    int n_plus = 0;
    int n_minus = 0;
    int n_z = 0;
    int n_adag = 0;
    int n_a = 0;

    /// U(1) charge n_plus + n_adag - n_minus - n_a.
    constexpr int delta_n() const noexcept { return n_plus + n_adag - n_minus - n_a; }
    /// Number of identity factors for an N-atom system.
    constexpr int n_identity(int n_atoms) const noexcept {
        return n_atoms - n_plus - n_minus - n_z;
    }

    constexpr auto operator<=>(const BasisElement&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const BasisElement& e) {
    return os << '(' << e.n_plus << ',' << e.n_minus << ',' << e.n_z << ',' << e.n_adag
              << ',' << e.n_a << ')';
}

constexpr bool atomic_legal(const BasisElement& e, int n_atoms) noexcept {
    return e.n_plus >= 0 && e.n_minus >= 0 && e.n_z >= 0 &&
           e.n_plus + e.n_minus + e.n_z <= n_atoms;
}

constexpr bool photonic_legal(const BasisElement& e, int cutoff) noexcept {
    return e.n_adag >= 0 && e.n_a >= 0 && e.n_adag <= cutoff && e.n_a <= cutoff;
}

constexpr bool is_legal(const BasisElement& e, int n_atoms, int cutoff) noexcept {
    return atomic_legal(e, n_atoms) && photonic_legal(e, cutoff);
}

namespace detail {

/// Number of (n_adag, n_a) pairs in [0, M]^2 with n_adag - n_a = d.
constexpr int photon_pair_count(int cutoff, int d) noexcept {
    const int c = cutoff + 1 - (d < 0 ? -d : d);
    return c > 0 ? c : 0;
}

}  // namespace detail

/// All legal basis elements with a fixed U(1) charge, in lexicographic order
/// of (n_plus, n_minus, n_z, n_adag, n_a).
///
/// Elements sharing (n_plus, n_minus) form one contiguous block in which n_z
/// is the major index and the photon pair the minor one, so `index_of` is a
/// table lookup plus arithmetic.
class SectorBasis {
  public:
    SectorBasis(int n_atoms, int cutoff, int delta_n)
        : n_atoms_(n_atoms), cutoff_(cutoff), delta_n_(delta_n) {
        if (n_atoms < 1 || cutoff < 1)
            throw ConfigError("SectorBasis requires n_atoms >= 1 and cutoff >= 1");
        const std::size_t side = static_cast<std::size_t>(n_atoms) + 1;
        offsets_.assign(side * side, -1);
        for (int np = 0; np <= n_atoms; ++np) {
            for (int nm = 0; np + nm <= n_atoms; ++nm) {
                const int d = delta_n - (np - nm);
                const int pairs = detail::photon_pair_count(cutoff, d);
                if (pairs == 0) continue;
                offsets_[np * side + nm] = static_cast<std::int64_t>(elements_.size());
                const int adag_lo = std::max(d, 0);
                for (int nz = 0; np + nm + nz <= n_atoms; ++nz)
                    for (int k = 0; k < pairs; ++k)
                        elements_.push_back({np, nm, nz, adag_lo + k, adag_lo + k - d});
            }
        }
    }

    int n_atoms() const noexcept { return n_atoms_; }
    int cutoff() const noexcept { return cutoff_; }
    int delta_n() const noexcept { return delta_n_; }
    std::size_t size() const noexcept { return elements_.size(); }
    bool empty() const noexcept { return elements_.empty(); }
    const std::vector<BasisElement>& elements() const noexcept { return elements_; }
    const BasisElement& operator[](std::size_t i) const { return elements_[i]; }
    auto begin() const noexcept { return elements_.begin(); }
    auto end() const noexcept { return elements_.end(); }

    /// Position of `e`, or nullopt for illegal elements and other sectors.
    std::optional<std::size_t> index_of(const BasisElement& e) const noexcept {
        if (!is_legal(e, n_atoms_, cutoff_) || e.delta_n() != delta_n_) return std::nullopt;
        const std::size_t side = static_cast<std::size_t>(n_atoms_) + 1;
        const std::int64_t base = offsets_[e.n_plus * side + e.n_minus];
        if (base < 0) return std::nullopt;
        const int d = delta_n_ - (e.n_plus - e.n_minus);
        const int pairs = detail::photon_pair_count(cutoff_, d);
        const int rank = e.n_adag - std::max(d, 0);
        return static_cast<std::size_t>(base) + static_cast<std::size_t>(e.n_z) * pairs + rank;
    }

  private:
    int n_atoms_;
    int cutoff_;
    int delta_n_;
    std::vector<BasisElement> elements_;
    std::vector<std::int64_t> offsets_;
};

inline SectorBasis enumerate_sector(int n_atoms, int cutoff, int delta_n) {
    return SectorBasis(n_atoms, cutoff, delta_n);
}

inline std::optional<std::size_t> index_of(const SectorBasis& basis, const BasisElement& e) {
    return basis.index_of(e);
}

/// Size of `enumerate_sector(n_atoms, cutoff, delta_n)` in O(N M) time.
inline std::size_t sector_dimension(int n_atoms, int cutoff, int delta_n) {
    std::size_t total = 0;
    for (int n_adag = 0; n_adag <= cutoff; ++n_adag) {
        for (int n_a = 0; n_a <= cutoff; ++n_a) {
            const int d = delta_n - n_adag + n_a;  // required n_plus - n_minus
            for (int nm = std::max(0, -d);; ++nm) {
                const int np = nm + d;
                const int free = n_atoms - np - nm;
                if (free < 0) break;
                total += static_cast<std::size_t>(free) + 1;
            }
        }
    }
    return total;
}

}  // namespace superrad
