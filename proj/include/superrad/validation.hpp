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
#include <limits>
#include <random>
#include <vector>

#include "superrad/dynamics.hpp"
#include "superrad/observables.hpp"
#include "superrad/oracle.hpp"

namespace superrad {

/// Random parameter point with every rate drawn uniformly from [lo, hi].
inline ModelParams random_parameter_draw(std::mt19937_64& rng, int n_atoms, int cutoff, double lo = 0.2,
                                         double hi = 2.0) {
    std::uniform_real_distribution<double> rate(lo, hi);
    ModelParams p;
    p.n_atoms = n_atoms;
    p.photon_cutoff = cutoff;
    p.coupling = rate(rng);
    p.cavity_decay = rate(rng);
    p.pump = rate(rng);
    p.spont_emission = rate(rng);
    p.dephasing = rate(rng);
    return validate(p);
}

/// Deviations of the symmetric solver from the brute-force oracle at one
/// parameter point. Observables are relative; correlations are absolute
/// differences of the normalized traces, maximized over the grid.
struct OracleComparison {
    double sigma_z = 0.0;
    /// NaN for a single atom.
    double spin_spin = std::numeric_limits<double>::quiet_NaN();
    double photon_number = 0.0;
    double g1 = 0.0;
    double g2 = 0.0;

    double max_observable() const {
        double m = std::max(sigma_z, photon_number);
        return std::isnan(spin_spin) ? m : std::max(m, spin_spin);
    }
    double max_correlation() const { return std::max(g1, g2); }
};

struct OracleComparisonOptions {
    SteadyStateOptions steady{};
    CorrelationOptions correlation{};
    /// Correlations are skipped when this is empty.
    std::vector<double> grid{};
};

namespace detail {

inline double relative_deviation(double value, double reference) {
    const double scale = std::abs(reference);
    return scale > 0.0 ? std::abs(value - reference) / scale : std::abs(value);
}

inline double max_trace_deviation(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace detail

inline OracleComparison compare_with_oracle(const ModelParams& params, const OracleComparisonOptions& opts = {}) {
    const auto l = build_liouvillian(params, 0, opts.correlation.assembly);
    const SymmetricState steady = steady_state(l, opts.steady);
    const oracle::DenseDensityMatrix reference = oracle::oracle_steady_state(params);

    OracleComparison out;
    out.sigma_z = detail::relative_deviation(expect_sigma_z(steady), oracle::oracle_sigma_z(reference));
    if (params.n_atoms >= 2)
        out.spin_spin =
            detail::relative_deviation(expect_spin_spin(steady), oracle::oracle_spin_spin(reference));
    out.photon_number =
        detail::relative_deviation(expect_photon_number(steady), oracle::oracle_photon_number(reference));
    if (!opts.grid.empty()) {
        out.g1 = detail::max_trace_deviation(g1_trace(params, steady, opts.grid, opts.correlation).values,
                                             oracle::oracle_g1(params, reference, opts.grid));
        out.g2 = detail::max_trace_deviation(g2_trace(params, steady, opts.grid, opts.correlation).values,
                                             oracle::oracle_g2(params, reference, opts.grid));
    }
    return out;
}

}  // namespace superrad
