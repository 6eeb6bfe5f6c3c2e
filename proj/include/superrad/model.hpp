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

#include <cmath>
#include <optional>

#include "superrad/errors.hpp"

namespace superrad {

/// Physical parameters of N two-level emitters coupled to a cavity mode
/// truncated at `photon_cutoff` photons. All rates share one angular-frequency
/// unit; `photon_cutoff == 1` is the fully blockaded (polariton) mode.
struct ModelParams {
    int n_atoms = 1;
    int photon_cutoff = 1;
    double coupling = 0.0;        // g
    double cavity_decay = 0.0;    // kappa
    double pump = 0.0;            // w
    double spont_emission = 0.0;  // gamma
    double dephasing = 0.0;       // gamma_d

    bool operator==(const ModelParams&) const = default;
};

/// Dimensionless combinations used to organize the physics.
struct DerivedScales {
    /// C = g^2 / (kappa gamma); absent when gamma == 0 or kappa == 0.
    std::optional<double> cooperativity;
    /// C gamma = g^2 / kappa. Defined even when gamma == 0.
    double cooperativity_gamma = 0.0;
    /// kappa / (N g).
    double kappa_tilde = 0.0;
    /// w N / kappa.
    double w_tilde = 0.0;
};

inline ModelParams validate(const ModelParams& params) {
    if (params.n_atoms < 1) throw ConfigError("n_atoms must be >= 1");
    if (params.photon_cutoff < 1) throw ConfigError("photon_cutoff must be >= 1");
    const double rates[] = {params.coupling, params.cavity_decay, params.pump,
                            params.spont_emission, params.dephasing};
    for (double r : rates) {
        if (!std::isfinite(r)) throw ConfigError("rates must be finite");
        if (r < 0.0) throw ConfigError("rates must be non-negative");
    }
    return params;
}

/// Ratios with a zero denominator come out as IEEE infinities (or NaN for 0/0).
inline DerivedScales derive_scales(const ModelParams& params) {
    const double n = params.n_atoms;
    const double g = params.coupling;
    const double kappa = params.cavity_decay;
    DerivedScales out;
    out.cooperativity_gamma = g * g / kappa;
    if (params.spont_emission > 0.0 && kappa > 0.0)
        out.cooperativity = g * g / (kappa * params.spont_emission);
    out.kappa_tilde = kappa / (n * g);
    out.w_tilde = params.pump * n / kappa;
    return out;
}

}  // namespace superrad
