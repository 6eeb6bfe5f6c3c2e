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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace superrad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid model parameters or run configuration.
class ConfigError : public Error {
  public:
    using Error::Error;
};

/// A numerical method failed to reach its tolerance.
class SolverError : public Error {
  public:
    using Error::Error;
};

/// The Liouvillian has more than one (numerical) zero mode.
class DegenerateSteadyState : public SolverError {
  public:
    DegenerateSteadyState(const std::string& what, std::size_t null_dimension)
        : SolverError(what), null_dimension_(null_dimension) {}

    std::size_t null_dimension() const noexcept { return null_dimension_; }

  private:
    std::size_t null_dimension_;
};

/// A correlation function was requested for a state with no photons.
class NormalizationError : public Error {
  public:
    using Error::Error;
};

/// A fit did not describe its data well enough to be trusted.
class FitError : public Error {
  public:
    using Error::Error;
};

}  // namespace superrad
