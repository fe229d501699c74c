// Copyright 2026 The contmeas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace contmeas {

enum class ErrorKind {
    invalid_state,       // non-finite amplitudes
    degenerate_state,    // zero norm where a normalizable state is needed
    dimension_mismatch,
    not_hermitian,
    configuration,
    step_size,           // numerical blow-up or step-size guard violation
    weight_underflow,    // linear-mode norm fell below the representable range
    mode,                // operation called on a trajectory of the wrong kind
    enumeration_guard,
    oracle,              // root finding or other oracle solve did not converge
    io,
};

constexpr std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_state: return "invalid-state";
        case ErrorKind::degenerate_state: return "degenerate-state";
        case ErrorKind::dimension_mismatch: return "dimension-mismatch";
        case ErrorKind::not_hermitian: return "not-hermitian";
        case ErrorKind::configuration: return "configuration";
        case ErrorKind::step_size: return "step-size";
        case ErrorKind::weight_underflow: return "weight-underflow";
        case ErrorKind::mode: return "mode";
        case ErrorKind::enumeration_guard: return "enumeration-guard";
        case ErrorKind::oracle: return "oracle";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Process exit code used by the command line front end: 2 for anything
    /// the user can fix in the configuration, 3 for numerical failures.
    int exit_code() const noexcept {
        switch (kind_) {
            case ErrorKind::configuration:
            case ErrorKind::not_hermitian:
            case ErrorKind::dimension_mismatch:
            case ErrorKind::enumeration_guard:
            case ErrorKind::mode:
            case ErrorKind::io:
                return 2;
            default:
                return 3;
        }
    }

private:
    ErrorKind kind_;
};

}  // namespace contmeas
