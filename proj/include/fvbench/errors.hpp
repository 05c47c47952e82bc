// Copyright 2026 The fvbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
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

namespace fvbench {

/// Input violates a declared contract (bad config, malformed file, bad value).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed row in a delimited file. Carries the 1-based line number.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line)
        : ValidationError(what + " (line " + std::to_string(line) + ")"), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Numerical routine failed to produce a result (never a silent rejection).
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bimodal fit collapsed; the caller has to supply modes manually.
class DegenerateFitError : public ComputationError {
public:
    using ComputationError::ComputationError;
};

/// Transport-level failure talking to a provider or service. Retryable.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Too many pairs failed after retries; the scoring run is aborted.
class RunAbortedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Evaluation cannot produce a curve (empty genuine or impostor set).
class EvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fvbench
