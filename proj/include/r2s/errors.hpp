// Copyright 2026 The R2SNet Authors
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

#include <stdexcept>
#include <string>

namespace r2s {

/// Base of every error raised by the library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Tensor shapes or layer widths do not agree.
struct DimensionError : Error {
    using Error::Error;
};

/// A class id outside [0, |O|).
struct InvalidClassError : Error {
    using Error::Error;
};

/// Bad configuration values, missing parameters, mismatched checkpoints.
struct ConfigError : Error {
    using Error::Error;
};

/// Input data is inconsistent (e.g. proposals missing for an image).
struct DataError : Error {
    using Error::Error;
};

/// A document failed schema validation.
struct ParseError : Error {
    using Error::Error;
};

/// Checkpoint blobs failed their checksum or were truncated.
struct IntegrityError : Error {
    using Error::Error;
};

/// NaN or Inf where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

/// Filesystem failures.
struct IoError : Error {
    using Error::Error;
};

}  // namespace r2s
