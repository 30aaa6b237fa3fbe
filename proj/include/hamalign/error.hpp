// Copyright 2026 The hamalign Authors. All Rights Reserved.
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
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hamalign {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an operation's contract.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates a structural constraint (divisibility, ranges).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A value lies outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The API was called in a state where the call is meaningless.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input data (non-finite cost entries and the like).
class InputError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf showed up where only finite values are allowed.
class NumericFault : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint or raster bytes do not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void throw_dims(const char* op, const std::vector<std::size_t>& a,
                                    const std::vector<std::size_t>& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                       shape_str(b));
}

}  // namespace hamalign
