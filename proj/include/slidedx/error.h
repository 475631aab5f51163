// Copyright 2026 The slidedx Authors. All Rights Reserved.
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

namespace slidedx {

/// Base class for all errors raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration: bad thresholds, strides, grids, flags.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be used: undersized slides, malformed files,
/// empty inputs, mismatched lengths.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Parse failure in one of the line-oriented text formats.
class ParseError : public DataError {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Model loading or inference failure in a classifier backend.
class ModelError : public Error {
 public:
  using Error::Error;
};

/// Requested classifier feature (e.g. feature maps for CAM) is unavailable.
class CapabilityError : public ModelError {
 public:
  using ModelError::ModelError;
};

}  // namespace slidedx
