// Copyright 2026 The obsgen Authors
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

namespace obsgen {

// Exit-code classes used by the command-line driver: configuration problems,
// malformed or inconsistent data, and numeric failures.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor dimension mismatch. Message names both offending shapes.
class ShapeError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Embedding or vocabulary lookup outside the table.
class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace obsgen
