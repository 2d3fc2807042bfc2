// Copyright 2026-present the ohsl authors
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

namespace ohsl {

// Malformed or inconsistent input data (bad file, non-finite values, label/feature mismatch).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two artifacts that cannot be used together (dimension or variant mismatch).
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Query against a multi-index built over an older database snapshot.
class StaleIndexError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

#define OHSL_REQUIRE(cond, msg)                                     \
  do {                                                              \
    if (!(cond)) throw std::invalid_argument(std::string(msg));     \
  } while (0)

}  // namespace ohsl
