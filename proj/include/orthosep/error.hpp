// Copyright 2026 The orthosep Authors
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
#include <string_view>

namespace orthosep {

// Coarse failure classes. The CLI maps each to its own exit code and prints
// the category name so scripts can tell bad input from IO trouble.
enum class ErrorKind {
  kInvalidArgument,  // precondition or shape violation
  kIo,               // file could not be opened, read or written
  kFormat,           // file exists but its contents are malformed
  kNumeric,          // NaN/Inf or other numerical breakdown
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::kInvalidArgument, what);
}

}  // namespace orthosep
