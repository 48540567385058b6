// Copyright 2026 The xglk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef XGLK_ERROR_H_
#define XGLK_ERROR_H_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace xglk {

enum class ErrorKind {
  kShape,
  kIndex,
  kContract,
  kNumeric,
  kSpec,
  kFormat,
  kTraining,
  kInapplicable,
  kDegenerate,
  kPolicy,
  kProtocol,
  kBudget,
  kPrecondition,
  kConfig,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// Base class of every error raised by the library. The kind is stable and is
// what tests and the CLI dispatch on; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ErrorKindName(kind)) + " error: " +
                           message),
        kind_(kind),
        detail_(message) {}

  ErrorKind kind() const { return kind_; }
  // The message without the kind prefix.
  const std::string& detail() const { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

// Raised when a query budget runs out in the middle of an estimate. Carries the
// number of oracle queries already spent so callers can keep exact accounting.
class BudgetExhausted : public Error {
 public:
  BudgetExhausted(int64_t queries_spent, const std::string& message)
      : Error(ErrorKind::kBudget, message), queries_spent_(queries_spent) {}

  int64_t queries_spent() const { return queries_spent_; }

 private:
  int64_t queries_spent_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) Fail(kind, message);
}

}  // namespace xglk

#endif  // XGLK_ERROR_H_
