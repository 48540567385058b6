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

#include "xglk/error.h"

namespace xglk {

const char* ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape:
      return "shape";
    case ErrorKind::kIndex:
      return "index";
    case ErrorKind::kContract:
      return "contract";
    case ErrorKind::kNumeric:
      return "numeric";
    case ErrorKind::kSpec:
      return "spec";
    case ErrorKind::kFormat:
      return "format";
    case ErrorKind::kTraining:
      return "training";
    case ErrorKind::kInapplicable:
      return "inapplicable";
    case ErrorKind::kDegenerate:
      return "degenerate";
    case ErrorKind::kPolicy:
      return "policy";
    case ErrorKind::kProtocol:
      return "protocol";
    case ErrorKind::kBudget:
      return "budget";
    case ErrorKind::kPrecondition:
      return "precondition";
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kIo:
      return "io";
  }
  return "unknown";
}

}  // namespace xglk
