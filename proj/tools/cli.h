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

#ifndef XGLK_TOOLS_CLI_H_
#define XGLK_TOOLS_CLI_H_

#include <iosfwd>

namespace xglk {

// Entry point of the xglk command line. Returns the process exit status:
// 0 on success, 1 when an experiment fails, 2 on usage errors.
int CliMain(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xglk

#endif  // XGLK_TOOLS_CLI_H_
