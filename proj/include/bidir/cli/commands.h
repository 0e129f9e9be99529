// Copyright 2026 The bidirnmt Authors. All Rights Reserved.
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

#include <ostream>

namespace bidir::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitDataError = 2;
inline constexpr int kExitModelError = 3;

// Entry point of the bidirnmt tool: learn-bpe, apply-bpe, train, translate,
// score and stats. Never throws; errors become messages on `err` and a
// nonzero exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bidir::cli
