// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace mvitac::cli {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDiverged = 3;

// Runs one subcommand (synth, pretrain, probe, export-embeddings) and returns
// the process exit code. Messages go to `out` and `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace mvitac::cli
