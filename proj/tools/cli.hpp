// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace aes3d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `aes3d` tool; returns the process exit code.
int run(int argc, const char* const* argv);

} // namespace aes3d::cli
