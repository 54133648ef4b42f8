// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "aes3d/hash.hpp"

#include <fmt/format.h>

namespace aes3d {

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

} // namespace aes3d
