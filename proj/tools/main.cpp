// Copyright Contributors to the aes3d project
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return aes3d::cli::run(argc, argv); }
