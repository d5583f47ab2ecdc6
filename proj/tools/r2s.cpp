// Copyright 2026 The R2SNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "r2s/cli.hpp"

int main(int argc, char** argv) { return r2s::cli::run(argc, argv); }
