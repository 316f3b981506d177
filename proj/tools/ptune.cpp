// Copyright 2026 The ptune Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ptune/cli.hpp"

int main(int argc, char** argv) { return ptune::run_cli(argc, argv); }
