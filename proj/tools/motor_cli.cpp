// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#include "motor/cli.hpp"

int main(int argc, char** argv) { return motor::cli::run(argc, argv); }
