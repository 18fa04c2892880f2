// SPDX-License-Identifier: Apache-2.0
#include "vete/cli.hpp"

int main(int argc, char** argv) { return vete::cli::run(argc, argv); }
