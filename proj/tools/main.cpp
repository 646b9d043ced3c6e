// SPDX-License-Identifier: Apache-2.0
#include "winrest/cli.hpp"

int main(int argc, char** argv) { return winrest::run_cli(argc, argv); }
