// SPDX-License-Identifier: Apache-2.0
// CLI entry point (subcommands filled in as modules land).
#include <cstdio>

int main() {
  std::puts("anytsr: under construction");
  return 0;
}
