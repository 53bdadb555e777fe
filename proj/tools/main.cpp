#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"

int main(int argc, char** argv) {
  // Activation buffers are large and short-lived; without this glibc maps and
  // unmaps them on every step and page faults dominate.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
  return climdiff::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
