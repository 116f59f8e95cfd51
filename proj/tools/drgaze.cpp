#include <iostream>

#include "drgaze/cli.hpp"
#include "drgaze/tape.hpp"

int main(int argc, char** argv) {
#ifdef DRGAZE_INJECT_CONV_BIAS_FAULT
  drgaze::set_backward_fault(drgaze::BackwardFault::kConvBias);
#endif
  return drgaze::cli::run(argc, argv, std::cout, std::cerr);
}
