#include "vlab/cli.hpp"

#include <iostream>

int main(int argc, char ** argv)
{
  return vlab::cli::run_cli(argc, argv, std::cout, std::cerr);
}
