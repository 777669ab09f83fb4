#include <string>
#include <vector>

#include "sasr/cli.hpp"

int main(int argc, char** argv) {
  return sasr::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
