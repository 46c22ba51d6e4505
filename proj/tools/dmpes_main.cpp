#include <clocale>
#include <string>
#include <vector>

#include "dmpes/cli.hpp"

int main(int argc, char** argv) {
  std::setlocale(LC_ALL, "C");
  std::vector<std::string> args(argv + 1, argv + argc);
  return dmpes::run_cli(args);
}
