#include <string>
#include <vector>

#include "cli.h"

int main(int argc, char** argv) {
  return crmltr::cli::run(std::vector<std::string>(argv, argv + argc));
}
