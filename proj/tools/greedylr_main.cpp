#include "greedylr/commands.hpp"

int main(int argc, char** argv) {
  return greedylr::run_cli({argv + 1, argv + argc});
}
