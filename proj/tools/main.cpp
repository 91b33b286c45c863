#include "promptevo/cli.hpp"

int main(int argc, char** argv) {
  return promptevo::run_cli(argc, argv);
}
